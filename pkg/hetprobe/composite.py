from typing import List

from hetprobe.bundle import ResultBundle, Table
from hetprobe.config import ScenarioConfig
from hetprobe.session import RunListener


class CompositeRunListener(RunListener):
    def __init__(self, listeners: List[RunListener]):
        self.listeners = listeners

    def on_run_start(self, cfg: ScenarioConfig):
        for listener in self.listeners:
            listener.on_run_start(cfg)

    def on_table(self, name: str, table: Table):
        for listener in self.listeners:
            listener.on_table(name, table)

    def on_summary(self, bundle: ResultBundle):
        for listener in self.listeners:
            listener.on_summary(bundle)

    def on_error(self, e: Exception):
        for listener in self.listeners:
            listener.on_error(e)

    def on_run_end(self, exit_code: int):
        for listener in self.listeners:
            listener.on_run_end(exit_code)
