import logging

from hetprobe.bundle import ResultBundle, Table
from hetprobe.config import ScenarioConfig, dump_config
from hetprobe.session import RunListener


class LoggingRunListener(RunListener):
    def __init__(self):
        self.logger = logging.getLogger("hetprobe-session")

    def on_run_start(self, cfg: ScenarioConfig):
        self.logger.info("Scenario %s started. Config: %s", cfg.scenario, dump_config(cfg))

    def on_table(self, name: str, table: Table):
        self.logger.info("Table %s: %d rows, columns %s", name, table.data.shape[0], ", ".join(table.columns))

    def on_summary(self, bundle: ResultBundle):
        for check, passed in bundle.summary.get("checks", {}).items():
            if passed:
                self.logger.info("Check %s passed", check)
            else:
                self.logger.warning("Check %s failed", check)

    def on_error(self, e: Exception):
        self.logger.exception(e)

    def on_run_end(self, exit_code: int):
        self.logger.info("Run finished with exit code %d", exit_code)
