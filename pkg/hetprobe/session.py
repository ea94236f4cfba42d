from typing import Optional

from hetprobe.bundle import ResultBundle, Table
from hetprobe.config import ScenarioConfig
from hetprobe.errors import ConfigError, HetprobeError, InvalidArgumentError
from hetprobe.scenarios import run_scenario

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_FAILED = 2


class RunListener:
    def on_run_start(self, cfg: ScenarioConfig):
        pass

    def on_table(self, name: str, table: Table):
        pass

    def on_summary(self, bundle: ResultBundle):
        pass

    def on_error(self, error: Exception):
        pass

    def on_run_end(self, exit_code: int):
        pass


class RunSession:
    def __init__(self, listener: RunListener, out_dir: Optional[str] = None):
        self.listener = listener
        self.out_dir = out_dir
        self.bundle: Optional[ResultBundle] = None

    def run(self, cfg: ScenarioConfig) -> int:
        """
        Run one scenario and return the process exit code.
        """
        self.listener.on_run_start(cfg)
        try:
            self.bundle = run_scenario(cfg, self.out_dir)
        except (ConfigError, InvalidArgumentError) as e:
            self.listener.on_error(e)
            return self._finish(EXIT_INVALID)
        except HetprobeError as e:
            self.listener.on_error(e)
            return self._finish(EXIT_FAILED)

        for name, table in self.bundle.tables.items():
            self.listener.on_table(name, table)
        self.listener.on_summary(self.bundle)
        return self._finish(EXIT_OK)

    def _finish(self, exit_code: int) -> int:
        self.listener.on_run_end(exit_code)
        return exit_code
