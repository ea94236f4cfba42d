from typing import Any, Dict, Iterator, Optional, Tuple

from rich.console import Console
from rich.table import Table as RichTable

from hetprobe.bundle import ResultBundle, Table, to_plain
from hetprobe.config import ScenarioConfig
from hetprobe.errors import ConfigError, InvalidArgumentError, NumericalError
from hetprobe.session import EXIT_OK, RunListener


def _flatten(tree: Dict[str, Any], prefix: str = "") -> Iterator[Tuple[str, Any]]:
    for key, value in tree.items():
        if isinstance(value, dict):
            yield from _flatten(value, f"{prefix}{key}.")
        else:
            yield f"{prefix}{key}", value


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (list, tuple)):
        return ", ".join(_format(v) for v in value)
    return str(value)


class CLIRunListener(RunListener):
    def __init__(self, console: Optional[Console] = None):
        self.console = console or Console()

    def on_run_start(self, cfg: ScenarioConfig):
        self.console.print(f"[bold]Running {cfg.scenario}[/bold] (seed {cfg.seed}, {cfg.threads} thread(s))")

    def on_table(self, name: str, table: Table):
        self.console.print(f"  {name}: {table.data.shape[0]} rows x {len(table.columns)} columns")

    def on_summary(self, bundle: ResultBundle):
        results = RichTable(title=f"{bundle.scenario} summary")
        results.add_column("quantity")
        results.add_column("value", justify="right")
        for key, value in _flatten(to_plain({k: v for k, v in bundle.summary.items() if k != "checks"})):
            results.add_row(key, _format(value))
        self.console.print(results)

        checks = bundle.summary.get("checks", {})
        if checks:
            flags = RichTable(title="checks")
            flags.add_column("check")
            flags.add_column("result")
            for check, passed in checks.items():
                flags.add_row(check, "[green]pass[/green]" if passed else "[red]fail[/red]")
            self.console.print(flags)

    def on_error(self, e: Exception):
        if isinstance(e, ConfigError):
            self.console.print("[red]Invalid configuration:[/red]")
            for error in e.errors:
                self.console.print(f"[red]  {error}[/red]")
        elif isinstance(e, InvalidArgumentError):
            self.console.print(f"[red]{e.message}[/red]")
        elif isinstance(e, NumericalError):
            self.console.print(f"[red]Numerical failure: {e}[/red]")
        else:
            self.console.print(f"[red]Error: {type(e)}: {e}[/red]")

    def on_run_end(self, exit_code: int):
        if exit_code == EXIT_OK:
            self.console.print("[bold green]Done.[/bold green]")
