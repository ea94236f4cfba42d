"""Result bundles: one CSV per curve plus a YAML summary."""

import logging
import os
from typing import Any, Dict, List, Sequence, Tuple

import attr
import numpy as np
import yaml
from attr import dataclass

from hetprobe.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

SUMMARY_FILE = "summary.yml"
CSV_FORMAT = "%.17g"


@dataclass
class Table:
    columns: Tuple[str, ...]
    data: np.ndarray
    comments: Tuple[str, ...] = ()

    def __attrs_post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, dtype=float))
        if self.data.shape[1] != len(self.columns):
            raise InvalidArgumentError(
                f"table has {self.data.shape[1]} columns but {len(self.columns)} names"
            )

    @classmethod
    def from_columns(cls, columns: Dict[str, Sequence[float]], comments: Sequence[str] = ()) -> "Table":
        names = tuple(columns)
        data = np.column_stack([np.asarray(columns[name], dtype=float) for name in names])
        return cls(columns=names, data=data, comments=tuple(comments))

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]


def to_plain(value: Any) -> Any:
    """Turn numpy scalars, arrays and tuples into YAML-safe Python values."""
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_plain(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


@dataclass
class ResultBundle:
    scenario: str
    tables: Dict[str, Table] = attr.ib(factory=dict)
    summary: Dict[str, Any] = attr.ib(factory=dict)
    provenance: Dict[str, Any] = attr.ib(factory=dict)

    @property
    def passed(self) -> bool:
        checks = self.summary.get("checks", {})
        return all(bool(v) for v in checks.values())

    def table_path(self, out_dir: str, name: str) -> str:
        return os.path.join(out_dir, f"{self.scenario}_{name}.csv")

    def write(self, out_dir: str) -> List[str]:
        os.makedirs(out_dir, exist_ok=True)
        written = []
        for name, table in self.tables.items():
            path = self.table_path(out_dir, name)
            write_table(path, table, header=[f"hetprobe {self.scenario}: {name}"])
            written.append(path)

        path = os.path.join(out_dir, SUMMARY_FILE)
        document = {
            "scenario": self.scenario,
            "tables": {name: os.path.basename(self.table_path(out_dir, name)) for name in self.tables},
            "summary": to_plain(self.summary),
            "provenance": to_plain(self.provenance),
        }
        with open(path, "w") as file:
            yaml.safe_dump(document, file, sort_keys=False, default_flow_style=False)
        written.append(path)
        logger.info("Wrote %d files to %s", len(written), out_dir)
        return written


def write_table(path: str, table: Table, header: Sequence[str] = ()) -> None:
    comments = [*header, *table.comments]
    with open(path, "w") as file:
        for line in comments:
            file.write(f"# {line}\n")
        file.write(",".join(table.columns) + "\n")
        np.savetxt(file, table.data, fmt=CSV_FORMAT, delimiter=",")


def read_table(path: str) -> Table:
    comments = []
    columns = None
    with open(path, "r") as file:
        for line in file:
            if line.startswith("#"):
                comments.append(line[1:].strip())
                continue
            columns = tuple(name.strip() for name in line.strip().split(","))
            break
        if columns is None:
            raise InvalidArgumentError(f"{path} has no column header")
        data = np.loadtxt(file, delimiter=",", ndmin=2)
    if data.size == 0:
        data = np.empty((0, len(columns)))
    return Table(columns=columns, data=data, comments=tuple(comments))
