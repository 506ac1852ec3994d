"""Run artifacts: tick CSVs, usage dumps, logs, anomaly records.

Everything written is byte-deterministic for a given (config, seed): floats
are formatted with fixed precision and rows follow the simulation order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

TICKS_HEADER = [
    "tick", "idle", "sta", "ta", "pa", "da", "overloaded",
    "migrations_attempted", "migrations_completed", "collisions",
    "cpu_used_ratio", "mem_used_ratio", "cpu_req_ratio", "mem_req_ratio",
    "stc_mb",
]


@dataclass
class TickRecord:
    tick: int
    idle: int = 0
    sta: int = 0
    ta: int = 0
    pa: int = 0
    da: int = 0
    overloaded: int = 0
    migrations_attempted: int = 0
    migrations_completed: int = 0
    collisions: int = 0
    cpu_used_ratio: float = 0.0
    mem_used_ratio: float = 0.0
    cpu_req_ratio: float = 0.0
    mem_req_ratio: float = 0.0
    stc_mb: float = 0.0

    def row(self) -> list[str]:
        return [
            str(self.tick), str(self.idle), str(self.sta), str(self.ta),
            str(self.pa), str(self.da), str(self.overloaded),
            str(self.migrations_attempted), str(self.migrations_completed),
            str(self.collisions),
            f"{self.cpu_used_ratio:.6f}", f"{self.mem_used_ratio:.6f}",
            f"{self.cpu_req_ratio:.6f}", f"{self.mem_req_ratio:.6f}",
            f"{self.stc_mb:.3f}",
        ]


class RunOutputs:
    """Owns the output tree: logs/<run>.log, logs/<run>-error.log,
    logs/<run>-ticks.csv and usage/<run>-<tick>.csv dumps."""

    def __init__(self, output_dir: Path, run_name: str):
        self.output_dir = Path(output_dir)
        self.run_name = run_name
        self.logs_dir = self.output_dir / "logs"
        self.usage_dir = self.output_dir / "usage"
        self.logs_dir.mkdir(parents=True, exist_ok=True)
        self.usage_dir.mkdir(parents=True, exist_ok=True)
        self._log = open(self.logs_dir / f"{run_name}.log", "w", encoding="utf-8")
        self._error_log = open(self.logs_dir / f"{run_name}-error.log", "w", encoding="utf-8")
        self._ticks_file = open(self.logs_dir / f"{run_name}-ticks.csv", "w",
                                encoding="utf-8", newline="")
        self._ticks = csv.writer(self._ticks_file)
        self._ticks.writerow(TICKS_HEADER)
        self._trace_file = None

    @property
    def ticks_path(self) -> Path:
        return self.logs_dir / f"{self.run_name}-ticks.csv"

    def log(self, line: str) -> None:
        self._log.write(line + "\n")

    def error(self, line: str) -> None:
        self._error_log.write(line + "\n")

    def message_trace_writer(self):
        if self._trace_file is None:
            self._trace_file = open(self.logs_dir / f"{self.run_name}-messages.log",
                                    "w", encoding="utf-8")
        return lambda line: self._trace_file.write(line + "\n")

    def write_tick(self, record: TickRecord) -> None:
        self._ticks.writerow(record.row())

    def dump_usage(self, tick: int, rows: list[tuple]) -> None:
        """Per-node dump: node id, class, then used/required per resource."""
        path = self.usage_dir / f"{self.run_name}-{tick}.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["node", "class", "cpu_used", "mem_used",
                             "cpu_required", "mem_required"])
            for row in rows:
                writer.writerow([row[0], row[1]] + [f"{v:.6f}" for v in row[2:]])

    def close(self) -> None:
        for handle in (self._log, self._error_log, self._ticks_file, self._trace_file):
            if handle is not None:
                handle.close()

    def __enter__(self) -> "RunOutputs":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
