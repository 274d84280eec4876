"""Per-iteration optimization traces and their CSV form."""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BASE_COLUMNS = ("iter", "cpu_ms", "evals", "E", "R", "L_cont", "L_crofton", "area")


class Trace:
    def __init__(self, extra_columns=()):
        self.columns = BASE_COLUMNS + tuple(extra_columns)
        self.rows: list[dict] = []

    def append(self, **row):
        missing = set(self.columns) - set(row)
        if missing:
            raise KeyError(f"trace row lacks {sorted(missing)}")
        self.rows.append({c: row[c] for c in self.columns})

    def __len__(self):
        return len(self.rows)

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=np.float64)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.columns)
            for r in self.rows:
                writer.writerow([_fmt(r[c]) for c in self.columns])

    @classmethod
    def read_csv(cls, path) -> "Trace":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            t = cls(extra_columns=header[len(BASE_COLUMNS):])
            for line in reader:
                t.rows.append({c: float(v) for c, v in zip(header, line)})
        return t


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    return repr(float(v))


class CpuClock:
    """CPU time of the calling thread in milliseconds, pausable around I/O.

    Per-thread so that concurrent sweep points do not bill each other.
    """

    def __init__(self):
        self._start = time.thread_time()
        self._paused = 0.0
        self._pause_at = None

    def pause(self):
        self._pause_at = time.thread_time()

    def resume(self):
        if self._pause_at is not None:
            self._paused += time.thread_time() - self._pause_at
            self._pause_at = None

    def ms(self) -> float:
        return 1e3 * (time.thread_time() - self._start - self._paused)


@dataclass
class RunResult:
    mask: np.ndarray
    trace: Trace
    status: str
    energy: float
    iterations: int
    evaluations: int
    cpu_ms: float
    history: list = field(default_factory=list)

    def __iter__(self):
        yield self.mask
        yield self.trace


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
