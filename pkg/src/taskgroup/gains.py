"""Transfer-gain containers, aggregation over training steps and file formats.

Indexing convention everywhere: entry ``(i, j)`` is the gain *from* source
task ``i`` *to* target task ``j``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, NumericalError, StructuralError

__all__ = [
    "GainMatrix",
    "StepGainRecord",
    "PairAccumulator",
    "accumulate",
    "finalize",
    "group_gain_to_task",
    "group_to_group_gain",
    "read_gain_csv",
    "write_gain_csv",
    "read_record_log",
    "write_record_log",
]


@dataclass(frozen=True, eq=False)
class GainMatrix:
    """Cumulative transfer gains between ``n`` named tasks.

    ``counts`` holds the number of steps each pair was observed in, when the
    matrix came out of :func:`finalize`; it is ``None`` for matrices built by
    hand or read from CSV.
    """

    names: tuple[str, ...]
    values: np.ndarray
    counts: np.ndarray | None = None

    def __post_init__(self):
        names = tuple(str(s) for s in self.names)
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise StructuralError(f"gain matrix must be square, got shape {values.shape}")
        n = values.shape[0]
        if n < 1:
            raise StructuralError("gain matrix needs at least one task")
        if len(names) != n:
            raise StructuralError(f"{len(names)} names for {n} tasks")
        if any(not s for s in names) or len(set(names)) != n:
            raise StructuralError("task names must be unique and non-empty")
        if not np.all(np.isfinite(values)):
            raise NumericalError("gain matrix contains non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "values", values)
        if self.counts is not None:
            counts = np.array(self.counts, dtype=np.int64)
            if counts.shape != values.shape:
                raise StructuralError("counts shape differs from values shape")
            counts.setflags(write=False)
            object.__setattr__(self, "counts", counts)

    @classmethod
    def from_array(cls, values, names: Sequence[str] | None = None) -> "GainMatrix":
        values = np.asarray(values, dtype=np.float64)
        if names is None:
            names = [f"t{i}" for i in range(values.shape[0])]
        return cls(tuple(names), values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def uncovered(self) -> list[tuple[int, int]]:
        """Pairs that were never observed (and were filled with 0)."""
        if self.counts is None:
            return []
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.counts == 0))]

    def coverage_summary(self) -> dict:
        total = self.n * self.n
        missing = self.uncovered
        return {
            "pairs": total,
            "covered": total - len(missing),
            "uncovered": [[self.names[i], self.names[j]] for i, j in missing],
        }

    def scaled(self, alpha: float) -> "GainMatrix":
        return GainMatrix(self.names, alpha * self.values)

    def permuted(self, perm: Sequence[int]) -> "GainMatrix":
        """Reorder tasks so that new task ``k`` is old task ``perm[k]``."""
        perm = list(perm)
        if sorted(perm) != list(range(self.n)):
            raise StructuralError("not a permutation of the task indices")
        return GainMatrix(
            tuple(self.names[p] for p in perm), self.values[np.ix_(perm, perm)]
        )

    def index(self, name: str) -> int:
        return self.names.index(name)

    def __eq__(self, other):
        if not isinstance(other, GainMatrix):
            return NotImplemented
        return self.names == other.names and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"GainMatrix(n={self.n}, names={list(self.names)})"


@dataclass
class StepGainRecord:
    """Gains measured at a single training step.

    ``skipped`` lists pairs whose lookahead denominator fell below the loss
    floor; they are neither observed nor silently zeroed.
    """

    step: int
    pair_gains: dict[tuple[int, int], float]
    observed: set[tuple[int, int]] = field(default_factory=set)
    skipped: set[tuple[int, int]] = field(default_factory=set)

    def __post_init__(self):
        if int(self.step) < 1:
            raise StructuralError(f"step must be >= 1, got {self.step}")
        self.step = int(self.step)
        self.pair_gains = {(int(i), int(j)): float(v) for (i, j), v in self.pair_gains.items()}
        self.observed = {(int(i), int(j)) for i, j in self.observed} | set(self.pair_gains)
        self.skipped = {(int(i), int(j)) for i, j in self.skipped}
        for key, v in self.pair_gains.items():
            if not math.isfinite(v):
                raise NumericalError(f"non-finite gain {v} for pair {key} at step {self.step}")

    def to_json(self) -> str:
        gains = [[i, j, v] for (i, j), v in sorted(self.pair_gains.items())]
        obj = {"step": self.step, "gains": gains}
        if self.skipped:
            obj["skipped"] = [list(p) for p in sorted(self.skipped)]
        return json.dumps(obj, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "StepGainRecord":
        obj = json.loads(line)
        gains = {(int(i), int(j)): float(v) for i, j, v in obj["gains"]}
        skipped = {(int(i), int(j)) for i, j in obj.get("skipped", [])}
        return cls(int(obj["step"]), gains, set(gains), skipped)


class PairAccumulator:
    """Running per-pair sums and observation counts."""

    def __init__(self, n: int):
        if n < 1:
            raise StructuralError("accumulator needs n >= 1")
        self.n = n
        self.sums = np.zeros((n, n))
        self.counts = np.zeros((n, n), dtype=np.int64)

    def copy(self) -> "PairAccumulator":
        other = PairAccumulator(self.n)
        other.sums = self.sums.copy()
        other.counts = self.counts.copy()
        return other


def accumulate(acc: PairAccumulator, rec: StepGainRecord) -> PairAccumulator:
    """Add one step's observations to ``acc`` (in place) and return it."""
    n = acc.n
    for i, j in rec.observed:
        if not (0 <= i < n and 0 <= j < n):
            raise StructuralError(f"pair ({i}, {j}) out of range for n={n}")
    for (i, j), v in rec.pair_gains.items():
        acc.sums[i, j] += v
        acc.counts[i, j] += 1
    return acc


def finalize(acc: PairAccumulator, names: Sequence[str] | None = None) -> GainMatrix:
    """Per-pair mean over observed steps; unobserved pairs become 0."""
    values = np.zeros((acc.n, acc.n))
    seen = acc.counts > 0
    values[seen] = acc.sums[seen] / acc.counts[seen]
    if names is None:
        names = [f"t{i}" for i in range(acc.n)]
    return GainMatrix(tuple(names), values, acc.counts.copy())


def _check_tasks(S: GainMatrix, tasks: Iterable[int], what: str) -> list[int]:
    idx = sorted(set(int(i) for i in tasks))
    if not idx:
        raise DomainError(f"{what} must be non-empty")
    if idx[0] < 0 or idx[-1] >= S.n:
        raise StructuralError(f"{what} has task index out of range")
    return idx


def group_gain_to_task(S: GainMatrix, A: Iterable[int], j: int) -> float:
    """Average gain from the members of ``A`` into task ``j``."""
    rows = _check_tasks(S, A, "source set")
    if not 0 <= j < S.n:
        raise StructuralError(f"target index {j} out of range")
    return float(np.mean(S.values[rows, j]))


def group_to_group_gain(S: GainMatrix, A: Iterable[int], B: Iterable[int]) -> float:
    """Total gain from group ``A`` summed over the targets in ``B``."""
    A = _check_tasks(S, A, "source set")
    cols = _check_tasks(S, B, "target set")
    return float(sum(group_gain_to_task(S, A, j) for j in cols))


# -- file formats ----------------------------------------------------------


def write_gain_csv(S: GainMatrix, path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["task", *S.names])
    for name, row in zip(S.names, S.values):
        writer.writerow([name, *(repr(float(v)) for v in row)])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")


def read_gain_csv(path) -> GainMatrix:
    text = Path(path).read_text(encoding="utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r]
    if not rows or not rows[0] or rows[0][0] != "task":
        raise StructuralError(f"{path}: header must start with 'task'")
    names = rows[0][1:]
    body = rows[1:]
    if len(body) != len(names):
        raise StructuralError(f"{path}: {len(body)} rows for {len(names)} tasks")
    values = []
    for k, row in enumerate(body):
        if row[0] != names[k]:
            raise StructuralError(f"{path}: row {k} is '{row[0]}', expected '{names[k]}'")
        if len(row) != len(names) + 1:
            raise StructuralError(f"{path}: row '{row[0]}' has {len(row) - 1} values")
        try:
            values.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise StructuralError(f"{path}: {exc}") from None
    return GainMatrix(tuple(names), np.array(values))


def write_record_log(records: Iterable[StepGainRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def read_record_log(path) -> list[StepGainRecord]:
    with open(path, encoding="utf-8") as fh:
        return [StepGainRecord.from_json(line) for line in fh if line.strip()]
