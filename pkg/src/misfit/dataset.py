"""Data model for sparsely observed curves with a scalar outcome.

A subject contributes a handful of noisy evaluations ``values`` of its
curve at ``times`` in [0, 1], together with one outcome.  Functions and
kernels that live on the common representation grid are wrapped in
:class:`GridFunction` and :class:`GridKernel` so that quadrature always
uses the weights of the grid the values were computed on.
"""

from __future__ import annotations

import csv
import enum
import math
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DuplicateTime,
    GridMismatch,
    InconsistentOutcome,
    InvalidDataset,
    InvalidGrid,
    MalformedRow,
    TimeOutOfRange,
)

CSV_HEADER = ("subject_id", "time", "value", "outcome")


class OutcomeKind(str, enum.Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"

    @classmethod
    def parse(cls, value: "OutcomeKind | str") -> "OutcomeKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InvalidDataset(f"unknown outcome kind {value!r}") from None


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Subject:
    id: str
    times: np.ndarray
    values: np.ndarray
    outcome: float

    def __post_init__(self):
        times = _frozen(np.atleast_1d(self.times))
        values = _frozen(np.atleast_1d(self.values))
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "outcome", float(self.outcome))
        if times.ndim != 1 or times.shape != values.shape or times.size < 1:
            raise InvalidDataset(f"subject {self.id}: times and values must be equal-length, non-empty vectors")
        if np.any(times < 0.0) or np.any(times > 1.0) or not np.all(np.isfinite(times)):
            raise TimeOutOfRange(f"subject {self.id}: times must lie in [0, 1]")
        if np.any(np.diff(times) <= 0.0):
            raise DuplicateTime(f"subject {self.id}: times must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise InvalidDataset(f"subject {self.id}: values must be finite")
        if not math.isfinite(self.outcome):
            raise InvalidDataset(f"subject {self.id}: outcome must be finite")

    @property
    def m(self) -> int:
        return int(self.times.size)

    def __eq__(self, other):
        if not isinstance(other, Subject):
            return NotImplemented
        return (
            self.id == other.id
            and self.outcome == other.outcome
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


@dataclass(frozen=True)
class SparseFunctionalDataset:
    subjects: tuple
    outcome_kind: OutcomeKind = OutcomeKind.CONTINUOUS

    def __post_init__(self):
        subjects = tuple(self.subjects)
        kind = OutcomeKind.parse(self.outcome_kind)
        object.__setattr__(self, "subjects", subjects)
        object.__setattr__(self, "outcome_kind", kind)
        if len(subjects) < 2:
            raise InvalidDataset("a dataset needs at least two subjects")
        ids = [s.id for s in subjects]
        if len(set(ids)) != len(ids):
            raise InvalidDataset("subject ids must be unique")
        if kind is OutcomeKind.BINARY:
            y = self.outcomes
            if not np.all((y == 0.0) | (y == 1.0)):
                raise InvalidDataset("binary outcomes must be 0 or 1")
            missing = [c for c in (0, 1) if not np.any(y == c)]
            if missing:
                raise InvalidDataset(f"binary outcome is missing class {missing[0]}; both classes must be present")

    @property
    def n(self) -> int:
        return len(self.subjects)

    @property
    def outcomes(self) -> np.ndarray:
        return np.array([s.outcome for s in self.subjects], dtype=float)

    @property
    def counts(self) -> np.ndarray:
        return np.array([s.m for s in self.subjects], dtype=int)

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.subjects]

    def with_outcomes(self, outcomes: Sequence[float]) -> "SparseFunctionalDataset":
        """Copy of the dataset with the outcome vector replaced."""
        outcomes = list(outcomes)
        if len(outcomes) != self.n:
            raise InvalidDataset("outcome vector length does not match the number of subjects")
        subjects = [Subject(s.id, s.times, s.values, y) for s, y in zip(self.subjects, outcomes)]
        return SparseFunctionalDataset(tuple(subjects), self.outcome_kind)

    def subset(self, indices: Iterable[int], relabel: bool = False) -> "SparseFunctionalDataset":
        """Select subjects by position; ``relabel`` makes ids unique for resamples with repeats."""
        chosen = []
        for pos, i in enumerate(indices):
            s = self.subjects[int(i)]
            sid = f"{s.id}#{pos}" if relabel else s.id
            chosen.append(Subject(sid, s.times, s.values, s.outcome))
        return SparseFunctionalDataset(tuple(chosen), self.outcome_kind)


@dataclass(frozen=True, eq=False)
class Grid:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = _frozen(self.points)
        wts = _frozen(self.weights)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)
        if pts.ndim != 1 or pts.size < 2 or pts.shape != wts.shape:
            raise InvalidGrid("grid needs at least two points and one weight per point")
        if np.any(np.diff(pts) <= 0) or pts[0] != 0.0 or pts[-1] != 1.0:
            raise InvalidGrid("grid points must increase strictly from 0 to 1")
        if np.any(wts < 0) or abs(wts.sum() - 1.0) > 1e-12:
            raise InvalidGrid("grid weights must be nonnegative and sum to one")

    @property
    def M(self) -> int:
        return int(self.points.size)

    def same_as(self, other: "Grid") -> bool:
        return self is other or (
            np.array_equal(self.points, other.points) and np.array_equal(self.weights, other.weights)
        )

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return self.same_as(other)

    __hash__ = None

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "w"])
            for t, w in zip(self.points, self.weights):
                writer.writerow([repr(float(t)), repr(float(w))])


def make_grid(M: int) -> Grid:
    """Equally spaced grid on [0, 1] with normalized trapezoid weights."""
    if int(M) != M or M < 2:
        raise InvalidGrid(f"grid size must be an integer >= 2, got {M!r}")
    M = int(M)
    points = np.linspace(0.0, 1.0, M)
    h = 1.0 / (M - 1)
    weights = np.full(M, h)
    weights[0] = weights[-1] = h / 2.0
    weights /= weights.sum()
    return Grid(points, weights)


def _check_grid(a: Grid, b: Grid) -> None:
    if not a.same_as(b):
        raise GridMismatch("operands live on different grids")


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values)
        object.__setattr__(self, "values", vals)
        if vals.shape != (self.grid.M,):
            raise GridMismatch(f"expected {self.grid.M} values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function values must be finite")

    def __call__(self, t) -> np.ndarray:
        """Linear interpolation off the grid."""
        return np.interp(t, self.grid.points, self.values)


@dataclass(frozen=True, eq=False)
class GridKernel:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values)
        object.__setattr__(self, "values", vals)
        M = self.grid.M
        if vals.shape != (M, M):
            raise GridMismatch(f"expected a {M}x{M} kernel, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("kernel values must be finite")
        scale = max(float(np.max(np.abs(vals))), np.finfo(float).tiny)
        if np.max(np.abs(vals - vals.T)) > 1e-10 * scale:
            raise ValueError("kernel must be symmetric")

    def diagonal(self) -> np.ndarray:
        return np.diag(self.values).copy()


def inner_product(f: GridFunction, g: GridFunction) -> float:
    """Quadrature approximation of the L2 inner product on [0, 1]."""
    _check_grid(f.grid, g.grid)
    total = 0.0
    for w, a, b in zip(f.grid.weights.tolist(), f.values.tolist(), g.values.tolist()):
        total += w * (a * b)  # a*b first so the result is exactly symmetric
    return total


def load_long_csv(path, outcome_kind="continuous", rescale_time: bool = False) -> SparseFunctionalDataset:
    """Read ``subject_id,time,value,outcome`` rows into a dataset.

    Rows may arrive in any order; each subject's observations are sorted by
    time.  With ``rescale_time`` raw times are min-max mapped onto [0, 1]
    before validation.
    """
    kind = OutcomeKind.parse(outcome_kind)
    rows: "OrderedDict[str, list[tuple[float, float]]]" = OrderedDict()
    outcomes: dict[str, float] = {}
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise MalformedRow(f"expected header {','.join(CSV_HEADER)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise MalformedRow(f"line {lineno}: expected 4 fields, got {len(row)}")
            sid = row[0].strip()
            try:
                t, x, y = (float(c) for c in row[1:])
            except ValueError:
                raise MalformedRow(f"line {lineno}: non-numeric field in {row}") from None
            if not (math.isfinite(t) and math.isfinite(x) and math.isfinite(y)) or not sid:
                raise MalformedRow(f"line {lineno}: fields must be finite and the id non-empty")
            if sid in outcomes and outcomes[sid] != y:
                raise InconsistentOutcome(f"line {lineno}: outcome changes within subject {sid}")
            outcomes[sid] = y
            rows.setdefault(sid, []).append((t, x))

    if rescale_time and rows:
        all_t = [t for obs in rows.values() for t, _ in obs]
        lo, hi = min(all_t), max(all_t)
        span = hi - lo
        if span <= 0:
            raise TimeOutOfRange("cannot rescale times: all observation times are equal")
        rows = OrderedDict(
            (sid, [(min(max((t - lo) / span, 0.0), 1.0), x) for t, x in obs]) for sid, obs in rows.items()
        )

    subjects = []
    for sid, obs in rows.items():
        obs.sort(key=lambda p: p[0])
        times = [t for t, _ in obs]
        for t in times:
            if t < 0.0 or t > 1.0:
                raise TimeOutOfRange(f"subject {sid}: time {t} outside [0, 1]")
        for a, b in zip(times, times[1:]):
            if a == b:
                raise DuplicateTime(f"subject {sid}: repeated time {a}")
        subjects.append(Subject(sid, times, [x for _, x in obs], outcomes[sid]))
    return SparseFunctionalDataset(tuple(subjects), kind)


def write_long_csv(ds: SparseFunctionalDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for s in ds.subjects:
            y = repr(s.outcome)
            for t, x in zip(s.times.tolist(), s.values.tolist()):
                writer.writerow([s.id, repr(t), repr(x), y])
