"""Multi-trial convergence experiments and their CSV output."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from diagest import bounds
from diagest.diagpp import DiagppConfig, diagpp, projection_only
from diagest.estimators import estimate_diagonal
from diagest.exceptions import ConfigError, PreconditionError
from diagest.oracle import (
    EigenFactorization,
    LinearOperator,
    PowerLawSpectrumSpec,
    generate_power_law_psd,
    load_matrix_market,
    make_dense_operator,
    make_identity_operator,
)
from diagest.probes import DEFAULT_SEED, ProbeStream

log = logging.getLogger(__name__)

ESTIMATORS = ("rademacher", "gaussian", "diagpp", "projection-only")
MIN_BUDGET = {"rademacher": 1, "gaussian": 1, "diagpp": 3, "projection-only": 2}
DEFAULT_PERCENTILES = (50.0, 67.0, 80.0, 90.0)
DEFAULT_S_GRID = tuple(2 ** k for k in range(10))
CSV_HEADER = ("s", "percentile", "relative_error", "bound_value", "bound_valid")
REFERENCE_CHUNK = 512


# ---------------------------------------------------------------------------
# Matrix sources


@dataclass
class LoadedMatrix:
    op: LinearOperator
    label: str
    dense: Optional[np.ndarray] = None
    eig: Optional[EigenFactorization] = None


def load_matrix(source: str) -> LoadedMatrix:
    """Resolve a matrix source string.

    Accepted forms: ``powerlaw:n,c`` or ``powerlaw:n,c,seed``,
    ``identity:n``, a ``.mtx`` Matrix Market path, a ``.npy`` array, or any
    other path read with ``numpy.loadtxt`` as whitespace-separated dense
    entries.
    """
    if source.startswith("powerlaw:"):
        parts = source.split(":", 1)[1].split(",")
        if len(parts) not in (2, 3):
            raise ValueError(f"expected powerlaw:n,c[,seed], got {source!r}")
        n, c = int(parts[0]), float(parts[1])
        seed = int(parts[2]) if len(parts) == 3 else 0
        A, eig = generate_power_law_psd(PowerLawSpectrumSpec(n, c, seed))
        return LoadedMatrix(make_dense_operator(A), source, dense=A, eig=eig)
    if source.startswith("identity:"):
        n = int(source.split(":", 1)[1])
        return LoadedMatrix(make_identity_operator(n), source)
    path = Path(source)
    if not path.exists():
        raise FileNotFoundError(f"matrix file not found: {source}")
    if path.suffix == ".mtx":
        op = load_matrix_market(path)
        dense = None if op.is_sparse else op.to_dense()
        return LoadedMatrix(op, path.name, dense=dense)
    M = np.load(path) if path.suffix == ".npy" else np.loadtxt(path, ndmin=2)
    return LoadedMatrix(make_dense_operator(M), path.name, dense=np.asarray(M, dtype=float))


@dataclass
class ReferenceQuantities:
    """Ground truth from ``n`` canonical-basis matvecs (kept off the trial ledger)."""

    diag: np.ndarray
    row_sq: np.ndarray
    matvecs: int

    @property
    def row_ratios(self) -> np.ndarray:
        return bounds.ratios_from_rows(self.diag, self.row_sq)[0]

    @property
    def full_ratio(self) -> float:
        return bounds.ratios_from_rows(self.diag, self.row_sq)[1]

    @property
    def off_row_mass(self) -> np.ndarray:
        return np.maximum(self.row_sq - self.diag ** 2, 0.0)


def reference_quantities(op: LinearOperator, chunk: int = REFERENCE_CHUNK) -> ReferenceQuantities:
    """Exact diagonal and squared row norms of a symmetric operator."""
    n = op.n
    diag = np.empty(n)
    row_sq = np.empty(n)
    start = op.matvec_count
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        E = np.zeros((n, hi - lo))
        E[np.arange(lo, hi), np.arange(hi - lo)] = 1.0
        cols = op.apply_block(E)
        diag[lo:hi] = cols[np.arange(lo, hi), np.arange(hi - lo)]
        row_sq[lo:hi] = np.einsum("ij,ij->j", cols, cols)
    return ReferenceQuantities(diag=diag, row_sq=row_sq, matvecs=op.matvec_count - start)


# ---------------------------------------------------------------------------
# Experiments


@dataclass
class ExperimentSpec:
    matrix_source: str
    estimator: str = "rademacher"
    s_grid: Sequence[int] = DEFAULT_S_GRID
    trials: int = 50
    percentiles: Sequence[float] = DEFAULT_PERCENTILES
    element: Optional[int] = None
    master_seed: int = DEFAULT_SEED
    workers: int = 1

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"unknown estimator {self.estimator!r}; choose from {ESTIMATORS}")
        self.s_grid = tuple(int(s) for s in self.s_grid)
        if not self.s_grid or any(s < 1 for s in self.s_grid):
            raise ConfigError("s_grid must be a non-empty list of positive integers")
        if any(b <= a for a, b in zip(self.s_grid, self.s_grid[1:])):
            raise ConfigError(f"s_grid must be strictly ascending, got {self.s_grid}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        self.percentiles = tuple(float(p) for p in self.percentiles)
        if any(not 0 < p <= 100 for p in self.percentiles):
            raise ConfigError("percentiles must lie in (0, 100]")


@dataclass
class ErrorRecord:
    s: int
    percentile: float
    relative_error: float
    bound_value: Optional[float] = None
    bound_valid: bool = False
    absolute: bool = field(default=False, compare=False)


def nearest_rank(values: Sequence[float], p: float) -> float:
    """Nearest-rank percentile: the ``ceil(p/100 * N)``-th smallest value."""
    ordered = sorted(values)
    if not ordered:
        raise ValueError("empty sample")
    rank = max(1, math.ceil(p / 100.0 * len(ordered)))
    return float(ordered[min(rank, len(ordered)) - 1])


def run_estimator(name: str, op: LinearOperator, s: int, stream: ProbeStream) -> np.ndarray:
    if name in ("rademacher", "gaussian"):
        return estimate_diagonal(op, s, stream).values
    if name == "diagpp":
        return diagpp(op, DiagppConfig(s), stream).diagonal
    if name == "projection-only":
        return projection_only(op, s, stream).diagonal
    raise ConfigError(f"unknown estimator {name!r}")


def _trial_stream(spec: ExperimentSpec, n: int, s: int, trial: int) -> ProbeStream:
    dist = "gaussian" if spec.estimator == "gaussian" else "rademacher"
    return ProbeStream(n, dist, spec.master_seed, trial_index=trial, key=(s,))


def trial_errors(spec: ExperimentSpec, op: LinearOperator, ref: ReferenceQuantities,
                 grid: Sequence[int]) -> tuple[np.ndarray, bool]:
    """Error for every ``(s, trial)``; rows follow ``grid``, columns trial index."""
    truth = ref.diag
    absolute = False
    if spec.element is not None:
        i = spec.element
        if not 0 <= i < op.n:
            raise PreconditionError(f"element index {i} outside 0..{op.n - 1}")
        scale = abs(truth[i])
        if scale == 0:
            absolute = True
            scale = 1.0
            log.warning("A_ii = 0 for element %d: reporting absolute error", i)
    else:
        scale = float(np.linalg.norm(truth))
        if scale == 0:
            absolute = True
            scale = 1.0
            log.warning("diagonal is zero: reporting absolute error")

    def one(job):
        s, t = job
        est = run_estimator(spec.estimator, op, s, _trial_stream(spec, op.n, s, t))
        if spec.element is not None:
            return abs(est[spec.element] - truth[spec.element]) / scale
        return float(np.linalg.norm(est - truth)) / scale

    jobs = [(s, t) for s in grid for t in range(spec.trials)]
    if spec.workers > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            flat = list(pool.map(one, jobs))
    else:
        flat = [one(job) for job in jobs]
    return np.asarray(flat, dtype=float).reshape(len(grid), spec.trials), absolute


def bound_overlay(spec: ExperimentSpec, ref: ReferenceQuantities, s: int, p: float,
                  absolute: bool) -> tuple[Optional[float], bool]:
    """Theoretical error level at ``s`` queries for ``delta = 1 - p/100``."""
    delta = 1.0 - p / 100.0
    if not 0 < delta < 1:
        return None, False
    n = ref.diag.shape[0]
    if spec.estimator in ("rademacher", "gaussian"):
        if spec.element is not None:
            i = spec.element
            ratio = ref.off_row_mass[i] if absolute else ref.row_ratios[i]
            union_n = 1
        else:
            ratio = float(np.sum(ref.off_row_mass)) if absolute else ref.full_ratio
            union_n = n
        if not math.isfinite(ratio):
            return None, False
        value = bounds.implied_eps(spec.estimator, s, delta, n=union_n, ratio=ratio)
        if spec.estimator == "gaussian":
            return value, s >= bounds.gaussian_min_valid_s(union_n, delta)
        return value, True
    if spec.estimator == "diagpp" and spec.element is None and not absolute:
        t = float(np.sum(ref.diag)) / float(np.linalg.norm(ref.diag))
        if t >= 1:
            return bounds.implied_eps_diagpp(s, delta, n, t), True
    return None, False


def run_experiment(spec: ExperimentSpec, loaded: Optional[LoadedMatrix] = None) -> list[ErrorRecord]:
    """Run every ``(s, trial)`` pair and summarise each ``s`` by percentiles.

    Grid points below the estimator's minimum budget (3 for Diag++, 2 for
    projection-only) are skipped with a warning.
    """
    loaded = loaded or load_matrix(spec.matrix_source)
    op = loaded.op
    ref = reference_quantities(op)
    grid = [s for s in spec.s_grid if s >= MIN_BUDGET[spec.estimator]]
    skipped = [s for s in spec.s_grid if s < MIN_BUDGET[spec.estimator]]
    if skipped:
        log.warning("skipping s=%s: below the %s minimum budget", skipped, spec.estimator)
    if not grid:
        raise ConfigError("no s values left in the grid for this estimator")

    errors, absolute = trial_errors(spec, op, ref, grid)
    records = []
    for row, s in zip(errors, grid):
        for p in sorted(spec.percentiles):
            bound_value, valid = bound_overlay(spec, ref, s, p, absolute)
            records.append(ErrorRecord(s=s, percentile=p, relative_error=nearest_rank(row, p),
                                       bound_value=bound_value, bound_valid=valid, absolute=absolute))
    return records


def percentile_table(errors: np.ndarray, percentiles: Sequence[float]) -> np.ndarray:
    """``(len(grid), len(percentiles))`` nearest-rank summary of ``trial_errors`` output."""
    return np.array([[nearest_rank(row, p) for p in percentiles] for row in errors])


def emit_csv(records: Sequence[ErrorRecord], path: Union[str, Path]) -> Path:
    """Write records sorted by ``(s, percentile)`` with round-trip float text."""
    if not records:
        raise ValueError("no records to write")
    path = Path(path)
    rows = sorted(records, key=lambda r: (r.s, r.percentile))
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in rows:
            writer.writerow([
                r.s,
                repr(float(r.percentile)),
                repr(float(r.relative_error)),
                "" if r.bound_value is None else repr(float(r.bound_value)),
                "true" if r.bound_valid else "false",
            ])
    return path
