"""Diag++: sketch a dominant subspace, take its diagonal exactly, estimate the rest.

The budget ``s`` is split into a sketch phase (``A R`` for a Rademacher
``R``), a projection phase (``A Q`` for the orthonormal basis ``Q``) and a
residual phase that runs the stochastic estimator on
``(I - QQ^T) A (I - QQ^T)``. The returned diagonal is

    diag(QQ^T A QQ^T) + estimate of diag((I - QQ^T) A (I - QQ^T)).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from diagest.exceptions import ConfigError, PreconditionError
from diagest.estimators import accumulate_diagonal
from diagest.oracle import LinearOperator, ResidualOperator
from diagest.probes import RADEMACHER, ProbeDistribution, ProbeStream

RANK_TOL = 1e-12

# fork labels for the two random phases of one Diag++ run
_SKETCH_LABEL = 1
_RESIDUAL_LABEL = 2


@dataclass(frozen=True)
class DiagppConfig:
    s_total: int
    split: Optional[tuple[int, int, int]] = None
    dist: ProbeDistribution = RADEMACHER

    def __post_init__(self):
        if self.s_total < 3:
            raise ConfigError(f"Diag++ needs a budget of at least 3 matvecs, got {self.s_total}")
        object.__setattr__(self, "dist", ProbeDistribution.parse(self.dist))
        if self.split is None:
            object.__setattr__(self, "split", default_split(self.s_total))
        split = tuple(int(p) for p in self.split)
        if len(split) != 3 or min(split) < 1:
            raise ConfigError(f"split must be three positive integers, got {self.split}")
        if sum(split) != self.s_total:
            raise ConfigError(f"split {split} does not sum to s_total={self.s_total}")
        object.__setattr__(self, "split", split)

    @property
    def sketch(self) -> int:
        return self.split[0]

    @property
    def projected(self) -> int:
        return self.split[1]

    @property
    def residual(self) -> int:
        return self.split[2]


def default_split(s_total: int) -> tuple[int, int, int]:
    """Equal thirds; a remainder goes to the residual phase first, then the sketch."""
    base, rem = divmod(s_total, 3)
    residual = base + (1 if rem >= 1 else 0)
    sketch = base + (1 if rem >= 2 else 0)
    return (sketch, base, residual)


@dataclass
class DiagppResult:
    diagonal: np.ndarray
    projected_part: np.ndarray
    residual_part: np.ndarray
    rank: int
    matvecs_used: int
    split_used: tuple[int, int, int]


def orthonormal_basis(Y: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Rank-revealing orthonormal basis for the columns of ``Y``.

    Uses column-pivoted Householder QR and drops directions whose ``R``
    diagonal falls below ``tol`` times the largest one. Columns come out in
    pivot order, so truncating keeps the dominant directions.
    """
    n, k = Y.shape
    if k == 0:
        return np.zeros((n, 0))
    Q, R, _ = scipy.linalg.qr(Y, mode="economic", pivoting=True)
    rdiag = np.abs(np.diag(R))
    if rdiag.size == 0 or rdiag[0] == 0.0:
        return np.zeros((n, 0))
    rank = int(np.sum(rdiag > tol * rdiag[0]))
    return Q[:, :rank]


def range_finder(op: LinearOperator, k: int, stream: ProbeStream) -> np.ndarray:
    """Orthonormal basis for ``range(A R)`` with ``R`` an ``n x k`` probe matrix.

    Costs exactly ``k`` matvecs. The probes come from ``stream`` (Diag++
    passes a Rademacher stream). Rank-deficient sketches give fewer columns,
    and ``k > n`` is allowed: the extra probes make a full-rank sketch of
    ``R^n`` more likely, which matters for small ``n``.
    """
    if k < 1:
        raise PreconditionError(f"sketch size must be at least 1, got {k}")
    R = stream.probe_matrix(k)
    return orthonormal_basis(op.apply_block(R))


def projected_diagonal(op: LinearOperator, Q: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``diag(QQ^T A QQ^T)`` from ``k`` matvecs.

    Returns the diagonal, ``T = Q^T A Q`` and the product ``AQ`` (for reuse
    by the residual operator).
    """
    k = Q.shape[1]
    if k == 0:
        return np.zeros(op.n), np.zeros((0, 0)), np.zeros((op.n, 0))
    AQ = op.apply_block(Q)
    T = Q.T @ AQ
    if op.symmetric:
        T = 0.5 * (T + T.T)
    d = np.einsum("ij,ij->i", Q @ T, Q)
    return d, T, AQ


def diagpp(op: LinearOperator, cfg: DiagppConfig, stream: ProbeStream) -> DiagppResult:
    """Run Diag++ with exactly ``cfg.s_total`` matvecs.

    If the sketch reveals fewer directions than the projection budget, the
    unspent projection matvecs move to the residual phase. If it reveals more,
    ``Q`` is truncated to its leading pivoted columns.
    """
    if stream.n != op.n:
        raise PreconditionError(f"probe length {stream.n} does not match operator dimension {op.n}")
    start = op.matvec_count
    sketch_stream = stream.fork(_SKETCH_LABEL, dist=RADEMACHER)
    residual_stream = stream.fork(_RESIDUAL_LABEL, dist=cfg.dist)

    Q = range_finder(op, cfg.sketch, sketch_stream)
    Q = Q[:, :cfg.projected]
    proj, _, AQ = projected_diagonal(op, Q)
    residual_budget = cfg.residual + (cfg.projected - Q.shape[1])

    resid_op = ResidualOperator(op, Q, AQ)
    resid = accumulate_diagonal(resid_op, residual_budget, residual_stream).extract().values

    used = op.matvec_count - start
    split_used = (cfg.sketch, Q.shape[1], residual_budget)
    return DiagppResult(diagonal=proj + resid, projected_part=proj, residual_part=resid,
                        rank=Q.shape[1], matvecs_used=used, split_used=split_used)


def projection_only(op: LinearOperator, s_total: int, stream: ProbeStream) -> DiagppResult:
    """Baseline that spends the whole budget on sketch and projection.

    Half the budget (rounded up) sketches ``A R``; the rest computes ``A Q``.
    No residual estimate is added.
    """
    if s_total < 2:
        raise ConfigError(f"projection-only needs a budget of at least 2, got {s_total}")
    start = op.matvec_count
    sketch = (s_total + 1) // 2
    Q = range_finder(op, sketch, stream.fork(_SKETCH_LABEL, dist=RADEMACHER))
    Q = Q[:, :s_total - sketch]
    proj, _, _ = projected_diagonal(op, Q)
    return DiagppResult(diagonal=proj, projected_part=proj, residual_part=np.zeros(op.n),
                        rank=Q.shape[1], matvecs_used=op.matvec_count - start,
                        split_used=(sketch, Q.shape[1], 0))
