"""Sufficient query counts and the matrix constants that drive them.

All calculators return the smallest integer ``s`` that strictly exceeds the
closed-form bound (``floor(bound) + 1``, never below one). Rademacher
formulas use natural logarithms and Gaussian ones ``log2``, as derived.

The conditioning and eigenvector bounds are only known up to a constant; they
are instantiated here with the Rademacher union-bound constants,
``2 * ... * ln(2n/delta) / eps**2``, and the result records that convention.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from diagest.exceptions import PreconditionError
from diagest.oracle import EigenFactorization
from diagest.probes import GAUSSIAN, RADEMACHER, ProbeDistribution

RADEMACHER_CONVENTION = "explicit Rademacher constants: 2*(...)*ln(2n/delta)/eps^2"
RANDOMIZED_ADDITIVE_C = 1.0


class BoundKind(enum.Enum):
    ROW_DEPENDENT_ELEMENT = "row-dependent"
    RELATIVE_ELEMENT = "relative-element"
    ROW_DEPENDENT_FULL = "full"
    RELATIVE_FULL = "relative-full"
    KAPPA2 = "kappa2"
    KAPPA_D = "kappa-d"
    EIGENVECTOR_SIGMA = "eigenvector"
    DIAGPP_RELATIVE = "diagpp"


@dataclass(frozen=True)
class EpsDelta:
    eps: float
    delta: float

    def __post_init__(self):
        if not (self.eps > 0 and math.isfinite(self.eps)):
            raise PreconditionError(f"eps must be positive and finite, got {self.eps}")
        if not 0 < self.delta < 1:
            raise PreconditionError(f"delta must lie in (0, 1), got {self.delta}")


@dataclass
class QueryBoundResult:
    s: int
    value: float
    kind: BoundKind
    formula: str
    valid: bool = True
    validity_note: str = ""
    min_valid_s: Optional[int] = None
    convention: str = ""

    def __str__(self) -> str:
        lines = [f"s = {self.s}", f"bound = {self.value:.6g}", f"formula: {self.formula}",
                 f"valid: {self.valid}"]
        if self.validity_note:
            lines.append(f"note: {self.validity_note}")
        if self.min_valid_s is not None:
            lines.append(f"minimal valid s (eps=1): {self.min_valid_s}")
        if self.convention:
            lines.append(f"convention: {self.convention}")
        return "\n".join(lines)


def sufficient_s(value: float) -> int:
    """Smallest integer strictly above ``value``, floored at one."""
    if math.isnan(value):
        raise ValueError("bound value is NaN")
    if math.isinf(value):
        raise OverflowError("bound is infinite")
    return max(1, math.floor(value) + 1)


def _result(value: float, kind: BoundKind, formula: str, **kw) -> QueryBoundResult:
    return QueryBoundResult(s=sufficient_s(value), value=value, kind=kind, formula=formula, **kw)


def _log_factor(dist: ProbeDistribution, n: int, delta: float) -> float:
    if dist is RADEMACHER:
        return 2.0 * math.log(2.0 * n / delta)
    return 4.0 * math.log2(n * math.sqrt(2.0) / delta)


def _gaussian_validity(row_eps: float, n: int, delta: float) -> dict:
    """Validity flags for Gaussian bounds, which need the row-dependent eps in (0, 1]."""
    floor_s = sufficient_s(_log_factor(GAUSSIAN, n, delta))
    if row_eps <= 1.0:
        return {"valid": True, "min_valid_s": floor_s}
    return {
        "valid": False,
        "validity_note": f"Gaussian bound requires eps in (0, 1]; implied row-dependent eps = {row_eps:.6g}",
        "min_valid_s": floor_s,
    }


def bound_row_dependent(dist, ed: EpsDelta) -> QueryBoundResult:
    """Queries for ``|D_i - A_ii|^2 <= eps^2 (||A_i||^2 - A_ii^2)`` w.p. ``1 - delta``."""
    dist = ProbeDistribution.parse(dist)
    value = _log_factor(dist, 1, ed.delta) / ed.eps ** 2
    if dist is RADEMACHER:
        return _result(value, BoundKind.ROW_DEPENDENT_ELEMENT, "2 ln(2/delta) / eps^2")
    return _result(value, BoundKind.ROW_DEPENDENT_ELEMENT, "4 log2(sqrt(2)/delta) / eps^2",
                   **_gaussian_validity(ed.eps, 1, ed.delta))


def bound_relative_element(dist, ed: EpsDelta, row_ratio: float) -> QueryBoundResult:
    """Queries for ``|D_i - A_ii| <= eps |A_ii|``.

    ``row_ratio`` is ``(||A_i||^2 - A_ii^2) / A_ii^2``; zero means the row is
    diagonal and one query is exact.
    """
    dist = ProbeDistribution.parse(dist)
    if row_ratio < 0 or math.isnan(row_ratio):
        raise PreconditionError(f"row_ratio must be non-negative, got {row_ratio}")
    value = row_ratio * _log_factor(dist, 1, ed.delta) / ed.eps ** 2
    if dist is RADEMACHER:
        return _result(value, BoundKind.RELATIVE_ELEMENT, "2 r_i ln(2/delta) / eps^2")
    extra = {} if row_ratio == 0 else _gaussian_validity(ed.eps / math.sqrt(row_ratio), 1, ed.delta)
    return _result(value, BoundKind.RELATIVE_ELEMENT, "4 r_i log2(sqrt(2)/delta) / eps^2", **extra)


def bound_full_diagonal(dist, ed: EpsDelta, n: int, relative: bool = False,
                        full_ratio: Optional[float] = None) -> QueryBoundResult:
    """Union bound over all ``n`` diagonal entries.

    With ``relative=True`` the target is ``||D - A_d|| <= eps ||A_d||`` and
    ``full_ratio = (||A||_F^2 - ||A_d||^2) / ||A_d||^2`` is required.
    """
    dist = ProbeDistribution.parse(dist)
    if n < 1:
        raise PreconditionError(f"n must be positive, got {n}")
    if relative and full_ratio is None:
        raise PreconditionError("relative full-diagonal bound needs full_ratio")
    factor = _log_factor(dist, n, ed.delta)
    if not relative:
        formula = "2 ln(2n/delta) / eps^2" if dist is RADEMACHER else "4 log2(n sqrt(2)/delta) / eps^2"
        extra = {} if dist is RADEMACHER else _gaussian_validity(ed.eps, n, ed.delta)
        return _result(factor / ed.eps ** 2, BoundKind.ROW_DEPENDENT_FULL, formula, **extra)
    if full_ratio < 0 or math.isnan(full_ratio):
        raise PreconditionError(f"full_ratio must be non-negative, got {full_ratio}")
    value = full_ratio * factor / ed.eps ** 2
    if dist is RADEMACHER:
        return _result(value, BoundKind.RELATIVE_FULL, "2 R ln(2n/delta) / eps^2")
    extra = {} if full_ratio == 0 else _gaussian_validity(ed.eps / math.sqrt(full_ratio), n, ed.delta)
    return _result(value, BoundKind.RELATIVE_FULL, "4 R log2(n sqrt(2)/delta) / eps^2", **extra)


def bound_kappa(ed: EpsDelta, n: int, kappa: float, kind: Union[BoundKind, str] = BoundKind.KAPPA2) -> QueryBoundResult:
    """Relative full-diagonal bound from ``kappa_2`` or ``kappa_d`` (PSD matrices)."""
    kind = BoundKind(kind)
    if kind not in (BoundKind.KAPPA2, BoundKind.KAPPA_D):
        raise PreconditionError(f"kind must be kappa2 or kappa-d, got {kind}")
    if not kappa >= 1:
        raise PreconditionError(f"kappa must be >= 1, got {kappa}")
    value = (kappa - 1.0) * _log_factor(RADEMACHER, n, ed.delta) / ed.eps ** 2
    return _result(value, kind, "2 (kappa - 1) ln(2n/delta) / eps^2", convention=RADEMACHER_CONVENTION)


def bound_eigenvector(ed: EpsDelta, n: int, sigma_min_vv: float, lambda_norm_sq: float,
                      diag_norm_sq: float) -> QueryBoundResult:
    """Bound driven by ``sigma_min(V*V)`` and ``||lambda||^2 / ||A_d||^2``."""
    if not 0.0 <= sigma_min_vv <= 1.0:
        raise PreconditionError(f"sigma_min_vv must lie in [0, 1], got {sigma_min_vv}")
    if not (lambda_norm_sq > 0 and diag_norm_sq > 0):
        raise PreconditionError("norms must be positive")
    value = ((1.0 - sigma_min_vv ** 2) * (lambda_norm_sq / diag_norm_sq)
             * _log_factor(RADEMACHER, n, ed.delta) / ed.eps ** 2)
    return _result(value, BoundKind.EIGENVECTOR_SIGMA,
                   "2 (1 - sigma^2) (||lambda||^2/||A_d||^2) ln(2n/delta) / eps^2",
                   convention=RADEMACHER_CONVENTION)


@dataclass
class DiagppBound:
    idealized: QueryBoundResult
    randomized: QueryBoundResult

    def __str__(self) -> str:
        return (f"[idealized]\n{self.idealized}\n[randomized range finder]\n{self.randomized}\n"
                "scaling: O(1/eps)")


def diagpp_query_bound(ed: EpsDelta, n: int, trace_over_diag_norm: float,
                       c: float = RANDOMIZED_ADDITIVE_C) -> DiagppBound:
    """Diag++ budgets for ``||D - A_d|| <= eps ||A_d||``.

    ``idealized`` assumes exact top eigenvectors: ``sqrt(2) t sqrt(ln(2n/d)) / eps``
    with ``t = tr(A)/||A_d||``. ``randomized`` uses a sketched basis:
    ``4 t sqrt(ln(2n/d)) / eps + c ln(1/d)``; the additive constant ``c`` is
    unspecified in theory and defaults to one.
    """
    if not trace_over_diag_norm >= 1:
        raise PreconditionError(f"tr(A)/||A_d|| must be >= 1, got {trace_over_diag_norm}")
    root = math.sqrt(math.log(2.0 * n / ed.delta))
    ideal = math.sqrt(2.0) * trace_over_diag_norm * root / ed.eps
    rand = 4.0 * trace_over_diag_norm * root / ed.eps + c * math.log(1.0 / ed.delta)
    return DiagppBound(
        idealized=_result(ideal, BoundKind.DIAGPP_RELATIVE, "sqrt(2) t sqrt(ln(2n/delta)) / eps"),
        randomized=_result(rand, BoundKind.DIAGPP_RELATIVE, "4 t sqrt(ln(2n/delta)) / eps + c ln(1/delta)",
                           convention=f"c = {c:g}"),
    )


# ---------------------------------------------------------------------------
# Error levels implied by a bound at fixed s (used for experiment overlays)


def implied_eps(dist, s: int, delta: float, n: int = 1, ratio: float = 1.0) -> float:
    """Invert the element/union bound: error level guaranteed at ``s`` queries.

    ``n=1`` gives the single-element bound. ``ratio`` rescales a row-dependent
    eps into a relative one (``row_ratio`` or ``full_ratio``).
    """
    dist = ProbeDistribution.parse(dist)
    return math.sqrt(ratio * _log_factor(dist, n, delta) / s)


def gaussian_min_valid_s(n: int, delta: float) -> int:
    return sufficient_s(_log_factor(GAUSSIAN, n, delta))


def implied_eps_diagpp(s: int, delta: float, n: int, trace_over_diag_norm: float) -> float:
    return math.sqrt(2.0) * trace_over_diag_norm * math.sqrt(math.log(2.0 * n / delta)) / s


# ---------------------------------------------------------------------------
# Matrix diagnostics


@dataclass
class MatrixConstants:
    n: int
    row_ratios: np.ndarray
    full_ratio: float
    trace_over_diag_norm: Optional[float] = None
    kappa2: Optional[float] = None
    kappa_d: Optional[float] = None
    sigma_min_vv: Optional[float] = None
    lam: Optional[np.ndarray] = None
    hadamard_residual: Optional[float] = None
    psd_row_bound: Optional[bool] = None
    notes: list = field(default_factory=list)

    def row_ratio(self, i: int) -> float:
        return float(self.row_ratios[i])

    def summary(self, rows=()) -> str:
        def fmt(x):
            return "absent" if x is None else (f"{x:.10g}" if isinstance(x, float) else str(x))

        lines = [
            f"n = {self.n}",
            f"full_ratio = {fmt(self.full_ratio)}",
            f"kappa2 = {fmt(self.kappa2)}",
            f"kappa_d = {fmt(self.kappa_d)}",
            f"trace_over_diag_norm = {fmt(self.trace_over_diag_norm)}",
            f"sigma_min_vv = {fmt(self.sigma_min_vv)}",
            f"hadamard_residual = {fmt(self.hadamard_residual)}",
            f"psd_row_bound = {fmt(self.psd_row_bound)}",
        ]
        for i in rows:
            lines.append(f"row_ratio[{i + 1}] = {self.row_ratio(i):.10g}")
        lines.extend(f"note: {note}" for note in self.notes)
        return "\n".join(lines)


def _row_quantities(M) -> tuple[np.ndarray, np.ndarray]:
    if sp.issparse(M):
        M = sp.csr_matrix(M)
        diag = M.diagonal().astype(float)
        row_sq = np.asarray(M.multiply(M).sum(axis=1)).reshape(-1)
    else:
        M = np.asarray(M, dtype=float)
        diag = np.diag(M).copy()
        row_sq = np.einsum("ij,ij->i", M, M)
    return diag, row_sq


def ratios_from_rows(diag: np.ndarray, row_sq: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-row and full off-diagonal ratios from the diagonal and squared row norms.

    A zero diagonal entry gives ratio 0 when its row vanishes (recovered
    exactly) and ``inf`` otherwise.
    """
    off = np.maximum(row_sq - diag ** 2, 0.0)
    d2 = diag ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        rows = np.where(d2 > 0, off / np.where(d2 > 0, d2, 1.0), np.where(off > 0, np.inf, 0.0))
    diag_sq = float(np.sum(d2))
    full = float(np.sum(off)) / diag_sq if diag_sq > 0 else (0.0 if np.sum(off) == 0 else math.inf)
    return rows, full


def check_psd_row_bound(M: np.ndarray, lambda1: float, eig: Optional[EigenFactorization] = None,
                        slack: float = 1e-10) -> bool:
    """``||A_i||^2 <= lambda_1 A_ii`` for every row (holds for PSD matrices)."""
    diag, row_sq = _row_quantities(M)
    if eig is not None and eig.lam[-1] < -1e-10:
        return False
    scale = max(1.0, abs(lambda1) * float(np.max(np.abs(diag))) if diag.size else 1.0)
    return bool(np.all(row_sq <= lambda1 * diag + slack * scale))


def sigma_min_hadamard(V: np.ndarray) -> float:
    return float(np.linalg.svd(V * V, compute_uv=False)[-1])


def matrix_constants(M, eig: Optional[EigenFactorization] = None) -> MatrixConstants:
    """Diagnostics for a symmetric matrix (dense array or scipy sparse).

    Eigen-dependent fields (``kappa2``, ``kappa_d``, ``sigma_min_vv``,
    ``lam``, the Hadamard identity residual and the PSD row check) are only
    filled when ``eig`` is given.
    """
    diag, row_sq = _row_quantities(M)
    n = diag.shape[0]
    rows, full = ratios_from_rows(diag, row_sq)
    out = MatrixConstants(n=n, row_ratios=rows, full_ratio=full)
    diag_norm = float(np.linalg.norm(diag))
    if diag_norm > 0:
        out.trace_over_diag_norm = float(np.sum(diag)) / diag_norm
    else:
        out.notes.append("diagonal is identically zero")

    if eig is None:
        out.notes.append("no eigendecomposition: kappa2, kappa_d, sigma_min_vv absent")
        return out

    lam = np.asarray(eig.lam, dtype=float)
    out.lam = lam
    lam1, lamn = float(lam[0]), float(lam[-1])
    if lamn < -1e-10 * max(1.0, abs(lam1)):
        out.notes.append(f"matrix is not PSD (lambda_min = {lamn:.3e}); PSD constants absent")
    else:
        out.kappa2 = lam1 / lamn if lamn > 0 else math.inf
        nonzero = diag[diag != 0]
        if nonzero.size:
            out.kappa_d = lam1 / float(np.min(nonzero))
        else:
            out.notes.append("all diagonal entries are zero; kappa_d undefined")
    out.psd_row_bound = check_psd_row_bound(M, lam1, eig)
    out.sigma_min_vv = sigma_min_hadamard(eig.V)
    predicted = (eig.V * eig.V) @ lam
    out.hadamard_residual = float(np.linalg.norm(predicted - diag)) / (diag_norm if diag_norm > 0 else 1.0)
    if out.hadamard_residual > 1e-8:
        out.notes.append(f"Hadamard identity residual {out.hadamard_residual:.3e} exceeds 1e-8")
    return out


def best_rank_r_residuals(lam: np.ndarray) -> np.ndarray:
    """``||A - A_r||_F`` for ``r = 0..n`` from a descending PSD spectrum."""
    tail = np.cumsum((np.asarray(lam, dtype=float) ** 2)[::-1])[::-1]
    return np.sqrt(np.append(tail, 0.0))
