"""Stochastic diagonal estimation by normalised Hadamard products.

The estimate after ``s`` probes is

    D = (sum_k v_k * A v_k) / (sum_k v_k * v_k)

taken element-wise. With Rademacher probes the denominator is exactly ``s``
and the sum of the estimate is the Hutchinson trace estimate for the same
probes.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from diagest.exceptions import (
    DegenerateProbeError,
    DimensionError,
    PreconditionError,
    UnsupportedDistributionError,
)
from diagest.oracle import LinearOperator
from diagest.probes import RADEMACHER, ProbeDistribution, ProbeStream

DENOMINATOR_FLOOR = 1e-300
DEFAULT_BLOCK = 256


@dataclass
class DiagonalEstimate:
    values: np.ndarray
    s: int
    dist: ProbeDistribution


@dataclass
class DiagonalAccumulator:
    """Streaming sums for the diagonal estimator; memory is O(n) in ``s``.

    Set ``log_size`` to keep the most recent probes and responses in a
    bounded ring (used to cross-check against a direct Hutchinson sum).
    """

    n: int
    dist: ProbeDistribution = RADEMACHER
    log_size: int = 0
    numerator: np.ndarray = field(init=False)
    denominator: np.ndarray = field(init=False)
    s: int = field(init=False, default=0)
    log: deque = field(init=False, repr=False)

    def __post_init__(self):
        self.dist = ProbeDistribution.parse(self.dist)
        self.numerator = np.zeros(self.n)
        self.denominator = np.zeros(self.n)
        self.log = deque(maxlen=max(self.log_size, 0))

    def _check(self, X: np.ndarray, name: str) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[0] != self.n:
            raise DimensionError(f"{name} has leading dimension {X.shape[0]}, expected {self.n}")
        return X

    def absorb(self, v: np.ndarray, Av: np.ndarray) -> "DiagonalAccumulator":
        v = self._check(v, "probe")
        Av = self._check(Av, "response")
        if v.shape != (self.n,) or Av.shape != (self.n,):
            raise DimensionError(f"probe and response must both be length {self.n}")
        self.numerator += v * Av
        self.denominator += v * v
        self.s += 1
        if self.log_size > 0:
            self.log.append((v.copy(), Av.copy()))
        return self

    def absorb_block(self, V: np.ndarray, AV: np.ndarray) -> "DiagonalAccumulator":
        """Absorb the columns of ``V`` and their responses ``AV`` in order."""
        V = self._check(V, "probe block")
        AV = self._check(AV, "response block")
        if V.ndim != 2 or V.shape != AV.shape:
            raise DimensionError(f"probe block {V.shape} and response block {AV.shape} must match")
        if self.log_size > 0:
            for j in range(V.shape[1]):
                self.absorb(V[:, j], AV[:, j])
            return self
        k = V.shape[1]
        self.numerator += np.einsum("ij,ij->i", V, AV)
        self.denominator += np.einsum("ij,ij->i", V, V)
        self.s += k
        return self

    def extract(self) -> DiagonalEstimate:
        if self.s < 1:
            raise PreconditionError("no probes absorbed; cannot extract an estimate")
        if np.any(self.denominator < DENOMINATOR_FLOOR):
            raise DegenerateProbeError("probe denominator underflow; the probe generator is degenerate")
        return DiagonalEstimate(values=self.numerator / self.denominator, s=self.s, dist=self.dist)


def absorb_probe(acc: DiagonalAccumulator, v: np.ndarray, Av: np.ndarray) -> DiagonalAccumulator:
    return acc.absorb(v, Av)


def extract_estimate(acc: DiagonalAccumulator) -> DiagonalEstimate:
    return acc.extract()


def accumulate_diagonal(op: LinearOperator, s: int, stream: ProbeStream,
                        block_size: int = DEFAULT_BLOCK, log_size: int = 0) -> DiagonalAccumulator:
    """Run ``s`` probes from ``stream`` through ``op`` and return the sums.

    Probes are applied in blocks of ``block_size`` columns to use matrix-matrix
    products; the matvec count is unchanged by blocking.
    """
    if s < 1:
        raise PreconditionError(f"number of queries must be positive, got {s}")
    if stream.n != op.n:
        raise DimensionError(f"probe length {stream.n} does not match operator dimension {op.n}")
    acc = DiagonalAccumulator(op.n, stream.dist, log_size=log_size)
    remaining = s
    while remaining > 0:
        k = min(block_size, remaining)
        V = stream.probe_matrix(k)
        acc.absorb_block(V, op.apply_block(V))
        remaining -= k
    return acc


def estimate_diagonal(op: LinearOperator, s: int, stream: ProbeStream,
                      block_size: int = DEFAULT_BLOCK) -> DiagonalEstimate:
    """Diagonal estimate from ``s`` oracle queries with probes from ``stream``."""
    return accumulate_diagonal(op, s, stream, block_size=block_size).extract()


def hutchinson_trace_from_estimate(est: DiagonalEstimate) -> float:
    """Sum of a Rademacher diagonal estimate, i.e. the Hutchinson trace estimate."""
    if est.dist is not RADEMACHER:
        raise UnsupportedDistributionError("trace identity holds only for Rademacher probes")
    return float(np.sum(est.values))


def hutchinson_trace(probes: np.ndarray, responses: np.ndarray) -> float:
    """Direct ``(1/s) sum_k v_k^T A v_k`` from logged columns."""
    probes = np.asarray(probes, dtype=float)
    responses = np.asarray(responses, dtype=float)
    return float(np.einsum("ij,ij->", probes, responses) / probes.shape[1])


def off_diagonal_row_mass(M: np.ndarray) -> np.ndarray:
    """``||A_i||_2^2 - A_ii^2`` for every row."""
    M = np.asarray(M, dtype=float)
    return np.maximum(np.einsum("ij,ij->i", M, M) - np.diag(M) ** 2, 0.0)


def reference_variances(M: np.ndarray, dist, s: int) -> np.ndarray:
    """Exact per-element variance of the estimator after ``s`` probes.

    Gaussian probes have unbounded variance for ``s <= 2``; ``inf`` is
    returned there.
    """
    dist = ProbeDistribution.parse(dist)
    if s < 1:
        raise PreconditionError(f"s must be positive, got {s}")
    mass = off_diagonal_row_mass(M)
    if dist is RADEMACHER:
        return mass / s
    if s <= 2:
        return np.full(mass.shape, np.inf)
    return mass / (s - 2)


def relative_error(values: np.ndarray, truth: np.ndarray) -> float:
    """``||values - truth||_2 / ||truth||_2`` (absolute when ``truth`` is zero)."""
    denom = float(np.linalg.norm(truth))
    err = float(np.linalg.norm(np.asarray(values) - np.asarray(truth)))
    return err / denom if denom > 0 else err
