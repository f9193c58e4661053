"""Matrix-vector product oracles.

Every estimator in the package touches the matrix only through
:class:`LinearOperator`, which counts the products it performs. Concrete
constructors cover dense arrays, sparse Matrix Market files, synthetic
power-law PSD matrices, diagonal matrices and the deflated operator used by
Diag++.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
import scipy.io
import scipy.sparse as sp

from diagest.exceptions import DimensionError, MatrixFormatError, PreconditionError

MAX_DENSE_N = 5000
ORTHONORMAL_TOL = 1e-10


class LinearOperator:
    """Square implicit matrix exposed only through products.

    Parameters
    ----------
    n : int
        Dimension of the (square) operator.
    matmat : callable
        Maps an ``(n, k)`` array to ``A @ X``. Single vectors are routed
        through it as one-column blocks.
    symmetric : bool
        Whether the operator is known to be symmetric.

    ``matvec_count`` grows by one per column applied, whether through
    :meth:`apply` or :meth:`apply_block`. The counter is guarded by a lock so
    several trial workers may share one operator.
    """

    def __init__(self, n: int, matmat: Callable[[np.ndarray], np.ndarray],
                 symmetric: bool = True, name: str = "operator"):
        if n < 1:
            raise DimensionError(f"operator dimension must be positive, got {n}")
        self.n = int(n)
        self.symmetric = symmetric
        self.name = name
        self._matmat = matmat
        self._count = 0
        self._lock = threading.Lock()

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def matvec_count(self) -> int:
        return self._count

    def _charge(self, k: int) -> None:
        with self._lock:
            self._count += k

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Return ``A @ v`` for a single length-n vector."""
        v = np.asarray(v, dtype=float)
        if v.ndim != 1 or v.shape[0] != self.n:
            raise DimensionError(f"{self.name}: expected vector of length {self.n}, got shape {v.shape}")
        out = np.asarray(self._matmat(v[:, None]), dtype=float).reshape(self.n)
        self._charge(1)
        return out

    def apply_block(self, V: np.ndarray) -> np.ndarray:
        """Return ``A @ V`` for an ``(n, k)`` block; charges ``k`` matvecs."""
        V = np.asarray(V, dtype=float)
        if V.ndim != 2 or V.shape[0] != self.n:
            raise DimensionError(f"{self.name}: expected block with {self.n} rows, got shape {V.shape}")
        k = V.shape[1]
        if k == 0:
            return np.zeros((self.n, 0))
        out = np.asarray(self._matmat(V), dtype=float)
        if out.shape != (self.n, k):
            raise DimensionError(f"{self.name}: oracle returned shape {out.shape}, expected {(self.n, k)}")
        self._charge(k)
        return out

    def __repr__(self) -> str:
        return f"{type(self).__name__}(n={self.n}, name={self.name!r}, matvecs={self._count})"


class MatrixOperator(LinearOperator):
    """Operator backed by an explicit dense or sparse matrix."""

    def __init__(self, matrix: Union[np.ndarray, sp.spmatrix, sp.sparray],
                 symmetric: bool = True, name: str = "matrix"):
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DimensionError(f"matrix must be square, got shape {matrix.shape}")
        self.matrix = matrix
        super().__init__(matrix.shape[0], lambda X: matrix @ X, symmetric=symmetric, name=name)

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def to_dense(self) -> np.ndarray:
        if self.is_sparse:
            return self.matrix.toarray()
        return np.asarray(self.matrix)


def check_symmetric(M: np.ndarray) -> np.ndarray:
    """Validate that ``M`` is a square, symmetric real array and return it as float."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {M.shape}")
    if M.shape[0] < 1:
        raise DimensionError("matrix must have positive dimension")
    gap = np.abs(M - M.T)
    if np.any(gap > 1e-12 * np.maximum(1.0, np.abs(M))):
        raise PreconditionError(f"matrix is not symmetric (max asymmetry {gap.max():.3e})")
    return M


def make_dense_operator(M: np.ndarray, symmetric: bool = True) -> MatrixOperator:
    """Wrap a dense array as a counted oracle."""
    M = check_symmetric(M) if symmetric else np.asarray(M, dtype=float)
    return MatrixOperator(M, symmetric=symmetric, name="dense")


def make_diagonal_operator(d: np.ndarray) -> LinearOperator:
    d = np.asarray(d, dtype=float).reshape(-1)
    return LinearOperator(d.shape[0], lambda X: d[:, None] * X, symmetric=True, name="diagonal")


def make_identity_operator(n: int, scale: float = 1.0) -> LinearOperator:
    return make_diagonal_operator(np.full(n, float(scale)))


# ---------------------------------------------------------------------------
# Matrix Market input


def load_matrix_market(path: Union[str, Path]) -> MatrixOperator:
    """Read a real Matrix Market file into an operator.

    Coordinate files become CSR-backed sparse operators and array files dense
    ones. Symmetric storage is mirrored across the diagonal. Only ``real``
    (and ``integer``) fields with ``general`` or ``symmetric`` symmetry are
    accepted.
    """
    path = Path(path)
    try:
        rows, cols, _, fmt, field, symmetry = scipy.io.mminfo(str(path))
    except (ValueError, IndexError) as exc:
        raise MatrixFormatError(f"{path}: unparseable Matrix Market header ({exc})") from exc
    if field not in ("real", "integer"):
        raise MatrixFormatError(f"{path}: field '{field}' not supported (real matrices only)")
    if symmetry not in ("general", "symmetric"):
        raise MatrixFormatError(f"{path}: symmetry '{symmetry}' not supported")
    if rows != cols:
        raise DimensionError(f"{path}: matrix is {rows}x{cols}, expected square")
    try:
        data = scipy.io.mmread(str(path))
    except ValueError as exc:
        raise MatrixFormatError(f"{path}: {exc}") from exc

    if sp.issparse(data):
        matrix = sp.csr_matrix(data, dtype=float)
        symmetric = symmetry == "symmetric" or (abs(matrix - matrix.T).max() == 0 if matrix.nnz else True)
    else:
        matrix = np.asarray(data, dtype=float)
        symmetric = bool(np.array_equal(matrix, matrix.T))
    return MatrixOperator(matrix, symmetric=symmetric, name=path.name)


def write_matrix_market(path: Union[str, Path], M: np.ndarray, comment: str = "") -> None:
    """Write a dense symmetric matrix in Matrix Market array format."""
    scipy.io.mmwrite(str(path), np.asarray(M, dtype=float), comment=comment, symmetry="symmetric")


# ---------------------------------------------------------------------------
# Synthetic power-law matrices


@dataclass(frozen=True)
class PowerLawSpectrumSpec:
    n: int
    c: float
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise PreconditionError(f"n must be positive, got {self.n}")
        if self.c < 0:
            raise PreconditionError(f"decay exponent must be non-negative, got {self.c}")


@dataclass(frozen=True)
class EigenFactorization:
    """``A = V diag(lam) V^T`` with eigenvalues in descending order."""

    V: np.ndarray
    lam: np.ndarray

    def reconstruct(self) -> np.ndarray:
        A = (self.V * self.lam) @ self.V.T
        return 0.5 * (A + A.T)

    def orthogonality_error(self) -> float:
        return float(np.max(np.abs(self.V.T @ self.V - np.eye(self.V.shape[1]))))


def power_law_spectrum(n: int, c: float) -> np.ndarray:
    return np.arange(1, n + 1, dtype=float) ** (-float(c))


def random_orthogonal(n: int, seed: int) -> np.ndarray:
    """Orthonormalise an ``n x n`` Gaussian matrix with Householder QR."""
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, n))
    V, _ = np.linalg.qr(G)
    return V


def generate_power_law_psd(spec: PowerLawSpectrumSpec) -> tuple[np.ndarray, EigenFactorization]:
    """Build ``A = V diag(i^-c) V^T`` with a random orthogonal ``V``."""
    if spec.n > MAX_DENSE_N:
        raise PreconditionError(f"dense generation refused for n={spec.n} > {MAX_DENSE_N}")
    lam = power_law_spectrum(spec.n, spec.c)
    V = random_orthogonal(spec.n, spec.seed)
    eig = EigenFactorization(V=V, lam=lam)
    return eig.reconstruct(), eig


def eigen_factorize(M: np.ndarray) -> EigenFactorization:
    """Dense symmetric eigendecomposition, eigenvalues descending."""
    lam, V = np.linalg.eigh(np.asarray(M, dtype=float))
    return EigenFactorization(V=V[:, ::-1].copy(), lam=lam[::-1].copy())


# ---------------------------------------------------------------------------
# Deflation


class ResidualOperator(LinearOperator):
    """``(I - QQ^T) A (I - QQ^T)`` applied with one base matvec per column.

    When ``AQ`` is supplied the base product is taken on ``v`` directly and
    corrected with the cached ``AQ``; otherwise the projected vector is sent
    to the base oracle. Both cost exactly one base matvec.
    """

    def __init__(self, base: LinearOperator, Q: np.ndarray, AQ: Optional[np.ndarray] = None):
        Q = np.asarray(Q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != base.n:
            raise DimensionError(f"Q must have {base.n} rows, got shape {Q.shape}")
        r = Q.shape[1]
        if r > 0 and np.max(np.abs(Q.T @ Q - np.eye(r))) > ORTHONORMAL_TOL:
            raise PreconditionError("columns of Q are not orthonormal")
        if AQ is not None:
            AQ = np.asarray(AQ, dtype=float)
            if AQ.shape != Q.shape:
                raise DimensionError(f"AQ must have shape {Q.shape}, got {AQ.shape}")
        self.base = base
        self.Q = Q
        self.AQ = AQ
        super().__init__(base.n, self._residual_matmat, symmetric=base.symmetric, name=f"residual({base.name})")

    def _project_out(self, X: np.ndarray) -> np.ndarray:
        if self.Q.shape[1] == 0:
            return X
        return X - self.Q @ (self.Q.T @ X)

    def _residual_matmat(self, X: np.ndarray) -> np.ndarray:
        if self.AQ is not None:
            # A(I - QQ^T)X = AX - (AQ)(Q^T X)
            Y = self.base.apply_block(X) - self.AQ @ (self.Q.T @ X)
        else:
            Y = self.base.apply_block(self._project_out(X))
        return self._project_out(Y)


def make_residual_operator(base: LinearOperator, Q: np.ndarray,
                           AQ: Optional[np.ndarray] = None) -> ResidualOperator:
    return ResidualOperator(base, Q, AQ)
