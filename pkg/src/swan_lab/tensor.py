"""Dense linear-algebra substrate.

Matrices are plain 2-D ``float64`` numpy arrays.  ``vec`` stacks columns, so
``vec(A @ X @ B) == kron(B.T, A) @ vec(X)``.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import CapacityError, NumericError, ShapeError

KRON_MAX_DIM = 4096
EIGEN_MAX_DIM = 2000
EXPM_MAX_DIM = 2000
HQR_MAX_ITS = 60


@dataclass(frozen=True)
class EigenSpectrum:
    real_parts: np.ndarray
    imag_parts: np.ndarray

    def __len__(self):
        return len(self.real_parts)

    @property
    def values(self):
        return self.real_parts + 1j * self.imag_parts

    def max_abs_real(self):
        return float(np.max(np.abs(self.real_parts))) if len(self) else 0.0

    def max_real(self):
        return float(np.max(self.real_parts)) if len(self) else 0.0

    def min_real(self):
        return float(np.min(self.real_parts)) if len(self) else 0.0


def as_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def matmul(a, b):
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def kron(a, b, max_dim=KRON_MAX_DIM):
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    rows, cols = a.shape[0] * b.shape[0], a.shape[1] * b.shape[1]
    if rows > max_dim or cols > max_dim:
        raise CapacityError(f"kron result {rows}x{cols} exceeds cap {max_dim}x{max_dim}")
    return np.kron(a, b)


def vec(a):
    """Column-stacking vectorisation."""
    return as_matrix(a).reshape(-1, order="F").copy()


def unvec(v, rows, cols):
    return np.asarray(v, dtype=np.float64).reshape((rows, cols), order="F")


def eigen(a, max_dim=EIGEN_MAX_DIM, max_its=HQR_MAX_ITS):
    """All eigenvalues of a real square matrix.

    Householder reduction to Hessenberg form followed by the Francis
    double-shift QR iteration.  Symmetric input gets exactly zero imaginary
    parts (its spectrum is real, so any complex pair would be round-off).

    Raises
    ------
    ShapeError
        ``a`` is not square.
    CapacityError
        dimension above ``max_dim``.
    NumericError
        QR iteration failed to deflate an eigenvalue within ``max_its`` sweeps;
        ``err.iterations`` carries the count.
    """
    a = as_matrix(a)
    n = a.shape[0]
    if a.shape[1] != n:
        raise ShapeError(f"eigen needs a square matrix, got {a.shape}")
    if n > max_dim:
        raise CapacityError(f"eigen dimension {n} exceeds cap {max_dim}")
    if n == 0:
        return EigenSpectrum(np.zeros(0), np.zeros(0))
    if not np.all(np.isfinite(a)):
        raise NumericError("eigen input contains non-finite entries")
    # work at unit scale so deflation thresholds never meet subnormals
    scale = float(np.abs(a).max())
    if scale == 0.0:
        return EigenSpectrum(np.zeros(n), np.zeros(n))
    h = np.ascontiguousarray(a / scale)
    _kernels.hessenberg(h)
    wr, wi, status = _kernels.hqr(h, max_its)
    if status != _kernels.HQR_OK:
        raise NumericError(f"QR iteration did not converge after {status} iterations", iterations=int(status))
    wr = np.array(wr) * scale
    wi = np.array(wi) * scale
    if np.array_equal(a, a.T):
        wi = np.zeros_like(wi)
    order = np.lexsort((wi, wr))
    return EigenSpectrum(wr[order], wi[order])


def expm(a, t=1.0, max_dim=EXPM_MAX_DIM):
    """``exp(t * a)`` by scaling and squaring of a truncated Taylor series."""
    a = as_matrix(a)
    n = a.shape[0]
    if a.shape[1] != n:
        raise ShapeError(f"expm needs a square matrix, got {a.shape}")
    if n > max_dim:
        raise CapacityError(f"expm dimension {n} exceeds cap {max_dim}")
    if t < 0:
        raise ValueError("t must be non-negative")
    m = t * a
    norm = np.abs(m).sum(axis=1).max() if n else 0.0
    # scale so that ||m / 2^s||_inf <= 1/2; 18 Taylor terms then reach ~1e-17.
    s = max(0, int(np.ceil(np.log2(norm / 0.5)))) if norm > 0.5 else 0
    m = m / (2.0 ** s)
    result = np.eye(n)
    term = np.eye(n)
    for k in range(1, 19):
        term = term @ m / k
        result = result + term
        if np.abs(term).max() < 1e-18 * max(1.0, np.abs(result).max()):
            break
    for _ in range(s):
        result = result @ result
    if not np.all(np.isfinite(result)):
        raise NumericError("matrix exponential overflowed")
    return result


matrix_exponential_action = expm


def spectral_norm(a):
    return float(np.linalg.norm(as_matrix(a), 2))


def frobenius_norm(a):
    return float(np.linalg.norm(as_matrix(a)))
