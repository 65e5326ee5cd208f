"""Dense float64 vector/matrix helpers and the two warping functions.

Everything downstream (cells, BPTT, diagnostics) is built on this module.
Vectors are 1-D float64 ndarrays, matrices are 2-D float64 ndarrays; both are
treated as immutable by convention (functions never write into their inputs).
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "DimensionMismatchError",
    "EigenSolverError",
    "gc",
    "gd",
    "gc_prime",
    "gd_prime",
    "as_vector",
    "as_matrix",
    "matvec",
    "outer",
    "hadamard",
    "matmul",
    "transpose",
    "add",
    "scale",
    "eigenvalues",
    "spectral_norm",
]


class DimensionMismatchError(ValueError):
    """Raised when operand shapes cannot be combined."""


class EigenSolverError(RuntimeError):
    """Raised when the eigenvalue computation fails to converge."""


# ---------------------------------------------------------------------------
# warping (activation) functions
# ---------------------------------------------------------------------------

def gc(z):
    """Control warping function (logistic): 1 / (1 + e^-z), elementwise.

    Total on finite inputs; evaluated through e^-|z| so neither branch
    overflows. Scalar in, scalar out; array in, array out.
    """
    arr = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(arr))
    out = np.where(arr >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
    return float(out) if np.isscalar(z) or arr.ndim == 0 else out


def gd(z):
    """Data warping function: tanh(z), elementwise."""
    arr = np.asarray(z, dtype=np.float64)
    out = np.tanh(arr)
    return float(out) if np.isscalar(z) or arr.ndim == 0 else out


def gc_prime(z):
    """Derivative of gc: gc(z) * (1 - gc(z))."""
    s = gc(z)
    return s * (1.0 - s)


def gd_prime(z):
    """Derivative of gd: 1 - gd(z)^2."""
    t = gd(z)
    return 1.0 - t * t


# ---------------------------------------------------------------------------
# shape-checked array constructors and arithmetic
# ---------------------------------------------------------------------------

def as_vector(x, name: str = "vector") -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise DimensionMismatchError(f"{name}: expected nonempty 1-D array, got shape {v.shape}")
    return v


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise DimensionMismatchError(f"{name}: expected nonempty 2-D array, got shape {m.shape}")
    return m


def _require(cond: bool, a, b, op: str) -> None:
    if not cond:
        raise DimensionMismatchError(
            f"{op}: incompatible shapes {np.shape(a)} and {np.shape(b)}"
        )


def matvec(m, v) -> np.ndarray:
    m, v = as_matrix(m, "matvec lhs"), as_vector(v, "matvec rhs")
    _require(m.shape[1] == v.shape[0], m, v, "matvec")
    return m @ v


def outer(u, v) -> np.ndarray:
    return np.outer(as_vector(u, "outer lhs"), as_vector(v, "outer rhs"))


def hadamard(u, v) -> np.ndarray:
    u, v = as_vector(u, "hadamard lhs"), as_vector(v, "hadamard rhs")
    _require(u.shape == v.shape, u, v, "hadamard")
    return u * v


def matmul(a, b) -> np.ndarray:
    a, b = as_matrix(a, "matmul lhs"), as_matrix(b, "matmul rhs")
    _require(a.shape[1] == b.shape[0], a, b, "matmul")
    return a @ b


def transpose(m) -> np.ndarray:
    return as_matrix(m, "transpose").T.copy()


def add(u, v) -> np.ndarray:
    u, v = np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64)
    _require(u.shape == v.shape, u, v, "add")
    return u + v


def scale(a: float, u) -> np.ndarray:
    return float(a) * np.asarray(u, dtype=np.float64)


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------

def eigenvalues(m) -> np.ndarray:
    """Eigenvalues of a real square matrix as a complex array.

    Delegates to LAPACK; a non-converged solve surfaces as EigenSolverError so
    callers can report it instead of crashing.
    """
    m = as_matrix(m, "eigenvalues")
    _require(m.shape[0] == m.shape[1], m, m, "eigenvalues")
    try:
        return np.linalg.eigvals(m)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK rarely fails at desk scale
        raise EigenSolverError(f"eigenvalue iteration did not converge: {exc}") from exc


def spectral_norm(m, iters: int = 200, tol: float = 1e-12) -> float:
    """Largest singular value via power iteration on M^T M.

    Independent tests cross-check this against a dense SVD; keep the two
    routes separate.
    """
    m = as_matrix(m, "spectral_norm")
    if not np.any(m):
        return 0.0
    g = m.T @ m
    rng = np.random.default_rng(0x5EED)
    v = rng.standard_normal(g.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = g @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v_next = w / norm
        if abs(norm - lam) <= tol * max(1.0, norm):
            lam = norm
            break
        lam, v = norm, v_next
    return float(np.sqrt(lam))
