"""Sparse storage helpers and a pivoting direct solver for saddle-point systems.

Backed by SciPy's CSR format and SuperLU; the wrapper adds equilibration,
a relative pivot check and uniform error reporting.
"""
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SingularMatrixError

PIVOT_TOL = 1e-14


def as_csr(A):
    """Canonical CSR copy: sorted column indices, duplicates summed."""
    M = sp.csr_matrix(A, dtype=float, copy=True)
    M.sum_duplicates()
    M.sort_indices()
    return M


class Factorization:
    """Immutable LU factors of ``Dr A Dc``; ``solve`` undoes the scaling."""

    def __init__(self, lu, row_scale, col_scale, shape):
        self._lu = lu
        self._r = row_scale
        self._c = col_scale
        self.shape = shape

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.shape[0]:
            raise ValueError(f"rhs has length {b.shape[0]}, matrix is {self.shape}")
        rb = b * (self._r if b.ndim == 1 else self._r[:, None])
        y = self._lu.solve(rb)
        return y * (self._c if b.ndim == 1 else self._c[:, None])


def _equilibrate(A, sweeps=3):
    """Alternating row/column max-norm scaling (a few Ruiz sweeps)."""
    M = as_csr(A)
    n, m = M.shape
    rows = np.repeat(np.arange(n), np.diff(M.indptr))
    cols = M.indices
    vals = np.abs(M.data)
    r = np.ones(n)
    c = np.ones(m)
    for _ in range(sweeps):
        rmax = np.zeros(n)
        np.maximum.at(rmax, rows, vals)
        rmax = np.sqrt(np.where(rmax == 0, 1.0, rmax))
        vals /= rmax[rows]
        cmax = np.zeros(m)
        np.maximum.at(cmax, cols, vals)
        cmax = np.sqrt(np.where(cmax == 0, 1.0, cmax))
        vals /= cmax[cols]
        r /= rmax
        c /= cmax
    M.data = M.data * r[rows] * c[cols]
    return M, r, c


def factorize(A, step=""):
    """LU with partial pivoting; raises :class:`SingularMatrixError` on tiny pivots."""
    A = sp.csr_matrix(A, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got {A.shape}")
    where = f" ({step})" if step else ""
    if A.shape[0] == 0:
        raise SingularMatrixError(f"empty system{where}")
    M, r, c = _equilibrate(A)
    try:
        lu = spla.splu(M.tocsc(), permc_spec="COLAMD", diag_pivot_thresh=1.0)
    except RuntimeError as exc:
        raise SingularMatrixError(f"matrix is exactly singular{where}: {exc}") from exc
    pivots = np.abs(lu.U.diagonal())
    scale = spla.norm(M, np.inf)
    if pivots.min() < PIVOT_TOL * scale:
        raise SingularMatrixError(
            f"pivot {pivots.min():.3e} below {PIVOT_TOL:g}*||A||{where}")
    return Factorization(lu, r, c, A.shape)


def solve(handle, b):
    return handle.solve(b)
