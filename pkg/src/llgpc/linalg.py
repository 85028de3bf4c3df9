"""Sparse CSR storage and the iterative/direct solvers used by the schemes.

The iterative solvers take an operator callback rather than a matrix: the
predictor systems change every time step, and callers may apply them
term-by-term without ever materializing a matrix.
"""

from dataclasses import dataclass

import numpy as np

from . import accel
from .errors import InvalidParameterError, NoConvergenceError, SingularSystemError


@dataclass(frozen=True)
class CsrMatrix:
    """Compressed-row scalar matrix.

    Column indices are strictly increasing within each row and row offsets
    are monotone; both are enforced at construction.
    """

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    n_rows: int
    n_cols: int

    def __post_init__(self):
        if self.indptr.shape[0] != self.n_rows + 1:
            raise InvalidParameterError("indptr length must be n_rows + 1")
        if self.indptr[0] != 0 or self.indptr[-1] != self.data.shape[0]:
            raise InvalidParameterError("indptr must start at 0 and end at nnz")
        if np.any(np.diff(self.indptr) < 0):
            raise InvalidParameterError("row offsets must be monotone")
        for i in range(self.n_rows):
            cols = self.indices[self.indptr[i]:self.indptr[i + 1]]
            if cols.size and (np.any(np.diff(cols) <= 0) or cols[0] < 0
                              or cols[-1] >= self.n_cols):
                raise InvalidParameterError(f"bad column indices in row {i}")

    @classmethod
    def from_coo(cls, rows, cols, vals, shape):
        """Build from triplets; duplicate entries are summed."""
        n_rows, n_cols = shape
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size:
            # collapse duplicates deterministically (sorted order)
            new_entry = np.empty(rows.size, dtype=bool)
            new_entry[0] = True
            new_entry[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            group = np.cumsum(new_entry) - 1
            rows_u = rows[new_entry]
            cols_u = cols[new_entry]
            vals_u = np.bincount(group, weights=vals)
        else:
            rows_u = rows
            cols_u = cols
            vals_u = vals
        indptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.add.at(indptr, rows_u + 1, 1)
        np.cumsum(indptr, out=indptr)
        return cls(indptr=indptr, indices=cols_u, data=vals_u,
                   n_rows=n_rows, n_cols=n_cols)

    @property
    def nnz(self) -> int:
        return int(self.data.shape[0])

    def toarray(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols))
        for i in range(self.n_rows):
            for p in range(self.indptr[i], self.indptr[i + 1]):
                out[i, self.indices[p]] += self.data[p]
        return out

    def diagonal(self) -> np.ndarray:
        d = np.zeros(self.n_rows)
        for i in range(min(self.n_rows, self.n_cols)):
            row = self.indices[self.indptr[i]:self.indptr[i + 1]]
            hit = np.searchsorted(row, i)
            if hit < row.size and row[hit] == i:
                d[i] = self.data[self.indptr[i] + hit]
        return d


def spmv(a: CsrMatrix, x: np.ndarray) -> np.ndarray:
    """y = A x with deterministic stored-order summation per row."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != a.n_cols:
        raise InvalidParameterError(
            f"dimension mismatch: matrix is {a.n_rows}x{a.n_cols}, "
            f"vector has length {x.shape[0]}"
        )
    if x.ndim == 1:
        out = np.empty(a.n_rows)
        accel.csr_matvec(a.indptr, a.indices, a.data, x, out)
    elif x.ndim == 2 and x.shape[1] == 3:
        out = np.empty((a.n_rows, 3))
        accel.csr_matvec3(a.indptr, a.indices, a.data,
                          np.ascontiguousarray(x), out)
    else:
        raise InvalidParameterError("x must be a vector or an (n, 3) field")
    return out


@dataclass
class SolveResult:
    x: np.ndarray
    iterations: int
    residual: float


def _norm(x):
    return float(np.linalg.norm(x))


def gmres(apply, b, x0=None, rtol=1e-12, restart=30, maxit=None):
    """Restarted GMRES for a square operator given as a callback.

    Returns a SolveResult with ||b - A x|| <= rtol * ||b||.  Raises
    NoConvergenceError carrying the best iterate if maxit is exhausted.
    """
    if rtol <= 0:
        raise InvalidParameterError("rtol must be positive")
    b = np.asarray(b, dtype=np.float64)
    n = b.shape[0]
    if maxit is None:
        maxit = max(10 * n, 100)
    bnorm = _norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    if bnorm == 0.0:
        return SolveResult(x=np.zeros(n), iterations=0, residual=0.0)
    tol = rtol * bnorm

    total_iters = 0
    best_x = x.copy()
    best_res = _norm(b - apply(x))
    if best_res <= tol:
        return SolveResult(x=best_x, iterations=0, residual=best_res)

    while total_iters < maxit:
        r = b - apply(x)
        beta = _norm(r)
        if beta <= tol:
            return SolveResult(x=x, iterations=total_iters, residual=beta)
        m = min(restart, maxit - total_iters)
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        k_done = 0
        for j in range(m):
            # copy: apply may return (a view of) its input, e.g. identity
            w = np.array(apply(V[j]), dtype=np.float64)
            for i in range(j + 1):
                H[i, j] = np.dot(w, V[i])
                w -= H[i, j] * V[i]
            h_sub = _norm(w)
            H[j + 1, j] = h_sub
            if h_sub > 0.0:
                V[j + 1] = w / h_sub
            # apply accumulated Givens rotations to the new column
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = np.hypot(H[j, j], H[j + 1, j])
            if denom == 0.0:
                cs[j], sn[j] = 1.0, 0.0
            else:
                cs[j] = H[j, j] / denom
                sn[j] = H[j + 1, j] / denom
            H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            k_done = j + 1
            total_iters += 1
            if abs(g[j + 1]) <= tol or h_sub == 0.0:
                break
        y = np.linalg.solve(np.triu(H[:k_done, :k_done]), g[:k_done])
        x = x + V[:k_done].T @ y
        res = _norm(b - apply(x))
        if res < best_res:
            best_res = res
            best_x = x.copy()
        if res <= tol:
            return SolveResult(x=x, iterations=total_iters, residual=res)

    raise NoConvergenceError("GMRES did not converge", best_x=best_x,
                             residual=best_res, iterations=total_iters)


def cg(apply, b, x0=None, rtol=1e-12, maxit=None):
    """Conjugate gradients for a symmetric positive definite operator."""
    if rtol <= 0:
        raise InvalidParameterError("rtol must be positive")
    b = np.asarray(b, dtype=np.float64)
    n = b.shape[0]
    if maxit is None:
        maxit = max(10 * n, 100)
    bnorm = _norm(b)
    if bnorm == 0.0:
        return SolveResult(x=np.zeros(n), iterations=0, residual=0.0)
    tol = rtol * bnorm
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - apply(x)
    p = r.copy()
    rs = np.dot(r, r)
    best_x = x.copy()
    best_res = np.sqrt(rs)
    for it in range(1, maxit + 1):
        if np.sqrt(rs) <= tol:
            return SolveResult(x=x, iterations=it - 1, residual=_norm(b - apply(x)))
        ap = apply(p)
        denom = np.dot(p, ap)
        if denom <= 0.0:
            raise NoConvergenceError("CG hit a non-SPD direction", best_x=best_x,
                                     residual=best_res, iterations=it - 1)
        alpha = rs / denom
        x += alpha * p
        r -= alpha * ap
        rs_new = np.dot(r, r)
        if np.sqrt(rs_new) < best_res:
            best_res = np.sqrt(rs_new)
            best_x = x.copy()
        p = r + (rs_new / rs) * p
        rs = rs_new
    res = _norm(b - apply(x))
    if res <= tol:
        return SolveResult(x=x, iterations=maxit, residual=res)
    raise NoConvergenceError("CG did not converge", best_x=best_x,
                             residual=best_res, iterations=maxit)


def solve3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Direct solve of a single 3x3 system via Cramer's rule."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != (3, 3) or b.shape != (3,):
        raise InvalidParameterError("solve3 expects a 3x3 matrix and a 3-vector")
    det = (a[0, 0] * (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
           - a[0, 1] * (a[1, 0] * a[2, 2] - a[1, 2] * a[2, 0])
           + a[0, 2] * (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]))
    scale = max(float(np.max(np.abs(a))), 1.0) ** 3
    if abs(det) <= 1e-14 * scale:
        raise SingularSystemError(f"3x3 system is near-singular (det={det:.3e})")
    x = np.empty(3)
    for j in range(3):
        aj = a.copy()
        aj[:, j] = b
        dj = (aj[0, 0] * (aj[1, 1] * aj[2, 2] - aj[1, 2] * aj[2, 1])
              - aj[0, 1] * (aj[1, 0] * aj[2, 2] - aj[1, 2] * aj[2, 0])
              + aj[0, 2] * (aj[1, 0] * aj[2, 1] - aj[1, 1] * aj[2, 0]))
        x[j] = dj / det
    return x
