"""Hot numeric kernels with numba acceleration and a pure-numpy fallback.

The fallback path is selected by setting the environment variable
``LLGPC_DISABLE_NUMBA=1`` before import (useful on machines without a
working numba install and for benchmarking, see ``benchmarks/``).

Within one path every kernel is deterministic: accumulation follows the
stored order of the CSR data, so repeated calls with identical inputs are
bitwise identical.
"""

import os

import numpy as np

_disabled = os.environ.get("LLGPC_DISABLE_NUMBA", "").strip().lower() in (
    "1", "true", "yes", "on",
)

if not _disabled:
    try:
        import numba
    except ImportError:  # pragma: no cover - numba is a declared dependency
        numba = None
else:
    numba = None

NUMBA_ENABLED = numba is not None


def _csr_matvec_py(indptr, indices, data, x, out):
    n = indptr.shape[0] - 1
    for i in range(n):
        acc = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            acc += data[p] * x[indices[p]]
        out[i] = acc
    return out


def _csr_matvec3_py(indptr, indices, data, x, out):
    n = indptr.shape[0] - 1
    for i in range(n):
        a0 = 0.0
        a1 = 0.0
        a2 = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            c = data[p]
            j = indices[p]
            a0 += c * x[j, 0]
            a1 += c * x[j, 1]
            a2 += c * x[j, 2]
        out[i, 0] = a0
        out[i, 1] = a1
        out[i, 2] = a2
    return out


def _predictor_apply_py(indptr, indices, data, beta, m, v, c_ex, alpha, out):
    """out = (1 + alpha^2) v + c_ex * (m x g + alpha * m x (m x g)),

    where g = -(A v) / beta rowwise is the discrete Laplacian of v and
    c_ex = ell_ex^2 * theta * k.
    """
    n = indptr.shape[0] - 1
    one_a2 = 1.0 + alpha * alpha
    for i in range(n):
        g0 = 0.0
        g1 = 0.0
        g2 = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            c = data[p]
            j = indices[p]
            g0 += c * v[j, 0]
            g1 += c * v[j, 1]
            g2 += c * v[j, 2]
        ib = -1.0 / beta[i]
        g0 *= ib
        g1 *= ib
        g2 *= ib
        m0 = m[i, 0]
        m1 = m[i, 1]
        m2 = m[i, 2]
        # t = m x g
        t0 = m1 * g2 - m2 * g1
        t1 = m2 * g0 - m0 * g2
        t2 = m0 * g1 - m1 * g0
        # s = m x t
        s0 = m1 * t2 - m2 * t1
        s1 = m2 * t0 - m0 * t2
        s2 = m0 * t1 - m1 * t0
        out[i, 0] = one_a2 * v[i, 0] + c_ex * (t0 + alpha * s0)
        out[i, 1] = one_a2 * v[i, 1] + c_ex * (t1 + alpha * s1)
        out[i, 2] = one_a2 * v[i, 2] + c_ex * (t2 + alpha * s2)
    return out


def _csr_matvec_np(indptr, indices, data, x, out):
    n = indptr.shape[0] - 1
    counts = np.diff(indptr)
    rows = np.repeat(np.arange(n), counts)
    out[:] = np.bincount(rows, weights=data * x[indices], minlength=n)
    return out


def _csr_matvec3_np(indptr, indices, data, x, out):
    n = indptr.shape[0] - 1
    counts = np.diff(indptr)
    rows = np.repeat(np.arange(n), counts)
    for c in range(3):
        out[:, c] = np.bincount(rows, weights=data * x[indices, c], minlength=n)
    return out


def _predictor_apply_np(indptr, indices, data, beta, m, v, c_ex, alpha, out):
    g = np.empty_like(v)
    _csr_matvec3_np(indptr, indices, data, v, g)
    g /= -beta[:, None]
    t = np.cross(m, g)
    s = np.cross(m, t)
    out[:] = (1.0 + alpha * alpha) * v + c_ex * (t + alpha * s)
    return out


if NUMBA_ENABLED:
    _jit = numba.njit(cache=True, nogil=True, fastmath=False)
    csr_matvec = _jit(_csr_matvec_py)
    csr_matvec3 = _jit(_csr_matvec3_py)
    predictor_apply = _jit(_predictor_apply_py)
else:
    csr_matvec = _csr_matvec_np
    csr_matvec3 = _csr_matvec3_np
    predictor_apply = _predictor_apply_np
