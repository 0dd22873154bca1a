"""Hot inner loops, each in a numba and a pure-numpy flavour.

The backend is chosen once at import time. Set ``SEPMOTION_DISABLE_NUMBA=1``
to force the numpy path (also used automatically when numba is missing).
Both flavours are always importable as ``<name>_numba`` / ``<name>_numpy`` so
tests and the benchmark can compare them directly.
"""

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

_DISABLE = os.environ.get("SEPMOTION_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}
USE_NUMBA = HAVE_NUMBA and not _DISABLE


def _njit(fn):
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True)(fn)


def backend():
    return "numba" if USE_NUMBA else "numpy"


# -- normalized Hermite functions --------------------------------------------


def hermite_table_numpy(n_max, xi):
    xi = np.asarray(xi, dtype=np.float64)
    out = np.empty((n_max + 1,) + xi.shape)
    out[0] = np.pi ** -0.25 * np.exp(-0.5 * xi * xi)
    if n_max >= 1:
        out[1] = np.sqrt(2.0) * xi * out[0]
    for n in range(1, n_max):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * xi * out[n] - np.sqrt(n / (n + 1.0)) * out[n - 1]
    return out


@_njit
def _hermite_table_1d(n_max, xi):
    m = xi.shape[0]
    out = np.empty((n_max + 1, m))
    c0 = np.pi ** -0.25
    for j in range(m):
        out[0, j] = c0 * np.exp(-0.5 * xi[j] * xi[j])
    if n_max >= 1:
        s2 = np.sqrt(2.0)
        for j in range(m):
            out[1, j] = s2 * xi[j] * out[0, j]
    # row-wise recurrence keeps the inner loop contiguous
    for n in range(1, n_max):
        a = np.sqrt(2.0 / (n + 1))
        b = np.sqrt(n / (n + 1.0))
        for j in range(m):
            out[n + 1, j] = a * xi[j] * out[n, j] - b * out[n - 1, j]
    return out


def hermite_table_numba(n_max, xi):
    xi = np.asarray(xi, dtype=np.float64)
    flat = _hermite_table_1d(int(n_max), np.ascontiguousarray(xi.ravel()))
    return flat.reshape((n_max + 1,) + xi.shape)


# -- 2D finite-difference Hamiltonian applied to a full-grid array -----------


def apply_h2d_numpy(phi, hx, hX, cx, cX, V):
    """(-cx d2/dx2 - cX d2/dX2 + V) phi on interior points; boundary rows zero."""
    out = np.zeros_like(phi)
    c = phi[1:-1, 1:-1]
    lap_x = (2.0 * c - phi[2:, 1:-1] - phi[:-2, 1:-1]) / (hx * hx)
    lap_X = (2.0 * c - phi[1:-1, 2:] - phi[1:-1, :-2]) / (hX * hX)
    out[1:-1, 1:-1] = cx * lap_x + cX * lap_X + V[1:-1, 1:-1] * c
    return out


@_njit
def _apply_h2d(phi, hx, hX, cx, cX, V):
    nx, nX = phi.shape
    out = np.zeros_like(phi)
    ax = cx / (hx * hx)
    aX = cX / (hX * hX)
    for i in range(1, nx - 1):
        for j in range(1, nX - 1):
            c = phi[i, j]
            out[i, j] = (
                ax * (2.0 * c - phi[i + 1, j] - phi[i - 1, j])
                + aX * (2.0 * c - phi[i, j + 1] - phi[i, j - 1])
                + V[i, j] * c
            )
    return out


def apply_h2d_numba(phi, hx, hX, cx, cX, V):
    return _apply_h2d(np.ascontiguousarray(phi, dtype=np.float64), float(hx), float(hX),
                      float(cx), float(cX), np.ascontiguousarray(V, dtype=np.float64))


# -- sequential sign tracking of channel functions ---------------------------


def track_phases_numpy(funcs, weights):
    """Flip signs along axis 0 so adjacent rows overlap positively.

    Returns the tracked copy and the |overlap| with the previous row
    (first entry is 1).
    """
    funcs = np.array(funcs, dtype=np.float64)
    overlaps = np.ones(funcs.shape[0])
    for j in range(1, funcs.shape[0]):
        s = np.dot(funcs[j] * weights, funcs[j - 1])
        if s < 0.0:
            funcs[j] *= -1.0
        overlaps[j] = abs(s)
    return funcs, overlaps


@_njit
def _track_phases(funcs, weights):
    n, m = funcs.shape
    overlaps = np.ones(n)
    for j in range(1, n):
        s = 0.0
        for i in range(m):
            s += funcs[j, i] * weights[i] * funcs[j - 1, i]
        if s < 0.0:
            for i in range(m):
                funcs[j, i] = -funcs[j, i]
        overlaps[j] = abs(s)
    return funcs, overlaps


def track_phases_numba(funcs, weights):
    work = np.array(funcs, dtype=np.float64, order="C")
    return _track_phases(work, np.ascontiguousarray(weights, dtype=np.float64))


# -- coupled-channel block operator in COO form ------------------------------
# mode: 0 = no coupling, 1 = diagonal correction only, 2 = full coupling


def coupled_block_coo_numpy(E, F, S, k4, h, mode):
    n_ch, n = E.shape
    rows, cols, vals = [], [], []
    idx = np.arange(n)
    kin = k4 / (h * h)
    for a in range(n_ch):
        off = a * n
        d = 2.0 * kin + E[a]
        if mode >= 1:
            d = d + k4 * S[a, a]
        rows += [off + idx, off + idx[:-1], off + idx[1:]]
        cols += [off + idx, off + idx[1:], off + idx[:-1]]
        vals += [d, np.full(n - 1, -kin), np.full(n - 1, -kin)]
        if mode < 2:
            continue
        for b in range(n_ch):
            if b == a:
                continue
            offb = b * n
            f = F[a, b]
            up = -k4 * (f[:-1] + f[1:]) / (2.0 * h)
            rows += [off + idx, off + idx[:-1], off + idx[1:]]
            cols += [offb + idx, offb + idx[1:], offb + idx[:-1]]
            vals += [k4 * S[a, b], up, -up]
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


@_njit
def _coupled_block_coo(E, F, S, k4, h, mode):
    n_ch, n = E.shape
    per_block = 3 * n - 2
    n_blocks = n_ch if mode < 2 else n_ch * n_ch
    rows = np.empty(n_blocks * per_block, dtype=np.int64)
    cols = np.empty(n_blocks * per_block, dtype=np.int64)
    vals = np.empty(n_blocks * per_block)
    kin = k4 / (h * h)
    p = 0
    for a in range(n_ch):
        for b in range(n_ch):
            if a != b and mode < 2:
                continue
            ra = a * n
            cb = b * n
            for i in range(n):
                rows[p] = ra + i
                cols[p] = cb + i
                if a == b:
                    v = 2.0 * kin + E[a, i]
                    if mode >= 1:
                        v += k4 * S[a, a, i]
                else:
                    v = k4 * S[a, b, i]
                vals[p] = v
                p += 1
            for i in range(n - 1):
                if a == b:
                    up = -kin
                    dn = -kin
                else:
                    up = -k4 * (F[a, b, i] + F[a, b, i + 1]) / (2.0 * h)
                    dn = -up
                rows[p] = ra + i
                cols[p] = cb + i + 1
                vals[p] = up
                p += 1
                rows[p] = ra + i + 1
                cols[p] = cb + i
                vals[p] = dn
                p += 1
    return rows[:p], cols[:p], vals[:p]


def coupled_block_coo_numba(E, F, S, k4, h, mode):
    return _coupled_block_coo(np.ascontiguousarray(E, dtype=np.float64),
                              np.ascontiguousarray(F, dtype=np.float64),
                              np.ascontiguousarray(S, dtype=np.float64),
                              float(k4), float(h), int(mode))


# -- local maxima over a partially valid 1D signal ---------------------------


def local_maxima_numpy(d, valid):
    """Interior-style maxima: >= every valid neighbour and > at least one."""
    n = d.shape[0]
    out = np.zeros(n, dtype=np.bool_)
    left_ok = np.zeros(n, dtype=np.bool_)
    right_ok = np.zeros(n, dtype=np.bool_)
    left_ok[1:] = valid[:-1]
    right_ok[:-1] = valid[1:]
    dl = np.full(n, -np.inf)
    dr = np.full(n, -np.inf)
    dl[1:] = np.where(valid[:-1], d[:-1], -np.inf)
    dr[:-1] = np.where(valid[1:], d[1:], -np.inf)
    geq = (~left_ok | (d >= dl)) & (~right_ok | (d >= dr))
    gt = (left_ok & (d > dl)) | (right_ok & (d > dr))
    out[:] = valid & geq & gt & (left_ok | right_ok)
    return out


@_njit
def _local_maxima(d, valid):
    n = d.shape[0]
    out = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        if not valid[i]:
            continue
        lo = i > 0 and valid[i - 1]
        hi = i < n - 1 and valid[i + 1]
        if not (lo or hi):
            continue
        ok = True
        strict = False
        if lo:
            if d[i] < d[i - 1]:
                ok = False
            elif d[i] > d[i - 1]:
                strict = True
        if hi:
            if d[i] < d[i + 1]:
                ok = False
            elif d[i] > d[i + 1]:
                strict = True
        out[i] = ok and strict
    return out


def local_maxima_numba(d, valid):
    return _local_maxima(np.ascontiguousarray(d, dtype=np.float64),
                         np.ascontiguousarray(valid, dtype=np.bool_))


if USE_NUMBA:
    hermite_table = hermite_table_numba
    apply_h2d = apply_h2d_numba
    track_phases = track_phases_numba
    coupled_block_coo = coupled_block_coo_numba
    local_maxima = local_maxima_numba
else:
    hermite_table = hermite_table_numpy
    apply_h2d = apply_h2d_numpy
    track_phases = track_phases_numpy
    coupled_block_coo = coupled_block_coo_numpy
    local_maxima = local_maxima_numpy
