"""Hot per-mode and pointwise kernels.

Each kernel has a pure-numpy implementation and, when numba is importable,
an ``@njit`` twin with identical semantics. ``LIQDECAY_NUMBA=0`` forces the
numpy path. The public names at the bottom of the module are bound to the
selected path; both implementations stay importable for cross-checks and the
benchmark.
"""

import math
import os

import numpy as np

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a soft dependency
    numba = None
    _HAVE_NUMBA = False


def numba_requested():
    return os.environ.get("LIQDECAY_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


USE_NUMBA = _HAVE_NUMBA and numba_requested()

# |omega t| below this switches sinh/omega to its Taylor series
SERIES_CUTOFF = 1e-6


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def fluid_propagator_np(xi, t, nu, pp):
    """Entries of exp(-t M) for M = [[0, xi], [-pp xi, nu xi^2]].

    ``xi`` and ``t`` broadcast against each other. Returns ``(e11, e12, e21,
    e22)`` as float arrays.
    """
    xi = np.asarray(xi, dtype=float)
    t = np.asarray(t, dtype=float)
    xi, t = np.broadcast_arrays(xi, t)
    theta = 0.5 * nu * xi * xi
    w2 = theta * theta - pp * xi * xi
    z = w2 * t * t
    damp = np.exp(-theta * t)

    c = np.empty(xi.shape)
    s = np.empty(xi.shape)

    small = np.abs(z) < SERIES_CUTOFF**2
    real = (~small) & (w2 > 0)
    osc = (~small) & (w2 <= 0)

    zs = z[small]
    c[small] = damp[small] * (1.0 + zs / 2.0 + zs * zs / 24.0)
    s[small] = damp[small] * t[small] * (1.0 + zs / 6.0 + zs * zs / 120.0)

    w = np.sqrt(w2[real])
    tr = t[real]
    ep = np.exp((w - theta[real]) * tr)
    decay2 = np.exp(-2.0 * w * tr)
    c[real] = 0.5 * ep * (1.0 + decay2)
    s[real] = ep * (-np.expm1(-2.0 * w * tr)) / (2.0 * w)

    om = np.sqrt(-w2[osc])
    to = t[osc]
    c[osc] = damp[osc] * np.cos(om * to)
    s[osc] = damp[osc] * np.sin(om * to) / om

    e11 = c + s * theta
    e12 = -s * xi
    e21 = s * pp * xi
    e22 = c - s * theta
    return e11, e12, e21, e22


def apply_block_np(e11, e12, e21, e22, x, y):
    return e11 * x + e12 * y, e21 * x + e22 * y


def renormalize_np(n, dbar):
    """Project ``n + dbar`` pointwise onto the unit sphere.

    ``n`` has shape (3, ...). Returns the new perturbation and the minimum
    director magnitude seen before projection.
    """
    d = n + dbar.reshape((3,) + (1,) * (n.ndim - 1))
    mag = np.sqrt(np.sum(d * d, axis=0))
    out = d / mag - dbar.reshape((3,) + (1,) * (n.ndim - 1))
    return out, float(mag.min())


def director_source_np(u, grad_n, n, dbar):
    """S3 = -u . grad n + |grad n|^2 (n + dbar), pointwise.

    ``grad_n[i, j]`` holds d_i n_j.
    """
    adv = np.einsum("i...,ij...->j...", u, grad_n)
    g2 = np.sum(grad_n * grad_n, axis=(0, 1))
    d = n + dbar.reshape((3,) + (1,) * (n.ndim - 1))
    return -adv + g2 * d


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if _HAVE_NUMBA:

    @numba.njit(cache=False)
    def _fluid_entry(xi, t, nu, pp):
        theta = 0.5 * nu * xi * xi
        w2 = theta * theta - pp * xi * xi
        z = w2 * t * t
        if abs(z) < SERIES_CUTOFF * SERIES_CUTOFF:
            damp = math.exp(-theta * t)
            c = damp * (1.0 + z / 2.0 + z * z / 24.0)
            s = damp * t * (1.0 + z / 6.0 + z * z / 120.0)
        elif w2 > 0.0:
            w = math.sqrt(w2)
            ep = math.exp((w - theta) * t)
            c = 0.5 * ep * (1.0 + math.exp(-2.0 * w * t))
            s = ep * (-math.expm1(-2.0 * w * t)) / (2.0 * w)
        else:
            om = math.sqrt(-w2)
            damp = math.exp(-theta * t)
            c = damp * math.cos(om * t)
            s = damp * math.sin(om * t) / om
        return c + s * theta, -s * xi, s * pp * xi, c - s * theta

    @numba.njit(cache=False)
    def _fluid_propagator_flat(xi, t, nu, pp, e11, e12, e21, e22):
        for i in range(xi.size):
            a, b, c, d = _fluid_entry(xi[i], t[i], nu, pp)
            e11[i] = a
            e12[i] = b
            e21[i] = c
            e22[i] = d

    def fluid_propagator_nb(xi, t, nu, pp):
        xi = np.asarray(xi, dtype=float)
        t = np.asarray(t, dtype=float)
        xi, t = np.broadcast_arrays(xi, t)
        shape = xi.shape
        xf = np.ascontiguousarray(xi).ravel()
        tf = np.ascontiguousarray(t).ravel()
        out = [np.empty(xf.size) for _ in range(4)]
        _fluid_propagator_flat(xf, tf, float(nu), float(pp), *out)
        return tuple(o.reshape(shape) for o in out)

    @numba.njit(cache=False)
    def _apply_block_flat(e11, e12, e21, e22, x, y, ox, oy):
        for i in range(x.size):
            xv = x[i]
            yv = y[i]
            ox[i] = e11[i] * xv + e12[i] * yv
            oy[i] = e21[i] * xv + e22[i] * yv

    def apply_block_nb(e11, e12, e21, e22, x, y):
        shape = x.shape
        x = np.ascontiguousarray(x).ravel()
        y = np.ascontiguousarray(y).ravel()
        ox = np.empty_like(x)
        oy = np.empty_like(y)
        _apply_block_flat(
            np.ascontiguousarray(e11).ravel(), np.ascontiguousarray(e12).ravel(),
            np.ascontiguousarray(e21).ravel(), np.ascontiguousarray(e22).ravel(),
            x, y, ox, oy,
        )
        return ox.reshape(shape), oy.reshape(shape)

    @numba.njit(cache=False)
    def _renormalize_flat(n0, n1, n2, d0, d1, d2, o0, o1, o2):
        mmin = np.inf
        for i in range(n0.size):
            a = n0[i] + d0
            b = n1[i] + d1
            c = n2[i] + d2
            m = math.sqrt(a * a + b * b + c * c)
            if m < mmin:
                mmin = m
            o0[i] = a / m - d0
            o1[i] = b / m - d1
            o2[i] = c / m - d2
        return mmin

    def renormalize_nb(n, dbar):
        shape = n.shape[1:]
        comps = [np.ascontiguousarray(n[j]).ravel() for j in range(3)]
        outs = [np.empty_like(c) for c in comps]
        mmin = _renormalize_flat(*comps, float(dbar[0]), float(dbar[1]), float(dbar[2]), *outs)
        return np.stack([o.reshape(shape) for o in outs]), float(mmin)

    @numba.njit(cache=False)
    def _director_source_flat(u, g, n, dbar, out):
        npts = u.shape[1]
        for p in range(npts):
            g2 = 0.0
            for i in range(3):
                for j in range(3):
                    g2 += g[i, j, p] * g[i, j, p]
            for j in range(3):
                adv = u[0, p] * g[0, j, p] + u[1, p] * g[1, j, p] + u[2, p] * g[2, j, p]
                out[j, p] = -adv + g2 * (n[j, p] + dbar[j])

    def director_source_nb(u, grad_n, n, dbar):
        shape = u.shape[1:]
        uf = np.ascontiguousarray(u).reshape(3, -1)
        gf = np.ascontiguousarray(grad_n).reshape(3, 3, -1)
        nf = np.ascontiguousarray(n).reshape(3, -1)
        out = np.empty_like(nf)
        _director_source_flat(uf, gf, nf, np.asarray(dbar, dtype=float), out)
        return out.reshape((3,) + shape)

else:  # pragma: no cover
    fluid_propagator_nb = fluid_propagator_np
    apply_block_nb = apply_block_np
    renormalize_nb = renormalize_np
    director_source_nb = director_source_np


if USE_NUMBA:
    fluid_propagator = fluid_propagator_nb
    apply_block = apply_block_nb
    renormalize = renormalize_nb
    director_source = director_source_nb
else:
    fluid_propagator = fluid_propagator_np
    apply_block = apply_block_np
    renormalize = renormalize_np
    director_source = director_source_np


def backend():
    return "numba" if USE_NUMBA else "numpy"
