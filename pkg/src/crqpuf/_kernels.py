"""Hot numeric kernels with two interchangeable backends.

The numba and numpy implementations perform identical floating-point
operations in identical order (explicit temporaries, fastmath off, trig
and uniforms precomputed by the caller with numpy), so their outputs are
bit-for-bit equal; the backend changes speed only.

Selection: CRQPUF_BACKEND environment variable ("numba" or "numpy").
Unset: numba when importable, numpy otherwise. See set_backend().
"""
import os

import numpy as np

from .errors import ConfigError

try:
    import numba

    # workqueue is always available and keeps stderr free of TBB probing noise
    numba.config.THREADING_LAYER = "workqueue"
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAS_NUMBA = False


def _chain_z_numpy(cos_eff, sin_eff, is_y, shrink, cos_tilt, sin_tilt, apply_h):
    """Final Bloch z after a rotation chain and optional tilted Hadamard.

    cos_eff, sin_eff: (B, t, n) precomputed cos/sin of effective angles.
    is_y: (t,) uint8, 1 where gate i is an R_Y.
    shrink, cos_tilt, sin_tilt: (n,) per-qubit constants.
    Returns z: (B, n).
    """
    B, t, n = cos_eff.shape
    x = np.zeros((B, n))
    y = np.zeros((B, n))
    z = np.ones((B, n))
    for i in range(t):
        c = cos_eff[:, i, :]
        s = sin_eff[:, i, :]
        if is_y[i]:
            t1 = x * c
            t2 = z * s
            t3 = z * c
            t4 = x * s
            x = t1 + t2
            z = t3 - t4
        else:
            t1 = y * c
            t2 = z * s
            t3 = y * s
            t4 = z * c
            y = t1 - t2
            z = t3 + t4
        x = x * shrink
        y = y * shrink
        z = z * shrink
    if apply_h:
        # R_Y(h_tilt), then H maps (x,y,z) -> (z,-y,x), then one shrink;
        # only the z output (= tilted x, shrunk) is needed.
        t1 = x * cos_tilt
        t2 = z * sin_tilt
        xt = t1 + t2
        z = xt * shrink
    return z


def _count_below_numpy(u, m):
    """Per-column count of uniforms strictly below the column mean."""
    return (u < m).sum(axis=0).astype(np.int64)


if HAS_NUMBA:

    @numba.njit(parallel=True, cache=True, fastmath=False)
    def _chain_z_numba(cos_eff, sin_eff, is_y, shrink, cos_tilt, sin_tilt, apply_h):
        B, t, n = cos_eff.shape
        out = np.empty((B, n))
        for b in numba.prange(B):
            for j in range(n):
                x = 0.0
                y = 0.0
                z = 1.0
                f = shrink[j]
                for i in range(t):
                    c = cos_eff[b, i, j]
                    s = sin_eff[b, i, j]
                    if is_y[i]:
                        t1 = x * c
                        t2 = z * s
                        t3 = z * c
                        t4 = x * s
                        x = t1 + t2
                        z = t3 - t4
                    else:
                        t1 = y * c
                        t2 = z * s
                        t3 = y * s
                        t4 = z * c
                        y = t1 - t2
                        z = t3 + t4
                    x = x * f
                    y = y * f
                    z = z * f
                if apply_h:
                    t1 = x * cos_tilt[j]
                    t2 = z * sin_tilt[j]
                    xt = t1 + t2
                    z = xt * f
                out[b, j] = z
        return out

    @numba.njit(parallel=True, cache=True, fastmath=False)
    def _count_below_numba(u, m):
        shots, n = u.shape
        out = np.empty(n, dtype=np.int64)
        for j in numba.prange(n):
            c = 0
            for s in range(shots):
                if u[s, j] < m[j]:
                    c += 1
            out[j] = c
        return out


_BACKENDS = ("numba", "numpy")
_backend = "numpy"


def set_backend(name: str) -> None:
    """Switch the compute backend; results are identical either way."""
    global _backend
    if name not in _BACKENDS:
        raise ConfigError(f"unknown backend {name!r}, expected one of {_BACKENDS}")
    if name == "numba" and not HAS_NUMBA:
        raise ConfigError("backend 'numba' requested but numba is not importable")
    _backend = name


def get_backend() -> str:
    return _backend


def chain_z(cos_eff, sin_eff, is_y, shrink, cos_tilt, sin_tilt, apply_h=True):
    if _backend == "numba":
        return _chain_z_numba(cos_eff, sin_eff, is_y, shrink, cos_tilt, sin_tilt, apply_h)
    return _chain_z_numpy(cos_eff, sin_eff, is_y, shrink, cos_tilt, sin_tilt, apply_h)


def count_below(u, m):
    if _backend == "numba":
        return _count_below_numba(u, m)
    return _count_below_numpy(u, m)


def _init_from_env() -> None:
    env = os.environ.get("CRQPUF_BACKEND")
    if env is None:
        set_backend("numba" if HAS_NUMBA else "numpy")
    else:
        set_backend(env)


_init_from_env()
