"""Compiled 1-d kernels for batched flows and transport by characteristics."""

from __future__ import annotations

import numpy as np
from numba import njit

# status bits returned per path
EXITED = 1
NON_INVERTIBLE = 2


@njit(cache=True, inline="always")
def _lookup(x0, h, tab, x):
    s = (x - x0) / h
    n = tab.shape[0]
    if s <= 0.0:
        return tab[0]
    if s >= n - 1:
        return tab[n - 1]
    i = int(s)
    w = s - i
    return tab[i] * (1.0 - w) + tab[i + 1] * w


@njit(cache=True)
def table_eval(x0, h, tab, xs):
    out = np.empty(xs.shape[0])
    for i in range(xs.shape[0]):
        out[i] = _lookup(x0, h, tab, xs[i])
    return out


@njit(cache=True)
def _invert_into(lat, X, xeval, out):
    """Monotone piecewise-linear inverse of ``lat -> X`` at sorted ``xeval``."""
    n = X.shape[0]
    j = 0
    for i in range(xeval.shape[0]):
        x = xeval[i]
        if x <= X[0]:
            slope = (lat[1] - lat[0]) / (X[1] - X[0])
            out[i] = lat[0] + (x - X[0]) * slope
            continue
        if x >= X[n - 1]:
            slope = (lat[n - 1] - lat[n - 2]) / (X[n - 1] - X[n - 2])
            out[i] = lat[n - 1] + (x - X[n - 1]) * slope
            continue
        while X[j + 1] < x:
            j += 1
        out[i] = lat[j] + (x - X[j]) * (lat[j + 1] - lat[j]) / (X[j + 1] - X[j])


@njit(cache=True)
def transport_batch(dB, dt, lat, bx0, bh, btab, ux0, uh, utab, snaps, xeval, L, min_stretch, out, status):
    """Transport ``u0`` along ``dX = b dt + dB`` for each path of ``dB`` ``(m, K)``.

    ``out[m, s, i]`` receives ``u0(phi_{t_k}^{-1}(xeval[i]))`` at ``k = snaps[s]``
    (``snaps`` sorted, ``xeval`` sorted). ``status[m]`` collects EXITED when a
    trajectory leaves ``[-L, L]`` and NON_INVERTIBLE when neighbouring
    lattice points come closer than ``min_stretch`` times their initial gap
    or change order.
    """
    m_paths, K = dB.shape
    n = lat.shape[0]
    ns = snaps.shape[0]
    gap0 = np.empty(n - 1)
    for j in range(n - 1):
        gap0[j] = lat[j + 1] - lat[j]
    X = np.empty(n)
    y = np.empty(xeval.shape[0])
    for m in range(m_paths):
        st = 0
        for j in range(n):
            X[j] = lat[j]
        s = 0
        while s < ns and snaps[s] == 0:
            for i in range(xeval.shape[0]):
                out[m, s, i] = _lookup(ux0, uh, utab, xeval[i])
            s += 1
        for k in range(K):
            db = dB[m, k]
            for j in range(n):
                X[j] = X[j] + _lookup(bx0, bh, btab, X[j]) * dt + db
            if X[0] < -L or X[n - 1] > L:
                st |= EXITED
            for j in range(n - 1):
                if X[j + 1] - X[j] <= min_stretch * gap0[j]:
                    st |= NON_INVERTIBLE
                    break
            if s < ns and snaps[s] == k + 1:
                if st & NON_INVERTIBLE:
                    for i in range(xeval.shape[0]):
                        out[m, s, i] = np.nan
                else:
                    _invert_into(lat, X, xeval, y)
                    for i in range(xeval.shape[0]):
                        out[m, s, i] = _lookup(ux0, uh, utab, y[i])
                s += 1
        status[m] = st


@njit(cache=True)
def flow_single(dB, dt, lat, bx0, bh, btab):
    """All lattice trajectories for one path; returns ``(K + 1, n)``."""
    K = dB.shape[0]
    n = lat.shape[0]
    X = np.empty((K + 1, n))
    X[0] = lat
    for k in range(K):
        for j in range(n):
            X[k + 1, j] = X[k, j] + _lookup(bx0, bh, btab, X[k, j]) * dt + dB[k]
    return X
