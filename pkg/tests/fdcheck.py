"""Finite-difference oracles shared by the test modules.

These stay independent of the autodiff engine: they only ever call a plain
python function f(vector) -> float.
"""

import numpy as np


def central_diff(f, x, h=1e-5):
    """First-order partials of f at x by central differences."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def central_diff2(f, x, h=1e-3):
    """Full matrix of second-order partials of f at x by central differences."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    hess = np.zeros((n, n))
    f0 = f(x)
    for i in range(n):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        hess[i, i] = (f(xp) - 2 * f0 + f(xm)) / h**2
        for j in range(i + 1, n):
            xpp = x.copy()
            xpm = x.copy()
            xmp = x.copy()
            xmm = x.copy()
            xpp[[i, j]] += h
            xmm[[i, j]] -= h
            xpm[i] += h
            xpm[j] -= h
            xmp[i] -= h
            xmp[j] += h
            hess[i, j] = hess[j, i] = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4 * h**2)
    return hess


def rel_err(got, want, floor=1e-9):
    got = np.asarray(got)
    want = np.asarray(want)
    return np.max(np.abs(got - want) / np.maximum(np.abs(want), floor))
