"""Compiled inner loops for long orbits of the truncated tangency map.

Every kernel takes the map parameters unpacked as scalars plus the sine-series
forcing as two arrays (``modes``, ``amps``) so that numba sees only plain types.
The arithmetic order in :func:`step` matches :func:`tangency.map_core.ttm_step`.
"""

import math

import numpy as np
from numba import njit, prange

PI = math.pi
TWO_PI = 2.0 * math.pi


@njit(cache=True)
def wrap(x):
    y = (x + PI) % TWO_PI - PI
    if y >= PI:
        y -= TWO_PI
    return y


@njit(cache=True)
def forcing(phi, modes, amps):
    s = 0.0
    for k in range(modes.shape[0]):
        s += amps[k] * math.sin(modes[k] * phi)
    return s


@njit(cache=True)
def step(phi, K, eps, omega, tau, alpha, modes, amps):
    phib = phi + omega + tau * K
    if K < 0.0:
        phib -= alpha * math.sqrt(-K)
    phib = wrap(phib)
    return phib, K + eps * forcing(phib, modes, amps)


@njit(cache=True)
def orbit_dump(phi, K, n, stride, eps, omega, tau, alpha, modes, amps):
    """Iterates ``stride, 2*stride, ... <= n`` of one orbit."""
    m = n // stride
    it = np.empty(m, dtype=np.int64)
    ph = np.empty(m)
    kk = np.empty(m)
    r = 0
    for j in range(1, n + 1):
        phi, K = step(phi, K, eps, omega, tau, alpha, modes, amps)
        if j % stride == 0:
            it[r] = j
            ph[r] = phi
            kk[r] = K
            r += 1
    return it, ph, kk


@njit(cache=True, parallel=True)
def ensemble_extrema(phi0s, K0, n, eps, omega, tau, alpha, modes, amps):
    """Per-orbit max and min of K over iterates 1..n."""
    n_ic = phi0s.shape[0]
    kmax = np.empty(n_ic)
    kmin = np.empty(n_ic)
    for i in prange(n_ic):
        phi = phi0s[i]
        K = K0
        mx = -np.inf
        mn = np.inf
        for _ in range(n):
            phi, K = step(phi, K, eps, omega, tau, alpha, modes, amps)
            if K > mx:
                mx = K
            if K < mn:
                mn = K
        kmax[i] = mx
        kmin[i] = mn
    return kmax, kmin


@njit(cache=True, parallel=True)
def ensemble_windows(phi0s, K0s, n, centers, delta, checkpoints, positive_only,
                     eps, omega, tau, alpha, modes, amps):
    """Running per-window extrema of K for several orbits.

    Returns arrays of shape (n_ic, n_checkpoints, n_windows) holding the running
    max, running min and hit count at each checkpoint iterate. Membership is the
    open interval |phi - center| < delta on the circle.
    """
    n_ic = phi0s.shape[0]
    n_w = centers.shape[0]
    n_ck = checkpoints.shape[0]
    rmax = np.empty((n_ic, n_ck, n_w))
    rmin = np.empty((n_ic, n_ck, n_w))
    hits = np.zeros((n_ic, n_ck, n_w), dtype=np.int64)
    for i in prange(n_ic):
        cmax = np.full(n_w, -np.inf)
        cmin = np.full(n_w, np.inf)
        chit = np.zeros(n_w, dtype=np.int64)
        phi = phi0s[i]
        K = K0s[i]
        ck = 0
        for j in range(1, n + 1):
            phi, K = step(phi, K, eps, omega, tau, alpha, modes, amps)
            if not (positive_only and K < 0.0):
                for w in range(n_w):
                    d = phi - centers[w]
                    if d >= PI:
                        d -= TWO_PI
                    elif d < -PI:
                        d += TWO_PI
                    if abs(d) < delta:
                        chit[w] += 1
                        if K > cmax[w]:
                            cmax[w] = K
                        if K < cmin[w]:
                            cmin[w] = K
            while ck < n_ck and checkpoints[ck] == j:
                for w in range(n_w):
                    rmax[i, ck, w] = cmax[w]
                    rmin[i, ck, w] = cmin[w]
                    hits[i, ck, w] = chit[w]
                ck += 1
    return rmax, rmin, hits
