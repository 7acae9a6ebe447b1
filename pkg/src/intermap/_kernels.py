"""Compiled scalar kernels for the hot loops.

Everything here is numba-jitted and specialised on a small integer profile
id (see profiles.KERNEL_*) instead of taking Python callables, which keeps
the compiled artifacts cacheable.  Only the built-in profiles get fast
paths; custom profiles fall back to the (slower) pure-Python code paths in
the public modules.

Conventions:

* chart is [-1/2, 1/2) with mod-1 reduction,
* backward orbit arrays are indexed so xs[k] is the x-coordinate of
  T^{-k}(p),
* unstable slopes are certified by pushing the two extreme seeds through
  the same orbit: the slope update u -> 1 - 1/(1 + h'(x) + u) is monotone
  in u and contracts, so the two images bracket the invariant slope.
"""

import math

import numpy as np
from numba import njit

KERNEL_SINE = 0
KERNEL_CUBIC = 1


@njit(cache=True, inline="always")
def _reduce(x):
    return x - math.floor(x + 0.5)


@njit(cache=True, inline="always")
def _h(kind, b, x):
    if kind == KERNEL_SINE:
        return x - math.sin(x)
    return b * x * x * x


@njit(cache=True, inline="always")
def _hp(kind, b, x):
    if kind == KERNEL_SINE:
        return 1.0 - math.cos(x)
    return 3.0 * b * x * x


@njit(cache=True, inline="always")
def _step(kind, b, x, y):
    hx = _h(kind, b, x)
    return _reduce(x + hx + y), _reduce(hx + y)


@njit(cache=True, inline="always")
def _step_inv(kind, b, x, y):
    x0 = _reduce(x - y)
    return x0, _reduce(y - _h(kind, b, x0))


@njit(cache=True)
def orbit_forward(kind, b, x0, y0, n):
    """Forward orbit: arrays xs, ys with xs[k] = x-coord of T^k(p), k=0..n."""
    xs = np.empty(n + 1)
    ys = np.empty(n + 1)
    x, y = x0, y0
    xs[0] = x
    ys[0] = y
    for k in range(1, n + 1):
        x, y = _step(kind, b, x, y)
        xs[k] = x
        ys[k] = y
    return xs, ys


@njit(cache=True)
def orbit_backward(kind, b, x0, y0, n):
    """Backward orbit: arrays xs, ys with xs[k] = x-coord of T^{-k}(p)."""
    xs = np.empty(n + 1)
    ys = np.empty(n + 1)
    x, y = x0, y0
    xs[0] = x
    ys[0] = y
    for k in range(1, n + 1):
        x, y = _step_inv(kind, b, x, y)
        xs[k] = x
        ys[k] = y
    return xs, ys


@njit(cache=True)
def orbit_chunk(kind, b, x, y, out_x, out_y):
    """Fill out_x/out_y with the next len(out_x) states; return final state.

    out_x[0] is T(p), i.e. the state *after* the first step.
    """
    n = out_x.shape[0]
    for k in range(n):
        x, y = _step(kind, b, x, y)
        out_x[k] = x
        out_y[k] = y
    return x, y


@njit(cache=True, inline="always")
def _push_u(kind, b, x, u):
    return 1.0 - 1.0 / (1.0 + _hp(kind, b, x) + u)


@njit(cache=True)
def _push_u_through(kind, b, xs, k_from, k_to, u):
    # push a seed at depth k_from up to depth k_to (k_to < k_from)
    for k in range(k_from, k_to, -1):
        u = _push_u(kind, b, xs[k], u)
    return u


@njit(cache=True)
def slope_u(kind, b, x0, y0, tol, cap):
    """Certified unstable slope at (x0, y0).

    Returns (u, err, depth, ok).  ok = False means the depth cap was hit
    before the seed bracket contracted below tol; (u, err) then hold the
    midpoint and half-width of the last bracket.
    """
    n = 64
    if n > cap:
        n = cap
    xs, _ = orbit_backward(kind, b, x0, y0, n)
    while True:
        lo = _push_u_through(kind, b, xs, n, 0, 0.0)
        hi = _push_u_through(kind, b, xs, n, 0, 1.0)
        width = hi - lo
        if width <= 2.0 * tol:
            return 0.5 * (lo + hi), 0.5 * width, n, True
        if n >= cap:
            return 0.5 * (lo + hi), 0.5 * width, n, False
        n = min(2 * n, cap)
        xs, _ = orbit_backward(kind, b, x0, y0, n)


@njit(cache=True)
def slope_v(kind, b, dhmax, x0, y0, tol, cap):
    """Certified stable slope at (x0, y0) via the forward orbit.

    The stable update v(p) = h'(x_p) + v(Tp)/(1 + v(Tp)) is monotone and
    contracting in v, with invariant range [0, dhmax + 1), so seeds 0 and
    dhmax + 1 bracket the true slope.  Returns (v, err, depth, ok).
    """
    vhi0 = dhmax + 1.0
    n = 64
    if n > cap:
        n = cap
    xs, _ = orbit_forward(kind, b, x0, y0, n)
    while True:
        lo = 0.0
        hi = vhi0
        for k in range(n - 1, -1, -1):
            hpk = _hp(kind, b, xs[k])
            lo = hpk + lo / (1.0 + lo)
            hi = hpk + hi / (1.0 + hi)
        width = hi - lo
        if width <= 2.0 * tol:
            return 0.5 * (lo + hi), 0.5 * width, n, True
        if n >= cap:
            return 0.5 * (lo + hi), 0.5 * width, n, False
        n = min(2 * n, cap)
        xs, _ = orbit_forward(kind, b, x0, y0, n)


@njit(cache=True)
def chain_u(kind, b, x0, y0, nprod, tol, cap):
    """Backward orbit with certified unstable slopes along it.

    Returns (xs, us, err, depth, ok) where xs[k], us[k] belong to T^{-k}(p)
    for k = 0..nprod.  The certification depth (>= nprod) is grown until the
    seed bracket at T^{-nprod}(p) is below tol.
    """
    n = nprod + 64
    if n > cap:
        n = cap
    xs, _ = orbit_backward(kind, b, x0, y0, n)
    while True:
        lo = _push_u_through(kind, b, xs, n, nprod, 0.0)
        hi = _push_u_through(kind, b, xs, n, nprod, 1.0)
        width = hi - lo
        ok = width <= 2.0 * tol
        if ok or n >= cap:
            us = np.empty(nprod + 1)
            u = 0.5 * (lo + hi)
            us[nprod] = u
            for k in range(nprod, 0, -1):
                u = _push_u(kind, b, xs[k], u)
                us[k - 1] = u
            return xs[: nprod + 1], us, 0.5 * width, n, ok
        n = min(2 * n, cap)
        xs, _ = orbit_backward(kind, b, x0, y0, n)


@njit(cache=True)
def prop_v_backward(kind, b, xs, v0):
    """Propagate a stable slope from the surface down a backward orbit.

    xs is a backward-orbit x array; v0 the slope at xs[0].  Returns vs with
    vs[i] the slope at T^{-i}(p).  The backward update contracts, so any
    surface error only shrinks.
    """
    n = xs.shape[0] - 1
    vs = np.empty(n + 1)
    v = v0
    vs[0] = v
    for i in range(1, n + 1):
        v = _hp(kind, b, xs[i]) + v / (1.0 + v)
        vs[i] = v
    return vs


@njit(cache=True)
def lag_products(fx, gx, lags, out):
    """Accumulate sum_k f[k] g[k+lag] into out for each lag (shared k-range).

    The k-range is 0..(n - max_lag - 1) so every lag sees the same count.
    """
    n = fx.shape[0]
    mx = 0
    for i in range(lags.shape[0]):
        if lags[i] > mx:
            mx = lags[i]
    m = n - mx
    for i in range(lags.shape[0]):
        lag = lags[i]
        s = 0.0
        for k in range(m):
            s += fx[k] * gx[k + lag]
        out[i] += s
    return m
