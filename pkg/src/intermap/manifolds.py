"""Invariant manifolds of the neutral fixed point by variational minimisation.

A stable-manifold orbit (x_n) with anchor x_0 = a is the minimiser of the
action sum(L(x_n, x_{n+1})) built from the generating function
L(x, x1) = (x - x1)^2 / 2 + G(x).  The stationarity system is a nonlinear
tridiagonal chain

    2 x_n - x_{n+1} - x_{n-1} + h(x_n) = 0,

solved here by a damped Newton iteration with banded linear algebra,
projected each step into the asymptotic band |x_n - A/(n+c)| <= B (n+c)^{-3/2}
(c = A/a).  The converged window yields the stable graph gamma_s(a) = y_0(a);
the unstable graph and the negative branches follow from the reversing
involutions, and the graphs extend outward by forward iteration.

Also here: the restricted boundary maps f_u/f_s, manifold slopes by
backward seeding, the local product [xi, eta] (intersection of an unstable
and a stable leaf) and the unstable holonomy between stable leaves, both
driven by a pointwise slope-field provider from the directions module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.linalg import solve_banded

from .errors import (
    BracketFailureError,
    ConvergenceError,
    DomainError,
    HolonomyError,
    RangeError,
)
from .map_core import TorusPoint
from .profiles import ShearProfile


def generating_L(x: float, x1: float, profile: ShearProfile) -> float:
    """Generating function L(x, x1) = (x - x1)^2 / 2 + G(x)."""
    return 0.5 * (x - x1) ** 2 + profile.G(x)


@dataclass
class SequenceWindow:
    """Truncated stable-manifold orbit window with its anchor and band data."""

    anchor: float
    xs: np.ndarray
    tail_rule: str
    residual: float
    A: float
    c: float
    B: float

    @property
    def n_terms(self) -> int:
        return len(self.xs)

    def band_centers(self) -> np.ndarray:
        n = np.arange(1, len(self.xs) + 1, dtype=float)
        return self.A / (n + self.c)

    def band_margin(self) -> float:
        """max_n |x_n - A/(n+c)| - B (n+c)^{-3/2}; <= 0 means inside the band."""
        n = np.arange(1, len(self.xs) + 1, dtype=float)
        dev = np.abs(self.xs - self.A / (n + self.c))
        return float(np.max(dev - self.B * (n + self.c) ** -1.5))

    def y_sequence(self, profile: ShearProfile) -> np.ndarray:
        """Momenta y_n = x_{n+1} - x_n - h(x_n), n = 0..N-1, with x_0 = a."""
        full = np.concatenate(([self.anchor], self.xs))
        return full[1:] - full[:-1] - profile.h(full[:-1])

    def y0(self, profile: ShearProfile) -> float:
        return float(self.xs[0] - self.anchor - profile.h(self.anchor))


def _tail_value(A: float, c: float, N: int) -> float:
    return A / (N + 1 + c)


def lagrangian_gradient(w: SequenceWindow, profile: ShearProfile) -> np.ndarray:
    """Gradient of the action at the window (anchor and tail rule closed)."""
    xs = w.xs
    if len(xs) < 2:
        raise DomainError("lagrangian_gradient needs at least two entries")
    left = np.concatenate(([w.anchor], xs[:-1]))
    right = np.concatenate((xs[1:], [_tail_value(w.A, w.c, len(xs))]))
    return 2.0 * xs - right - left + profile.h(xs)


def minimize_stable_sequence(a: float, N: int | None = None,
                             tol: float = 1e-13,
                             profile: ShearProfile | None = None,
                             B: float | None = None,
                             max_iter: int = 80) -> SequenceWindow:
    """Minimise the action for anchor a > 0; returns the converged window.

    Newton steps on the tridiagonal stationarity system (diagonal
    2 + h'(x_n) >= 2, always invertible), damped by residual backtracking
    and projected into the band after every step.  The band projection only
    guards transients; for anchors in the validated range the solution is
    interior.
    """
    if profile is None:
        raise DomainError("minimize_stable_sequence needs a profile")
    if not (0 < a <= 0.5):
        raise DomainError("anchor a must lie in (0, 1/2]")
    A = profile.A
    c = A / a
    if N is None:
        N = max(200, int(math.ceil(10.0 / a)))
    if B is None:
        B = A
    # convexity of G on [-2a, 2a] (h' >= 0 there) keeps the action convex
    grid = np.linspace(-2.0 * a, 2.0 * a, 41)
    if np.any(profile.dh(grid) < -1e-15):
        raise DomainError(f"G is not convex on [-{2*a:g}, {2*a:g}] for this profile")

    n_idx = np.arange(1, N + 1, dtype=float)
    centers = A / (n_idx + c)
    half_width = B * (n_idx + c) ** -1.5
    lo, hi = centers - half_width, centers + half_width
    xs = centers.copy()

    def grad(x):
        left = np.concatenate(([a], x[:-1]))
        right = np.concatenate((x[1:], [_tail_value(A, c, N)]))
        return 2.0 * x - right - left + profile.h(x)

    g = grad(xs)
    res = float(np.max(np.abs(g)))
    banded = np.empty((3, N))
    for it in range(max_iter):
        if res <= tol:
            break
        banded[0, :] = -1.0
        banded[1, :] = 2.0 + profile.dh(xs)
        banded[2, :] = -1.0
        banded[0, 0] = 0.0
        banded[2, -1] = 0.0
        d = solve_banded((1, 1), banded, -g)
        tau = 1.0
        for _ in range(25):
            trial = np.clip(xs + tau * d, lo, hi)
            g_t = grad(trial)
            res_t = float(np.max(np.abs(g_t)))
            if res_t < res:
                xs, g, res = trial, g_t, res_t
                break
            tau *= 0.5
        else:
            break
    if res > tol:
        raise ConvergenceError(
            f"minimizer stalled at residual {res:.3e} (tol {tol:g}, a={a:g})",
            residual=res)
    return SequenceWindow(anchor=a, xs=xs, tail_rule="algebraic", residual=res,
                          A=A, c=c, B=B)


# ---------------------------------------------------------------------------
# manifold graphs


@dataclass
class ManifoldGraph:
    """Sampled graph (x, gamma(x), gamma'(x)) of a manifold branch pair.

    x covers [-a_max, a_max] (possibly extended) with 0 included; gamma is
    odd by the reversing symmetries.
    """

    branch: str
    x: np.ndarray
    gamma: np.ndarray
    slope: np.ndarray
    _interp: PchipInterpolator | None = field(default=None, repr=False)
    _slope_interp: PchipInterpolator | None = field(default=None, repr=False)

    def __post_init__(self):
        order = np.argsort(self.x)
        self.x = np.asarray(self.x, dtype=float)[order]
        self.gamma = np.asarray(self.gamma, dtype=float)[order]
        self.slope = np.asarray(self.slope, dtype=float)[order]

    def _interpolators(self):
        if self._interp is None:
            self._interp = PchipInterpolator(self.x, self.gamma)
            self._slope_interp = PchipInterpolator(self.x, self.slope)
        return self._interp, self._slope_interp

    @property
    def x_max(self) -> float:
        return float(self.x[-1])

    def gamma_at(self, x):
        self._check_range(x)
        return self._interpolators()[0](x)

    def slope_at(self, x):
        self._check_range(x)
        return self._interpolators()[1](x)

    def _check_range(self, x):
        x = np.asarray(x)
        if np.any(x < self.x[0] - 1e-12) or np.any(x > self.x[-1] + 1e-12):
            raise RangeError(
                f"x outside graph range [{self.x[0]:g}, {self.x[-1]:g}]")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("branch,x,gamma,slope\n")
            for xi, gi, si in zip(self.x, self.gamma, self.slope):
                fh.write(f"{self.branch},{xi:.17g},{gi:.17g},{si:.17g}\n")


def stable_graph(a_max: float = 0.2, samples: int = 60,
                 profile: ShearProfile | None = None,
                 tol: float = 1e-13,
                 n_terms: int | None = None) -> ManifoldGraph:
    """Stable branch gamma_s on [-a_max, a_max] from the minimiser.

    gamma_s(a) = y_0(a) = x_1(a) - a - h(a) for a > 0; slopes by centred
    differences on the sample grid; the negative branch is the odd
    reflection (composition of the two reversing involutions).

    n_terms overrides the default window length.  The algebraic tail rule
    leaks an O((N+c)^{-4.5} (1+c)^3) error into gamma, so callers that park
    orbits on the graph for many thousands of steps should raise it.
    """
    if profile is None:
        raise DomainError("stable_graph needs a profile")
    if not (0 < a_max <= 0.45):
        raise DomainError("a_max must lie in (0, 0.45]")
    a_grid = np.linspace(a_max / samples, a_max, samples)
    gamma = np.empty(samples)
    for i, a in enumerate(a_grid):
        gamma[i] = minimize_stable_sequence(
            a, N=n_terms, tol=tol, profile=profile).y0(profile)
    slope = np.gradient(gamma, a_grid)

    xs = np.concatenate((-a_grid[::-1], [0.0], a_grid))
    gs = np.concatenate((-gamma[::-1], [0.0], gamma))
    ss = np.concatenate((slope[::-1], [0.0], slope))
    return ManifoldGraph(branch="stable", x=xs, gamma=gs, slope=ss)


def unstable_graph(a_max: float = 0.2, samples: int = 60,
                   profile: ShearProfile | None = None,
                   tol: float = 1e-13,
                   stable: ManifoldGraph | None = None,
                   n_terms: int | None = None) -> ManifoldGraph:
    """Unstable branch gamma_u(x) = -gamma_s(x) - h(x) (x >= 0), odd-extended."""
    if stable is None:
        stable = stable_graph(a_max=a_max, samples=samples, profile=profile,
                              tol=tol, n_terms=n_terms)
    pos = stable.x >= 0.0
    xp = stable.x[pos]
    gp = -stable.gamma[pos] - profile.h(xp)
    sp = -stable.slope[pos] - profile.dh(xp)
    xs = np.concatenate((-xp[1:][::-1], xp))
    gs = np.concatenate((-gp[1:][::-1], gp))
    ss = np.concatenate((sp[1:][::-1], sp))
    return ManifoldGraph(branch="unstable", x=xs, gamma=gs, slope=ss)


def extend_unstable(graph: ManifoldGraph, profile: ShearProfile,
                    x_max: float = 0.49, max_sweeps: int = 40) -> ManifoldGraph:
    """Extend the unstable graph outward by iterating samples forward.

    Image points of (x, gamma_u(x)) stay on the manifold; slopes transform
    through the derivative cocycle u -> 1 - 1/(1 + h'(x) + u).  Extension
    stops at the chart square (x_max < 1/2).
    """
    x, g, s = graph.x.copy(), graph.gamma.copy(), graph.slope.copy()
    for _ in range(max_sweeps):
        if x[-1] >= x_max - 1e-9:
            break
        pos = x > 0.0
        hx = profile.h(x[pos])
        xi = x[pos] + hx + g[pos]
        gi = hx + g[pos]
        si = 1.0 - 1.0 / (1.0 + profile.dh(x[pos]) + s[pos])
        keep = xi <= x_max
        xi, gi, si = xi[keep], gi[keep], si[keep]
        new = xi > x[-1] + 1e-12
        if not np.any(new):
            break
        x = np.concatenate((x, xi[new]))
        g = np.concatenate((g, gi[new]))
        s = np.concatenate((s, si[new]))
        order = np.argsort(x)
        x, g, s = x[order], g[order], s[order]
    pos = x >= 0.0
    xp, gp, sp = x[pos], g[pos], s[pos]
    xs = np.concatenate((-xp[1:][::-1], xp))
    gs = np.concatenate((-gp[1:][::-1], gp))
    ss = np.concatenate((sp[1:][::-1], sp))
    return ManifoldGraph(branch=graph.branch, x=xs, gamma=gs, slope=ss)


# ---------------------------------------------------------------------------
# restricted boundary maps


class RestrictedMap:
    """The map restricted to a manifold branch: f(x) = x + h(x) + gamma(x).

    Strictly increasing with f(0) = 0; inverse by Newton safeguarded with
    bisection on the interpolated graph.
    """

    def __init__(self, graph: ManifoldGraph, profile: ShearProfile):
        self.graph = graph
        self.profile = profile
        fine = np.linspace(graph.x[0], graph.x[-1], 4 * len(graph.x))
        vals = fine + profile.h(fine) + graph.gamma_at(fine)
        if np.any(np.diff(vals) <= 0.0):
            raise DomainError("restricted map is not strictly increasing")

    def __call__(self, x):
        g = self.graph.gamma_at(x)
        return x + self.profile.h(x) + g

    def derivative(self, x):
        return 1.0 + self.profile.dh(x) + self.graph.slope_at(x)

    def inverse(self, target: float) -> float:
        """f^{-1}(target) = target - gamma(target).

        Exact on the manifold: the graph is invariant, so the preimage of
        (target, gamma(target)) under the torus map has x-coordinate
        target - gamma(target).
        """
        self.graph._check_range(np.asarray(target))
        return float(target - self.graph.gamma_at(target))

    def backward_orbit(self, x: float, n: int) -> np.ndarray:
        out = np.empty(n + 1)
        out[0] = x
        for k in range(1, n + 1):
            out[k] = self.inverse(out[k - 1])
        return out


def restricted_map_fu(x, graph: ManifoldGraph, profile: ShearProfile):
    """f_u(x) = x + h(x) + gamma_u(x) on the unstable graph."""
    return RestrictedMap(graph, profile)(x)


def restricted_map_fs(x, graph: ManifoldGraph, profile: ShearProfile):
    """f_s(x) = x + h(x) + gamma_s(x) on the stable graph."""
    return RestrictedMap(graph, profile)(x)


@dataclass
class ManifoldSlope:
    """Slope of the unstable graph at x with its derivative series value."""

    u: float
    du: float
    depth: int
    contraction: float


def manifold_slope(x: float, graph: ManifoldGraph, profile: ShearProfile,
                   tol: float = 1e-12, cap: int = 200_000) -> ManifoldSlope:
    """gamma_u'(x) by seeding 2/A * f_u^{-n}(x) deep down the branch.

    The seed is pushed forward through the slope cocycle along the backward
    f_u-orbit; the accumulated contraction prod(lambda)^{-2}, scaled by the
    seed size |x_n|, certifies seed-independence below tol (a seed
    perturbation of the seed's own size changes the result by less than
    tol).  Also returns the truncated curvature series
    du = sum_k lambda_{u,k}^{-3} h''(x_k).
    """
    if x == 0.0:
        raise DomainError("manifold_slope needs x != 0 (slope at 0 is 0)")
    fu = RestrictedMap(graph, profile)
    twoainv = 2.0 / profile.A
    xs = [x]
    n = 0
    log_lam = 0.0
    contraction = 1.0
    while contraction * abs(xs[-1]) > tol and n < cap:
        xs.append(fu.inverse(xs[-1]))
        n += 1
        log_lam += math.log(fu.derivative(xs[-1]))
        contraction = math.exp(-2.0 * log_lam)
    if contraction * abs(xs[-1]) > tol:
        raise ConvergenceError(
            f"manifold_slope: contraction {contraction:.2e} > tol at cap",
            residual=contraction)
    u = twoainv * xs[n]
    lam_prod = 1.0
    du = 0.0
    us = np.empty(n + 1)
    us[n] = u
    for k in range(n, 0, -1):
        u = 1.0 - 1.0 / (1.0 + profile.dh(xs[k]) + u)
        us[k - 1] = u
    # curvature series along the backward orbit with the computed slopes
    for k in range(1, n + 1):
        lam_prod *= 1.0 + profile.dh(xs[k]) + us[k]
        du += lam_prod ** -3 * profile.d2h(xs[k])
    return ManifoldSlope(u=float(us[0]), du=float(du), depth=n,
                         contraction=float(contraction))


# ---------------------------------------------------------------------------
# leaves, local product, holonomy


def _integrate_leaf(x0: float, y0: float, x1: float, field_fn, n_min: int = 8,
                    dx_max: float = 0.004) -> float:
    """RK4 integration of y' = field_fn(x, y) from (x0, y0) to x = x1."""
    span = x1 - x0
    if span == 0.0:
        return y0
    n = max(n_min, int(math.ceil(abs(span) / dx_max)))
    h = span / n
    x, y = x0, y0
    for _ in range(n):
        k1 = field_fn(x, y)
        k2 = field_fn(x + 0.5 * h, y + 0.5 * h * k1)
        k3 = field_fn(x + 0.5 * h, y + 0.5 * h * k2)
        k4 = field_fn(x + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        x += h
    return y


@dataclass(frozen=True)
class StableLeaf:
    """A local stable leaf, represented by a base point on it."""

    base: TorusPoint


@dataclass
class HolonomyResult:
    """Unstable holonomy image with its arc-length Jacobian estimate."""

    image: TorusPoint
    jacobian: float
    separation: float


def local_product_bracket(xi: TorusPoint, eta: TorusPoint, dirs,
                          leaf_span: float = 0.08,
                          residual_tol: float = 1e-9) -> TorusPoint:
    """Intersection of the unstable leaf through xi with the stable leaf
    through eta.

    Both leaves are integrated as graphs over x using the pointwise slope
    fields; the crossing abscissa is found by monotone root finding on
    their difference (which has derivative u + v > 0).
    """
    if xi == eta:
        return xi

    def u_field(x, y):
        return dirs.u(x, y)

    def ms_field(x, y):
        return -dirs.v(x, y)

    def gap(x):
        yu = _integrate_leaf(xi.x, xi.y, x, u_field)
        ys = _integrate_leaf(eta.x, eta.y, x, ms_field)
        return yu - ys

    x_guess = _line_crossing(xi, eta, dirs)
    lo = hi = x_guess
    glo = ghi = gap(x_guess)
    step_out = max(1e-4, 0.25 * abs(xi.x - eta.x) + 1e-4)
    for _ in range(60):
        if glo > 0.0:
            lo -= step_out
            if abs(lo - xi.x) > leaf_span:
                raise BracketFailureError("no crossing within the leaf span")
            glo = gap(lo)
        elif ghi < 0.0:
            hi += step_out
            if abs(hi - xi.x) > leaf_span:
                raise BracketFailureError("no crossing within the leaf span")
            ghi = gap(hi)
        else:
            break
        step_out *= 1.6
    if glo > 0.0 or ghi < 0.0:
        raise BracketFailureError("no sign change for the leaf crossing")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        gm = gap(mid)
        if abs(gm) < 0.25 * residual_tol or hi - lo < 1e-15:
            y_star = _integrate_leaf(xi.x, xi.y, mid, u_field)
            return TorusPoint(float(mid), float(y_star))
        if gm > 0.0:
            hi = mid
        else:
            lo = mid
    raise BracketFailureError("leaf crossing did not converge")


def _line_crossing(xi: TorusPoint, eta: TorusPoint, dirs) -> float:
    u0 = dirs.u(xi.x, xi.y)
    v0 = dirs.v(eta.x, eta.y)
    denom = u0 + v0
    if denom <= 0.0:
        return 0.5 * (xi.x + eta.x)
    return (eta.y - xi.y + u0 * xi.x + v0 * eta.x) / denom


def unstable_holonomy(leaf1: StableLeaf, leaf2: StableLeaf, xi: TorusPoint,
                      dirs, arc_frac: float = 1e-4,
                      r: float = 0.2) -> HolonomyResult:
    """Slide xi from leaf1 to leaf2 along the unstable foliation.

    The Jacobian is a symmetric difference quotient of arc-length
    parameters with spacing arc_frac * r along leaf1.
    """
    if leaf1.base == leaf2.base:
        return HolonomyResult(image=xi, jacobian=1.0, separation=0.0)

    def image_of(p: TorusPoint) -> TorusPoint:
        try:
            return local_product_bracket(p, leaf2.base, dirs)
        except BracketFailureError as e:
            raise HolonomyError(f"holonomy image failed: {e}") from e

    img = image_of(xi)
    d = math.hypot(img.x - xi.x, img.y - xi.y)

    delta = arc_frac * r
    v0 = dirs.v(xi.x, xi.y)
    norm = math.hypot(1.0, v0)
    dxp = delta / norm
    p_plus = TorusPoint(xi.x + dxp, xi.y - v0 * dxp)
    p_minus = TorusPoint(xi.x - dxp, xi.y + v0 * dxp)
    img_p = image_of(p_plus)
    img_m = image_of(p_minus)
    arc_img = math.hypot(img_p.x - img_m.x, img_p.y - img_m.y)
    # difference quotient of arc lengths; leaves are C^1 so the chord is
    # second-order close to the arc at this spacing
    jac = arc_img / (2.0 * delta)
    if jac <= 0.0 or not math.isfinite(jac):
        raise HolonomyError("degenerate holonomy Jacobian")
    return HolonomyResult(image=img, jacobian=float(jac), separation=float(d))
