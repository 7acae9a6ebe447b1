"""Pointwise stable/unstable directions, cone certificates and expansion.

The unstable direction at p is (1, u(p)) with u >= 0; it is the limit of
pushing any nonnegative seed slope forward along the backward orbit through
the cocycle

    u(T q) = 1 - 1/(1 + h'(x_q) + u(q)),      lambda_u(q) = 1 + h'(x_q) + u(q).

The update is monotone and contracting in u (derivative lambda^{-2}), so
pushing the two extreme seeds 0 and 1 through the same orbit brackets the
invariant slope with a certified width; the backward depth is grown until
the width is below the requested tolerance.  The stable direction (1, -v)
is computed the same way on the inverse map (forward orbit), not by
involution transport, so the two reversibility routes stay independent
cross-checks.

Expansion products lambda_{u,n} = prod lambda_u(T^{-k} p) and contraction
products mu_{s,n} = prod (1 + v(T^{-i} p)) are tied by the exact symplectic
(Wronskian) identity

    mu_{s,n} (v_{-n} + u_{-n}) = lambda_{u,n} (u_0 + v_0),

whose measured residual is a direct probe of slope-field error.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DomainError, PrecisionError
from .map_core import TorusPoint, step, step_inverse
from .profiles import ShearProfile

_V_SEED_PAD = 1.0  # stable slopes live in [0, dh_max + 1)


@dataclass(frozen=True)
class SlopeResult:
    """One-sided slope with its certified seed-independence bound."""

    value: float
    err: float
    depth: int


@dataclass(frozen=True)
class SlopeRecord:
    """Both slopes at a point; theta = u + v is the direction separation."""

    u: float
    v: float
    theta: float
    depth: int
    err: float


@dataclass
class ExpansionRecord:
    """Expansion/contraction products along an orbit segment.

    lambda_prefix[k] = lambda_{u,k}, mu_prefix[k] = mu_{s,k} for k = 0..n.
    """

    n: int
    lambda_prefix: np.ndarray
    mu_prefix: np.ndarray

    @property
    def lambda_un(self) -> float:
        return float(self.lambda_prefix[-1])

    @property
    def mu_sn(self) -> float:
        return float(self.mu_prefix[-1])


@dataclass(frozen=True)
class ConeSpec:
    """Fitted pinching constants of the cone K-(|x|+sqrt|y|) <= u <= K+(...)."""

    K_minus: float
    K_plus: float
    samples: int
    seed: int


def push_u(p: TorusPoint, u: float, profile: ShearProfile) -> tuple[float, float]:
    """Image slope and stretch factor of (1, u) under DT at p."""
    if u < 0:
        raise DomainError("push_u needs a slope in the positive cone (u >= 0)")
    lam = 1.0 + profile.dh(p.x) + u
    return 1.0 - 1.0 / lam, lam


def push_s(p: TorusPoint, v: float, profile: ShearProfile) -> tuple[float, float]:
    """Slope v' with DT^{-1} (1, -v) = mu (1, -v') at T^{-1}(p), and mu = 1+v."""
    if v < 0:
        raise DomainError("push_s needs a slope in the positive cone (v >= 0)")
    x_pre = p.x - p.y
    x_pre -= math.floor(x_pre + 0.5)
    return profile.dh(x_pre) + v / (1.0 + v), 1.0 + v


def _slope_u_python(profile, x0, y0, tol, cap):
    n = 64
    while True:
        q = TorusPoint(x0, y0)
        xs = [x0]
        for _ in range(n):
            q = step_inverse(q, profile)
            xs.append(q.x)
        lo, hi = 0.0, 1.0
        for k in range(n, 0, -1):
            hp = profile.dh(xs[k])
            lo = 1.0 - 1.0 / (1.0 + hp + lo)
            hi = 1.0 - 1.0 / (1.0 + hp + hi)
        if hi - lo <= 2.0 * tol:
            return 0.5 * (lo + hi), 0.5 * (hi - lo), n, True
        if n >= cap:
            return 0.5 * (lo + hi), 0.5 * (hi - lo), n, False
        n = min(2 * n, cap)


def _slope_v_python(profile, x0, y0, tol, cap):
    n = 64
    while True:
        q = TorusPoint(x0, y0)
        xs = [x0]
        for _ in range(n):
            q = step(q, profile)
            xs.append(q.x)
        lo, hi = 0.0, profile.dh_max + _V_SEED_PAD
        for k in range(n - 1, -1, -1):
            hp = profile.dh(xs[k])
            lo = hp + lo / (1.0 + lo)
            hi = hp + hi / (1.0 + hi)
        if hi - lo <= 2.0 * tol:
            return 0.5 * (lo + hi), 0.5 * (hi - lo), n, True
        if n >= cap:
            return 0.5 * (lo + hi), 0.5 * (hi - lo), n, False
        n = min(2 * n, cap)


def unstable_slope(p: TorusPoint, tol: float = 1e-12,
                   profile: ShearProfile | None = None,
                   cap: int = 1_000_000, strict: bool = True) -> SlopeResult:
    """Certified unstable slope u(p); u(0) = 0 by continuity.

    With strict=True a depth-cap hit raises PrecisionError; otherwise the
    midpoint is returned with the uncertified bracket half-width in err
    (this only happens astronomically close to the fixed point).
    """
    if p.x == 0.0 and p.y == 0.0:
        return SlopeResult(0.0, 0.0, 0)
    if profile.kernel_id is not None:
        u, err, depth, ok = _kernels.slope_u(
            profile.kernel_id, profile.kernel_param, p.x, p.y, tol, cap)
    else:
        u, err, depth, ok = _slope_u_python(profile, p.x, p.y, tol, cap)
    if not ok and strict:
        raise PrecisionError(
            f"unstable slope at ({p.x:g}, {p.y:g}): bracket {err:.2e} > {tol:g} "
            f"at depth cap {cap}")
    return SlopeResult(float(u), float(err), int(depth))


def stable_slope(p: TorusPoint, tol: float = 1e-12,
                 profile: ShearProfile | None = None,
                 cap: int = 1_000_000, strict: bool = True) -> SlopeResult:
    """Certified stable slope v(p) (direction (1, -v)); mirror of unstable_slope."""
    if p.x == 0.0 and p.y == 0.0:
        return SlopeResult(0.0, 0.0, 0)
    if profile.kernel_id is not None:
        v, err, depth, ok = _kernels.slope_v(
            profile.kernel_id, profile.kernel_param, profile.dh_max,
            p.x, p.y, tol, cap)
    else:
        v, err, depth, ok = _slope_v_python(profile, p.x, p.y, tol, cap)
    if not ok and strict:
        raise PrecisionError(
            f"stable slope at ({p.x:g}, {p.y:g}): bracket {err:.2e} > {tol:g} "
            f"at depth cap {cap}")
    return SlopeResult(float(v), float(err), int(depth))


def slope_record(p: TorusPoint, tol: float = 1e-12,
                 profile: ShearProfile | None = None,
                 cap: int = 1_000_000) -> SlopeRecord:
    """Both slopes and their separation theta = u + v at p."""
    ru = unstable_slope(p, tol=tol, profile=profile, cap=cap)
    rv = stable_slope(p, tol=tol, profile=profile, cap=cap)
    return SlopeRecord(u=ru.value, v=rv.value, theta=ru.value + rv.value,
                       depth=max(ru.depth, rv.depth), err=max(ru.err, rv.err))


class SlopeField:
    """Callable slope-field provider bound to a profile and tolerance.

    Safe to share across threads; per-point queries are pure.  Batch
    evaluation splits the point list into fixed blocks so results are
    identical for any worker count.
    """

    def __init__(self, profile: ShearProfile, tol: float = 1e-10,
                 cap: int = 1_000_000):
        self.profile = profile
        self.tol = tol
        self.cap = cap

    def u(self, x: float, y: float) -> float:
        return unstable_slope(TorusPoint(x, y), tol=self.tol,
                              profile=self.profile, cap=self.cap).value

    def v(self, x: float, y: float) -> float:
        return stable_slope(TorusPoint(x, y), tol=self.tol,
                            profile=self.profile, cap=self.cap).value

    def theta(self, x: float, y: float) -> float:
        return self.u(x, y) + self.v(x, y)

    def records(self, xs, ys, workers: int = 1) -> list[SlopeRecord]:
        pts = [TorusPoint(float(x), float(y)) for x, y in zip(xs, ys)]

        def block(span):
            return [slope_record(p, tol=self.tol, profile=self.profile,
                                 cap=self.cap) for p in pts[span[0]:span[1]]]

        if workers <= 1:
            return block((0, len(pts)))
        size = max(1, (len(pts) + 4 * workers - 1) // (4 * workers))
        spans = [(i, min(i + size, len(pts))) for i in range(0, len(pts), size)]
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(block, spans))
        return [r for part in parts for r in part]


def records_to_csv(path, xs, ys, records) -> None:
    """Dump slope records as CSV columns (x, y, u, v, theta, depth, err)."""
    with open(path, "w", newline="\n") as fh:
        fh.write("x,y,u,v,theta,depth,err\n")
        for x, y, r in zip(xs, ys, records):
            fh.write(f"{x:.17g},{y:.17g},{r.u:.17g},{r.v:.17g},"
                     f"{r.theta:.17g},{r.depth},{r.err:.3g}\n")


# ---------------------------------------------------------------------------
# chains along an orbit


def _chain_arrays(p: TorusPoint, n: int, profile: ShearProfile, tol: float,
                  cap: int):
    """Backward orbit coords with certified u and exactly-propagated v.

    Returns (xs, us, vs) for indices 0..n (index k = T^{-k} p).
    """
    if profile.kernel_id is None:
        raise DomainError("orbit chains need a built-in profile (fast path)")
    xs, us, err, depth, ok = _kernels.chain_u(
        profile.kernel_id, profile.kernel_param, p.x, p.y, n, tol, cap)
    if not ok:
        raise PrecisionError(
            f"slope chain at ({p.x:g},{p.y:g}): bracket {err:.2e} > {tol:g}")
    v0 = stable_slope(p, tol=tol, profile=profile, cap=cap).value
    vs = _kernels.prop_v_backward(profile.kernel_id, profile.kernel_param,
                                  xs, v0)
    return xs, us, vs


def expansion_product(p: TorusPoint, n: int,
                      profile: ShearProfile | None = None,
                      tol: float = 1e-12, cap: int = 4_000_000) -> ExpansionRecord:
    """lambda_{u,k} and mu_{s,k} prefix products for k = 0..n at p."""
    xs, us, vs = _chain_arrays(p, n, profile, tol, cap)
    lam = 1.0 + profile.dh(xs[1:]) + us[1:]
    mu = 1.0 + vs[:-1]
    lam_prefix = np.concatenate(([1.0], np.cumprod(lam)))
    mu_prefix = np.concatenate(([1.0], np.cumprod(mu)))
    return ExpansionRecord(n=n, lambda_prefix=lam_prefix, mu_prefix=mu_prefix)


def wronskian_residual(p: TorusPoint, n: int,
                       profile: ShearProfile | None = None,
                       tol: float = 1e-12) -> float:
    """Relative residual of mu_{s,n}(v_{-n}+u_{-n}) = lambda_{u,n}(u_0+v_0).

    The identity is exact for the invariant fields, so the residual measures
    only slope-field error.
    """
    if n == 0:
        return 0.0
    xs, us, vs = _chain_arrays(p, n, profile, tol, cap=4_000_000)
    lam_n = float(np.prod(1.0 + profile.dh(xs[1:]) + us[1:]))
    mu_n = float(np.prod(1.0 + vs[:-1]))
    lhs = mu_n * (vs[n] + us[n])
    rhs = lam_n * (us[0] + vs[0])
    return abs(lhs - rhs) / abs(rhs)


def cone_fit(samples: int = 10_000, seed: int = 0,
             profile: ShearProfile | None = None, tol: float = 1e-10,
             exclude: float = 1e-6, workers: int = 1) -> ConeSpec:
    """Fit the cone constants K-+ of u(p) / (|x| + sqrt|y|) on random points.

    Uniform sample on the chart, excluding a ball of radius `exclude` at the
    origin where the quotient degenerates.
    """
    if samples < 10:
        raise DomainError("cone_fit needs a nontrivial sample")
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-0.5, 0.5, size=(samples, 2))
    r = np.hypot(pts[:, 0], pts[:, 1])
    pts = pts[r > exclude]
    ratios = np.empty(len(pts))

    def block(span):
        i0, i1 = span
        for i in range(i0, i1):
            x, y = pts[i]
            u = unstable_slope(TorusPoint(x, y), tol=tol, profile=profile).value
            ratios[i] = u / (abs(x) + math.sqrt(abs(y)))

    size = max(1, (len(pts) + 63) // 64)
    spans = [(i, min(i + size, len(pts))) for i in range(0, len(pts), size)]
    if workers <= 1:
        for s in spans:
            block(s)
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            list(ex.map(block, spans))
    return ConeSpec(K_minus=float(ratios.min()), K_plus=float(ratios.max()),
                    samples=len(pts), seed=seed)


# ---------------------------------------------------------------------------
# regularity series


def du_along_u(p: TorusPoint, profile: ShearProfile | None = None,
               tol: float = 1e-8, cap: int = 4_000_000,
               n0: int = 256) -> float:
    """Derivative of u along the unstable direction by its cocycle series.

    partial^u u(p) = sum_{k>=1} lambda_{u,k}(p)^{-3} h''(x_{-k}); the series
    is truncated when the geometric tail bound built from the computed
    lambda products drops below tol.
    """
    if p.x == 0.0 and p.y == 0.0:
        raise DomainError("du_along_u needs p != 0")
    h2max = _d2h_max(profile)
    n = n0
    while True:
        xs, us, _ = _chain_arrays(p, n, profile, tol=min(tol, 1e-10), cap=cap)
        lam = 1.0 + profile.dh(xs[1:]) + us[1:]
        lam_prefix = np.cumprod(lam)
        total = float(np.sum(lam_prefix ** -3 * profile.d2h(xs[1:])))
        rho = float(np.min(lam[-32:]))
        if rho > 1.0 + 1e-12:
            tail = h2max * lam_prefix[-1] ** -3 / (rho ** 3 - 1.0)
            if tail < tol:
                return total
        if n >= cap:
            raise PrecisionError("du_along_u: tail bound stalled at cap")
        n = min(2 * n, cap)


def du_along_s(p: TorusPoint, profile: ShearProfile | None = None,
               tol: float = 1e-8, cap: int = 4_000_000,
               n0: int = 256) -> float:
    """Derivative of u along the stable direction by its mixed series.

    partial^s u(p) = sum_{n>=0} lambda_{u,n}(p)^{-2} mu_{s,n+1}(p) h''(x_{-n}),
    truncated by a ratio-based geometric tail bound.
    """
    if p.x == 0.0 and p.y == 0.0:
        raise DomainError("du_along_s needs p != 0")
    h2max = _d2h_max(profile)
    n = n0
    while True:
        xs, us, vs = _chain_arrays(p, n, profile, tol=min(tol, 1e-10), cap=cap)
        lam = 1.0 + profile.dh(xs[1:]) + us[1:]
        mu = 1.0 + vs[:-1]
        lam_prefix = np.concatenate(([1.0], np.cumprod(lam)))
        mu_prefix = np.cumprod(mu)
        weights = lam_prefix[:-1] ** -2 * mu_prefix
        total = float(np.sum(weights * profile.d2h(xs[:-1])))
        ratios = mu[-32:] / lam[-32:] ** 2
        r = float(np.max(ratios))
        if r < 1.0 - 1e-12:
            tail = h2max * weights[-1] * r / (1.0 - r)
            if tail < tol:
                return total
        if n >= cap:
            raise PrecisionError("du_along_s: tail bound stalled at cap")
        n = min(2 * n, cap)


def _d2h_max(profile: ShearProfile) -> float:
    grid = np.linspace(-0.5, 0.5, 257)
    return float(np.max(np.abs(profile.d2h(grid))))
