"""The area-preserving torus map, its symmetries and near-fixed-point geometry.

The map family is

    T(x, y) = (x + h(x) + y,  h(x) + y)   (mod 1 in both coordinates)

on the chart [-1/2, 1/2)^2, where h is a ShearProfile.  The origin is a
neutral fixed point (the linearisation is the unit shear), det DT = 1
everywhere, and T is reversible under the involutions
Pi(x,y) = (x, -y-h(x)) and Pi1(x,y) = (-x, y+h(x)).

Near the origin the quasi-Hamiltonian

    H(x, y) = y^2/2 - G(x) + h(x) y / 2 - h'(x) y^2 / 12 + h(x)^2 / 12

is invariant up to O(x^8 + y^4) per step, which organises nearby orbits
along its level curves y = Upsilon_E(x) and yields quantitative passage
statistics through the parabolic sector |y| >= M x^2.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import (
    DomainError,
    EscapeNotObservedError,
    NotApplicableError,
    RootNotFoundError,
)
from .profiles import ShearProfile


class TorusPoint(NamedTuple):
    """Canonical coordinates on the torus chart [-1/2, 1/2)^2."""

    x: float
    y: float


def reduce(x: float, y: float) -> TorusPoint:
    """Canonical torus representative of (x, y); idempotent.

    Both coordinates are reduced mod 1 into [-1/2, 1/2); the half-integer
    boundary maps to -1/2.
    """
    if not (math.isfinite(x) and math.isfinite(y)):
        raise DomainError(f"non-finite input to reduce: ({x!r}, {y!r})")
    return TorusPoint(x - math.floor(x + 0.5), y - math.floor(y + 0.5))


def reduce_arrays(x, y):
    """Vectorized chart reduction (no finiteness check)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return x - np.floor(x + 0.5), y - np.floor(y + 0.5)


def step(p: TorusPoint, profile: ShearProfile) -> TorusPoint:
    """One forward application of the map."""
    hx = profile.h(p.x)
    return reduce(p.x + hx + p.y, hx + p.y)


def step_inverse(p: TorusPoint, profile: ShearProfile) -> TorusPoint:
    """One backward application; exact inverse of step (mod chart reduction)."""
    x0 = p.x - p.y
    x0 -= math.floor(x0 + 0.5)
    return reduce(x0, p.y - profile.h(x0))


def step_arrays(x, y, profile: ShearProfile):
    """Vectorized forward step on coordinate arrays."""
    hx = profile.h(x)
    return reduce_arrays(x + hx + y, hx + y)


def step_inverse_arrays(x, y, profile: ShearProfile):
    """Vectorized backward step on coordinate arrays."""
    x0 = x - y
    x0 = x0 - np.floor(x0 + 0.5)
    y0 = y - profile.h(x0)
    return x0, y0 - np.floor(y0 + 0.5)


def orbit(p: TorusPoint, n: int, profile: ShearProfile, backward: bool = False):
    """Orbit arrays (xs, ys) with index k holding T^{±k}(p), k = 0..n."""
    if profile.kernel_id is not None:
        fn = _kernels.orbit_backward if backward else _kernels.orbit_forward
        return fn(profile.kernel_id, profile.kernel_param, p.x, p.y, n)
    xs = np.empty(n + 1)
    ys = np.empty(n + 1)
    q = p
    xs[0], ys[0] = q
    stepper = step_inverse if backward else step
    for k in range(1, n + 1):
        q = stepper(q, profile)
        xs[k], ys[k] = q
    return xs, ys


@dataclass(frozen=True)
class Jacobian2:
    """2x2 derivative of the map; determinant is 1 up to roundoff."""

    a11: float
    a12: float
    a21: float
    a22: float

    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a21

    def apply(self, v1: float, v2: float) -> tuple[float, float]:
        return self.a11 * v1 + self.a12 * v2, self.a21 * v1 + self.a22 * v2


def jacobian(p: TorusPoint, profile: ShearProfile) -> Jacobian2:
    """DT at p: [[1 + h'(x), 1], [h'(x), 1]]."""
    hp = profile.dh(p.x)
    return Jacobian2(1.0 + hp, 1.0, hp, 1.0)


def involution_pi(p: TorusPoint, profile: ShearProfile) -> TorusPoint:
    """Pi(x, y) = (x, -y - h(x)); conjugates T to its inverse."""
    return reduce(p.x, -p.y - profile.h(p.x))


def involution_pi1(p: TorusPoint, profile: ShearProfile) -> TorusPoint:
    """Pi1(x, y) = (-x, y + h(x)); second reversing involution (h odd)."""
    return reduce(-p.x, p.y + profile.h(p.x))


def conjugate_to_standard(p: TorusPoint) -> tuple[float, float]:
    """Symplectic change of variables q = x - y, p = y (q reduced mod 1)."""
    q = p.x - p.y
    return q - math.floor(q + 0.5), p.y


def conjugate_from_standard(q: float, mom: float) -> TorusPoint:
    """Inverse of conjugate_to_standard."""
    return reduce(q + mom, mom)


def standard_step(q: float, mom: float, profile: ShearProfile) -> tuple[float, float]:
    """One step of the conjugated (standard-map form) dynamics."""
    qn = q + mom
    qn -= math.floor(qn + 0.5)
    pn = mom + profile.h(qn)
    return qn, pn - math.floor(pn + 0.5)


# ---------------------------------------------------------------------------
# quasi-Hamiltonian


def quasi_hamiltonian(p, profile: ShearProfile, compensated: bool = False):
    """H(x, y) = y^2/2 - G(x) + h(x)y/2 - h'(x)y^2/12 + h(x)^2/12.

    Works on points or coordinate arrays; the point is taken in the chart
    centred at the origin (no wrap-around is meaningful far from 0).  With
    compensated=True the five terms are added with exact (fsum) summation,
    which matters when tracking near-neutral orbits over many steps.
    """
    if isinstance(p, TorusPoint):
        x, y = p
    else:
        x, y = p
    hx = profile.h(x)
    terms = (
        0.5 * y * y,
        -profile.G(x),
        0.5 * hx * y,
        -profile.dh(x) * y * y / 12.0,
        hx * hx / 12.0,
    )
    if compensated and np.isscalar(terms[0]):
        return math.fsum(terms)
    return terms[0] + terms[1] + terms[2] + terms[3] + terms[4]


def hamiltonian_drift(p: TorusPoint, profile: ShearProfile,
                      compensated: bool = False) -> float:
    """H(T(p)) - H(p) with T applied in the local (unreduced) chart."""
    hx = profile.h(p.x)
    x1 = p.x + hx + p.y
    y1 = hx + p.y
    h0 = quasi_hamiltonian((p.x, p.y), profile, compensated=compensated)
    h1 = quasi_hamiltonian((x1, y1), profile, compensated=compensated)
    return h1 - h0


def level_curve_y(E: float, x: float, profile: ShearProfile,
                  tol: float = 1e-13, max_iter: int = 80) -> float:
    """Negative-y solution of H(x, y) = E by safeguarded Newton.

    Starts from the expansion y ~ -sqrt(2 (E + G(x))) and polishes inside a
    sign-change bracket; the residual |H(x, y) - E| is at most tol on return.
    """
    if E < 0:
        raise DomainError("level_curve_y needs E >= 0")
    if abs(x) > 0.5:
        raise DomainError("level_curve_y: |x| must be <= 1/2")
    if E == 0.0 and x == 0.0:
        return 0.0

    hx = float(profile.h(x))
    hpx = float(profile.dh(x))
    Gx = float(profile.G(x))

    def f(y):
        return (0.5 - hpx / 12.0) * y * y + 0.5 * hx * y + (hx * hx / 12.0 - Gx - E)

    def fp(y):
        return (1.0 - hpx / 6.0) * y + 0.5 * hx

    y = -math.sqrt(2.0 * (E + Gx))
    # bracket [ylo, 0]: f(0) <= 0 in the admissible regime, f -> +inf below
    ylo = min(2.0 * y, -1e-12)
    k = 0
    while f(ylo) < 0.0:
        ylo *= 2.0
        k += 1
        if k > 60:
            raise RootNotFoundError("level_curve_y: no sign change below y = 0")
    yhi = 0.0
    if f(yhi) > tol:
        raise RootNotFoundError("level_curve_y: no negative-y solution")
    if abs(f(y)) <= tol:
        return y
    for _ in range(max_iter):
        d = fp(y)
        ynew = y - f(y) / d if d != 0.0 else 0.5 * (ylo + yhi)
        if not (ylo <= ynew <= yhi):
            ynew = 0.5 * (ylo + yhi)
        fy = f(ynew)
        if abs(fy) <= tol:
            return ynew
        if fy > 0.0:
            ylo = ynew
        else:
            yhi = ynew
        y = ynew
    raise RootNotFoundError(f"level_curve_y: stalled at residual {f(y):.3e}")


# ---------------------------------------------------------------------------
# sectors and passages


class SectorClass(enum.Enum):
    """Location of a point relative to the near-origin sector geometry."""

    PARABOLIC_CORE = "parabolic_core"
    QUADRANT13 = "quadrant13"
    QUADRANT24 = "quadrant24"
    OUTSIDE = "outside"


def classify(p: TorusPoint, M: float | None = None, delta: float = 0.1,
             profile: ShearProfile | None = None) -> SectorClass:
    """Classify p against the parabolic sector |y| >= M x^2 inside Q_delta.

    M defaults to sqrt(b) of the profile.  Points outside the square
    [-delta, delta]^2 are OUTSIDE; inside, membership in the parabolic
    sector wins, otherwise the sign of x*y picks the quadrant pair.
    """
    if M is None:
        if profile is None:
            raise DomainError("classify needs M or a profile to default M = sqrt(b)")
        M = math.sqrt(profile.b)
    if not (M > 0 and 0 < delta <= 0.5):
        raise DomainError("classify needs M > 0 and delta in (0, 1/2]")
    if abs(p.x) > delta or abs(p.y) > delta:
        return SectorClass.OUTSIDE
    if abs(p.y) >= M * p.x * p.x:
        return SectorClass.PARABOLIC_CORE
    return SectorClass.QUADRANT13 if p.x * p.y >= 0 else SectorClass.QUADRANT24


@dataclass
class PassageRecord:
    """Backward passage through the parabolic sector.

    m_plus : first backward index inside the parabolic sector
    m      : largest backward index with x <= 0 (closest approach)
    m_minus: last backward index inside the parabolic sector
    E      : quasi-Hamiltonian at the closest approach (positive in the fat
             sector)
    """

    m_plus: int
    m_minus: int
    m: int
    E: float
    xs: np.ndarray = field(repr=False, default=None)
    ys: np.ndarray = field(repr=False, default=None)


def fat_sector_passage(p: TorusPoint, profile: ShearProfile,
                       M: float | None = None, cap: int = 10_000_000,
                       compensated: bool = False) -> PassageRecord:
    """Track the backward orbit of a fat-sector point through |y| >= M x^2.

    Expects a point below the unstable manifold with x <= 0 (the other
    sectors reduce to this one by the reversing involutions).  The backward
    orbit then moves monotonically to the right; tracking stops once it has
    passed x = |x_0|, by which point it has left the parabolic sector.
    """
    if M is None:
        M = math.sqrt(profile.b)
    if p.y >= 0.0 or p.x > 0.0:
        raise NotApplicableError(
            "fat_sector_passage expects x <= 0, y < 0 (lower fat sector)")
    x_stop = max(abs(p.x), 1e-6)

    chunks_x = [np.array([p.x])]
    chunks_y = [np.array([p.y])]
    q = p
    total = 0
    chunk = 4096
    while True:
        xs_c, ys_c = orbit(q, chunk, profile, backward=True)
        chunks_x.append(xs_c[1:])
        chunks_y.append(ys_c[1:])
        q = TorusPoint(xs_c[-1], ys_c[-1])
        total += chunk
        if xs_c[-1] > x_stop or xs_c[-1] > 0.45:
            break
        if ys_c[-1] >= 0.0:
            raise NotApplicableError(
                "backward orbit left the lower fat sector (y became >= 0)")
        if total >= cap:
            raise NotApplicableError(
                f"backward orbit did not exit past x = {x_stop:g} within {cap} steps")
    xs = np.concatenate(chunks_x)
    ys = np.concatenate(chunks_y)
    # trim strictly past the stopping abscissa
    past = np.nonzero(xs > min(x_stop, 0.45))[0]
    if past.size:
        end = past[0] + 1
        xs, ys = xs[:end], ys[:end]

    in_pm = np.abs(ys) >= M * xs * xs
    idx = np.nonzero(in_pm)[0]
    if idx.size == 0:
        raise NotApplicableError("backward orbit never entered the parabolic sector")
    nonpos = np.nonzero(xs <= 0.0)[0]
    m = int(nonpos[-1])
    m_plus = int(idx[0])
    m_minus = int(idx[-1])
    E = quasi_hamiltonian((float(xs[m]), float(ys[m])), profile,
                          compensated=compensated)
    return PassageRecord(m_plus=m_plus, m_minus=m_minus, m=m, E=float(E),
                         xs=xs, ys=ys)


def passage_time_bounds(E: float, b: float) -> dict:
    """Reference bounds for a parabolic-sector passage at energy E.

    Returns the entry-time bound and the two crossing-time bounds that a
    recorded passage is compared against (M = sqrt(b) convention).
    """
    A = math.sqrt(2.0 / b)
    return {
        "entry_max": 2.0 * A * (E / b) ** -0.25,
        "cross_min": 2.0 * (12.0 * E * b) ** -0.25,
        "cross_max": 4.0 * (E * b) ** -0.25,
        "y_lo": math.sqrt(E),
        "y_hi": 3.0 * math.sqrt(E),
    }


def seed_passage_start(E: float, profile: ShearProfile,
                       x_start: float | None = None) -> TorusPoint:
    """A fat-sector point whose backward passage has energy close to E.

    Seeds the orbit at the sector crossing (0, -sqrt(2E)) and runs it
    forward (leftward) until |x| >= x_start; invariance of the region below
    the unstable manifold guarantees the tracker's preconditions.
    """
    if E <= 0:
        raise DomainError("seed_passage_start needs E > 0")
    x_bar = (4.0 * E / profile.b) ** 0.25
    if x_start is None:
        x_start = min(max(1.6 * x_bar, 0.05), 0.42)
    q = TorusPoint(0.0, -math.sqrt(2.0 * E))
    for _ in range(2_000_000):
        if q.x <= -x_start:
            return q
        q = step(q, profile)
    raise NotApplicableError("seed orbit failed to reach the start abscissa")


# ---------------------------------------------------------------------------
# escape from the level-set rectangle


def in_rectangle(x, y, r: float):
    """Membership in D_r = {|x| <= r, |y| <= r^2} (vectorized)."""
    return (np.abs(x) <= r) & (np.abs(y) <= r * r)


def escape_time(center: TorusPoint, delta: float, R: float,
                profile: ShearProfile, cap: int = 100_000) -> int:
    """Steps until a delta/4 sub-ball near center leaves D_R entirely.

    A 3x3 lattice of candidate centres inside B_{3 delta/4}(center) is
    tracked, each via its centre plus eight boundary points of the
    delta/4-ball; the result is the first step at which every tracked point
    of some candidate is outside D_R.  Candidate search is deterministic.
    """
    if delta <= 0 or R <= 0:
        raise DomainError("escape_time needs delta > 0 and R > 0")
    s = 3.0 * delta / (4.0 * math.sqrt(2.0))
    offs = np.array([-s, 0.0, s])
    cx = (center.x + offs[:, None]).repeat(3, axis=1).ravel()
    cy = np.tile(center.y + offs, 3)
    ang = np.arange(8) * (math.pi / 4.0)
    bx = 0.25 * delta * np.cos(ang)
    by = 0.25 * delta * np.sin(ang)
    # 9 candidates x 9 tracked points
    px = np.concatenate([np.concatenate(([x0], x0 + bx)) for x0 in cx])
    py = np.concatenate([np.concatenate(([y0], y0 + by)) for y0 in cy])
    px, py = reduce_arrays(px, py)

    for n in range(cap + 1):
        inside = in_rectangle(px, py, R).reshape(9, 9)
        if np.any(~inside.any(axis=1)):
            return n
        px, py = step_arrays(px, py, profile)
    raise EscapeNotObservedError(
        f"no candidate ball escaped D_{R:g} within {cap} steps")
