"""Shear profiles: the odd function h driving the torus map family.

A profile bundles h with its first three derivatives, the closed-form
antiderivative G (G(0) = 0), the cubic coefficient b = h'''(0)/6 and the
derived scale A = sqrt(2/b) that governs the slow algebraic approach to the
neutral fixed point (backward orbits on the invariant branches behave like
A/(n + A/x0)).

Two built-ins:

* ``sine_profile`` -- h(x) = x - sin x, evaluated in chart units on
  [-1/2, 1/2).  b = 1/6, A = sqrt(12).  This is the default everywhere.
* ``cubic_profile(b)`` -- h(x) = b x^3.  Not periodic-compatible away from
  the origin, so it is flagged ``local_only`` and rejected by the global
  machinery (transfer operators, correlations); it exists for near-origin
  diagnostics where only the jet at 0 matters.

G must be supplied in closed form; numerical quadrature is deliberately not
offered (quasi-Hamiltonian evaluations must stay cheap and exact).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError

# kernel ids used by the compiled hot loops (see _kernels.py)
KERNEL_SINE = 0
KERNEL_CUBIC = 1


@dataclass(frozen=True)
class ShearProfile:
    """The function h with derivatives and antiderivative.

    All evaluators accept scalars or numpy arrays.
    """

    name: str
    h: Callable
    dh: Callable
    d2h: Callable
    d3h: Callable
    G: Callable
    b: float
    local_only: bool = False
    # id understood by the numba kernels; None means "no fast path"
    kernel_id: int | None = None
    kernel_param: float = 0.0
    # sup of h' over the chart, used for certified slope brackets
    dh_max: float = field(default=0.0)

    @property
    def A(self) -> float:
        """Scale constant sqrt(2/b) of the slow manifold decay."""
        return float(np.sqrt(2.0 / self.b))

    def check(self, n_grid: int = 101, span: float = 0.5) -> None:
        """Numerically verify the defining properties of the profile.

        Checks h(0)=0, h'(0)=0, h''(0)=0, h'''(0)=6b>0, oddness of h on a
        grid, and h'(x)>0 for sampled x != 0.  Raises DomainError on any
        violation.
        """
        if not (self.h(0.0) == 0.0 and self.dh(0.0) == 0.0 and self.d2h(0.0) == 0.0):
            raise DomainError(f"profile {self.name}: jet at 0 is not (0, 0, 0)")
        if not np.isclose(self.d3h(0.0), 6.0 * self.b, rtol=1e-12):
            raise DomainError(f"profile {self.name}: h'''(0) != 6b")
        if self.b <= 0:
            raise DomainError(f"profile {self.name}: b must be positive")
        x = np.linspace(-span, span, n_grid)
        if not np.allclose(self.h(-x), -self.h(x), atol=1e-14):
            raise DomainError(f"profile {self.name}: h is not odd")
        xn = x[x != 0.0]
        if not np.all(self.dh(xn) > 0.0):
            raise DomainError(f"profile {self.name}: h' not positive away from 0")
        if abs(self.G(0.0)) > 0.0:
            raise DomainError(f"profile {self.name}: G(0) != 0")


def sine_profile() -> ShearProfile:
    """h(x) = x - sin x with G(x) = x^2/2 + cos x - 1."""
    return ShearProfile(
        name="x-sin(x)",
        h=lambda x: x - np.sin(x),
        dh=lambda x: 1.0 - np.cos(x),
        d2h=np.sin,
        d3h=np.cos,
        G=lambda x: 0.5 * x * x + np.cos(x) - 1.0,
        b=1.0 / 6.0,
        local_only=False,
        kernel_id=KERNEL_SINE,
        kernel_param=0.0,
        dh_max=1.0 - np.cos(0.5),
    )


def cubic_profile(b: float = 1.0 / 6.0) -> ShearProfile:
    """Pure cubic h(x) = b x^3; local diagnostics only."""
    if b <= 0:
        raise DomainError("cubic profile needs b > 0")
    return ShearProfile(
        name=f"cubic(b={b:g})",
        h=lambda x: b * x**3,
        dh=lambda x: 3.0 * b * x**2,
        d2h=lambda x: 6.0 * b * x,
        d3h=lambda x: 6.0 * b * np.ones_like(np.asarray(x, dtype=float)),
        G=lambda x: 0.25 * b * x**4,
        b=b,
        local_only=True,
        kernel_id=KERNEL_CUBIC,
        kernel_param=b,
        dh_max=3.0 * b * 0.25,
    )


_BUILTINS = {
    "sine": sine_profile,
    "x-sin(x)": sine_profile,
}


def get_profile(name: str, b: float | None = None) -> ShearProfile:
    """Resolve a profile by name ('sine' or 'cubic'); 'cubic' takes b."""
    if name in _BUILTINS:
        return _BUILTINS[name]()
    if name == "cubic":
        return cubic_profile(b if b is not None else 1.0 / 6.0)
    raise DomainError(f"unknown profile '{name}' (try 'sine' or 'cubic')")
