"""Interaction kernels and their admissibility checks.

A kernel is a nonnegative probability density ``omega`` with compact
support ``[a, b]`` together with its derivative ``phi = omega'``.  The
dynamics weighs neighbours through ``omega`` (for the conserved
quantity ``psi``) and through ``phi`` (for the velocity relaxation).
Admissibility:

    omega >= 0,   integral omega = 1,   omega(a) = omega(b) = 0,
    phi = omega' bounded and integrable.

Kernels need not be even.  A support inside ``[-r, 0]`` weighs only
traffic ahead of the driver (downstream), ``[0, r]`` only traffic
behind (upstream).

Built-in families carry a piecewise "separable" closed form (polynomial
and trigonometric terms per panel) which lets pair sums over sorted
positions be evaluated with prefix sums; see :mod:`narz.fastsum`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad

from .errors import NonpositiveSupport, QuadratureFailure, UnknownFamily

__all__ = [
    "Kernel",
    "HypothesisReport",
    "make_builtin",
    "validate_hypotheses",
    "BUILTIN_FAMILIES",
]


# A panel is (lo, hi, terms); a term is one of
#   ("const", c)          value c
#   ("poly", p, c)        c * u**p          (p = 1 or 2)
#   ("cos", f, c)         c * cos(f * u)
#   ("sin", f, c)         c * sin(f * u)
# Panels are half open [lo, hi); the function must vanish at any support
# edge a panel excludes, so dropping that edge loses nothing.
Panel = tuple


def _eval_term(term: tuple, u: np.ndarray) -> np.ndarray:
    tag = term[0]
    if tag == "const":
        return np.full_like(u, term[1])
    if tag == "poly":
        _, p, c = term
        return c * u**p
    if tag == "cos":
        _, f, c = term
        return c * np.cos(f * u)
    if tag == "sin":
        _, f, c = term
        return c * np.sin(f * u)
    raise ValueError(f"unknown term tag {tag!r}")


def eval_panels(panels: Sequence[Panel], u) -> np.ndarray:
    """Evaluate a piecewise separable form at points ``u`` (0 outside)."""
    u = np.asarray(u, dtype=float)
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    out = np.zeros_like(u)
    last = len(panels) - 1
    for k, (lo, hi, terms) in enumerate(panels):
        if k == last:
            mask = (u >= lo) & (u <= hi)
        else:
            mask = (u >= lo) & (u < hi)
        if not mask.any():
            continue
        uu = u[mask]
        acc = np.zeros_like(uu)
        for term in terms:
            acc += _eval_term(term, uu)
        out[mask] = acc
    return out[0] if scalar else out


def panel_antiderivative(panels: Sequence[Panel]) -> Callable[[np.ndarray], np.ndarray]:
    """Antiderivative of a panel form, normalised to 0 left of the support.

    Exact per panel: monomials integrate to monomials, cos/sin to
    sin/cos.  Used for closed-form convolutions with piecewise uniform
    densities.
    """

    def term_primitive(term, u):
        tag = term[0]
        if tag == "const":
            return term[1] * u
        if tag == "poly":
            _, p, c = term
            return c * u ** (p + 1) / (p + 1)
        if tag == "cos":
            _, f, c = term
            return (c / f) * np.sin(f * u)
        if tag == "sin":
            _, f, c = term
            return -(c / f) * np.cos(f * u)
        raise ValueError(f"unknown term tag {tag!r}")

    # cumulative value at each panel start
    starts = [panels[0][0]]
    base = [0.0]
    for lo, hi, terms in panels:
        inc = sum(
            float(term_primitive(t, np.asarray(hi)) - term_primitive(t, np.asarray(lo)))
            for t in terms
        )
        base.append(base[-1] + inc)
        starts.append(hi)
    total = base[-1]
    panel_lo = np.array([p[0] for p in panels])
    sup_hi = panels[-1][1]

    def primitive(u):
        u = np.asarray(u, dtype=float)
        scalar = u.ndim == 0
        u = np.atleast_1d(u)
        out = np.where(u >= sup_hi, total, 0.0)
        for k, (lo, hi, terms) in enumerate(panels):
            mask = (u >= lo) & (u < hi)
            if not mask.any():
                continue
            uu = u[mask]
            acc = np.full_like(uu, base[k])
            for t in terms:
                acc += term_primitive(t, uu) - term_primitive(t, np.asarray(lo))
            out[mask] = acc
        return out[0] if scalar else out

    return primitive


@dataclass(frozen=True)
class Kernel:
    """Interaction kernel ``omega`` with derivative ``phi``.

    ``omega`` and ``phi`` are vectorised callables vanishing outside
    ``support``.  ``sup_omega``, ``sup_phi`` and ``l1_phi`` are the
    norms entering the a-priori bounds and stability estimates.
    """

    omega: Callable[[np.ndarray], np.ndarray]
    phi: Callable[[np.ndarray], np.ndarray]
    support: tuple[float, float]
    sup_omega: float
    sup_phi: float
    l1_phi: float
    name: str = "custom"
    params: tuple = ()
    form_omega: tuple | None = field(default=None, repr=False)
    form_phi: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        a, b = self.support
        if not (a < b and math.isfinite(a) and math.isfinite(b)):
            raise NonpositiveSupport(f"support [{a}, {b}] is not a finite interval")

    @property
    def radius(self) -> float:
        return max(abs(self.support[0]), abs(self.support[1]))

    def describe(self) -> str:
        a, b = self.support
        return (
            f"{self.name}{self.params}: support [{a:g}, {b:g}], "
            f"sup omega {self.sup_omega:.6g}, sup phi {self.sup_phi:.6g}, "
            f"l1 phi {self.l1_phi:.6g}"
        )


def _cosine_bump(lo: float, hi: float) -> tuple[tuple, tuple, float, float, float]:
    """Raised-cosine probability density on [lo, hi].

    omega(u) = (1/L) * (1 - cos(2 pi (u - lo) / L)),  L = hi - lo,
    scaled so the mass is one, vanishing with zero slope at both ends.
    Returns (form_omega, form_phi, sup_omega, sup_phi, l1_phi).
    """
    length = hi - lo
    f = 2.0 * math.pi / length
    c = 1.0 / length
    # 1 - cos(f*(u - lo)) = 1 - cos(f u)cos(f lo) - sin(f u)sin(f lo)
    cos_lo = math.cos(f * lo)
    sin_lo = math.sin(f * lo)
    form_omega = (
        (
            lo,
            hi,
            (
                ("const", c),
                ("cos", f, -c * cos_lo),
                ("sin", f, -c * sin_lo),
            ),
        ),
    )
    # phi = (f/L) sin(f*(u - lo))
    cphi = f / length
    form_phi = (
        (
            lo,
            hi,
            (
                ("sin", f, cphi * cos_lo),
                ("cos", f, -cphi * sin_lo),
            ),
        ),
    )
    sup_omega = 2.0 / length
    sup_phi = f / length
    l1_phi = 4.0 / length
    return form_omega, form_phi, sup_omega, sup_phi, l1_phi


def _raised_cosine(r: float) -> Kernel:
    # omega(u) = (1/(2r)) (1 + cos(pi u / r)) on [-r, r]
    f = math.pi / r
    c = 1.0 / (2.0 * r)
    form_omega = ((-r, r, (("const", c), ("cos", f, c))),)
    form_phi = ((-r, r, (("sin", f, -c * f),)),)
    return Kernel(
        omega=lambda u: eval_panels(form_omega, u),
        phi=lambda u: eval_panels(form_phi, u),
        support=(-r, r),
        sup_omega=1.0 / r,
        sup_phi=math.pi / (2.0 * r * r),
        l1_phi=2.0 / r,
        name="raised_cosine",
        params=(r,),
        form_omega=form_omega,
        form_phi=form_phi,
    )


def _quadratic_spline(r: float) -> Kernel:
    # Degree-2 B-spline scaled to [-r, r]: omega(u) = s * B2(s u), s = 3/(2r).
    # Piecewise quadratic, C^1, mass one.
    s = 3.0 / (2.0 * r)
    third = r / 3.0
    form_omega = (
        (-r, -third, (("const", 9.0 * s / 8.0), ("poly", 1, 1.5 * s * s), ("poly", 2, 0.5 * s**3))),
        (-third, third, (("const", 0.75 * s), ("poly", 2, -(s**3)))),
        (third, r, (("const", 9.0 * s / 8.0), ("poly", 1, -1.5 * s * s), ("poly", 2, 0.5 * s**3))),
    )
    form_phi = (
        (-r, -third, (("const", 1.5 * s * s), ("poly", 1, s**3))),
        (-third, third, (("poly", 1, -2.0 * s**3),)),
        (third, r, (("const", -1.5 * s * s), ("poly", 1, s**3))),
    )
    return Kernel(
        omega=lambda u: eval_panels(form_omega, u),
        phi=lambda u: eval_panels(form_phi, u),
        support=(-r, r),
        sup_omega=9.0 / (8.0 * r),
        sup_phi=9.0 / (4.0 * r * r),
        l1_phi=9.0 / (4.0 * r),
        name="quadratic_spline",
        params=(r,),
        form_omega=form_omega,
        form_phi=form_phi,
    )


def _one_sided_cosine(r: float, side: str) -> Kernel:
    if side == "downstream":
        lo, hi = -r, 0.0
    else:
        lo, hi = 0.0, r
    form_omega, form_phi, sup_o, sup_p, l1_p = _cosine_bump(lo, hi)
    return Kernel(
        omega=lambda u: eval_panels(form_omega, u),
        phi=lambda u: eval_panels(form_phi, u),
        support=(lo, hi),
        sup_omega=sup_o,
        sup_phi=sup_p,
        l1_phi=l1_p,
        name=f"{side}_cosine",
        params=(r,),
        form_omega=form_omega,
        form_phi=form_phi,
    )


BUILTIN_FAMILIES = (
    "raised_cosine",
    "quadratic_spline",
    "downstream_cosine",
    "upstream_cosine",
)


def make_builtin(family: str, params: Sequence[float]) -> Kernel:
    """Construct a built-in kernel family.

    Every family takes a single parameter, the support radius ``r > 0``.
    Raises :class:`UnknownFamily` for a name outside
    :data:`BUILTIN_FAMILIES` and :class:`NonpositiveSupport` for
    ``r <= 0``.
    """
    params = tuple(float(p) for p in params)
    if family not in BUILTIN_FAMILIES:
        raise UnknownFamily(
            f"kernel family {family!r} not known; choose one of {', '.join(BUILTIN_FAMILIES)}"
        )
    if len(params) != 1:
        raise UnknownFamily(f"family {family!r} takes exactly one parameter, got {params}")
    r = params[0]
    if not (r > 0.0 and math.isfinite(r)):
        raise NonpositiveSupport(f"support radius must be positive, got {r}")
    if family == "raised_cosine":
        return _raised_cosine(r)
    if family == "quadratic_spline":
        return _quadratic_spline(r)
    if family == "downstream_cosine":
        return _one_sided_cosine(r, "downstream")
    return _one_sided_cosine(r, "upstream")


@dataclass(frozen=True)
class HypothesisReport:
    """Outcome of the admissibility checks, one flag plus one measured
    value per check."""

    unit_mass: bool
    mass: float
    nonnegative: bool
    min_omega: float
    vanishes_at_edges: bool
    max_edge_value: float
    derivative_consistent: bool
    max_fd_error: float
    norms_consistent: bool
    max_norm_excess: float

    @property
    def admissible(self) -> bool:
        return (
            self.unit_mass
            and self.nonnegative
            and self.vanishes_at_edges
            and self.derivative_consistent
            and self.norms_consistent
        )


def validate_hypotheses(
    kernel: Kernel,
    quad_tol: float = 1e-10,
    n_grid: int = 2001,
    fd_step: float = 1e-5,
    fd_tol: float = 1e-6,
) -> HypothesisReport:
    """Check the admissibility hypotheses of a kernel.

    Unit mass is established by adaptive quadrature (raising
    :class:`QuadratureFailure` if the estimate itself is unreliable),
    nonnegativity and the norm fields on a grid, and ``phi = omega'``
    by central finite differences away from the support endpoints and,
    when the closed form is known, away from panel joints.
    """
    a, b = kernel.support
    mass, abserr = quad(lambda u: float(kernel.omega(u)), a, b, limit=200, epsabs=quad_tol / 10)
    if abserr > max(quad_tol, 1e-9):
        raise QuadratureFailure(
            f"kernel mass quadrature error estimate {abserr:.3e} exceeds tolerance"
        )
    unit_mass = abs(mass - 1.0) <= quad_tol

    grid = np.linspace(a, b, n_grid)
    vals = kernel.omega(grid)
    min_omega = float(vals.min())
    nonnegative = min_omega >= -1e-12

    edge = max(abs(float(kernel.omega(a))), abs(float(kernel.omega(b))))
    vanishes = edge <= 1e-12

    # FD consistency on cell midpoints (avoids hitting joints exactly)
    mids = 0.5 * (grid[:-1] + grid[1:])
    keep = (mids > a + 2 * fd_step) & (mids < b - 2 * fd_step)
    joints = [a, b]
    if kernel.form_phi is not None:
        joints += [p[0] for p in kernel.form_phi] + [kernel.form_phi[-1][1]]
    for j in joints:
        keep &= np.abs(mids - j) > 4 * fd_step
    pts = mids[keep]
    fd = (kernel.omega(pts + fd_step) - kernel.omega(pts - fd_step)) / (2 * fd_step)
    max_fd_error = float(np.max(np.abs(fd - kernel.phi(pts)))) if pts.size else 0.0
    derivative_consistent = max_fd_error <= fd_tol

    phi_vals = np.abs(kernel.phi(grid))
    excess = max(
        float(vals.max()) - kernel.sup_omega,
        float(phi_vals.max()) - kernel.sup_phi,
        float(np.trapezoid(phi_vals, grid)) - kernel.l1_phi,
    )
    norms_consistent = excess <= 1e-9 * (1.0 + kernel.sup_phi)

    return HypothesisReport(
        unit_mass=unit_mass,
        mass=float(mass),
        nonnegative=nonnegative,
        min_omega=min_omega,
        vanishes_at_edges=vanishes,
        max_edge_value=edge,
        derivative_consistent=derivative_consistent,
        max_fd_error=max_fd_error,
        norms_consistent=norms_consistent,
        max_norm_excess=float(excess),
    )
