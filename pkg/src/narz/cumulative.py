"""Cumulative-mass view of a particle state and its entropy certificates.

A particle state induces the right-continuous step function

    M(x) = sum_i m_i 1[x_i <= x],

which solves a scalar balance law with a piecewise-linear flux built
from the initial data.  This module carries the step-function and flux
types plus the checks that make the entropy-solution property
quantitative:

* Rankine-Hugoniot: cluster velocity + convolution term equals the
  flux chord over the cluster's mass range.
* Oleinik: chords from the left mass edge to interior nodes dominate
  the cluster speed (shock admissibility).
* Kruzkov: the entropy production of |M - alpha| against a compactly
  supported test function is nonnegative.

The convolution (phi * M)(x) equals sum_j m_j omega(x - x_j) exactly
(integration by parts against a finite atomic measure), so no
quadrature enters the certificates; only the entropy residual uses a
time quadrature over trajectory snapshots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bumps import TestFunction
from .dynamics import ParticleSystem, Trajectory
from .errors import GridMismatch, InsufficientSnapshots
from .fastsum import pairwise_sums
from .kernels import Kernel

__all__ = [
    "StepFunction",
    "PiecewiseLinearFlux",
    "AtomicMeasurePair",
    "KruzkovPair",
    "CertificateRow",
    "cumulative_from_particles",
    "convolved_density",
    "flux_of_cumulative",
    "check_rankine_hugoniot",
    "check_oleinik",
    "certify_state",
    "entropy_residual",
    "build_measure_pair",
    "moment",
]


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous nondecreasing step function starting at 0.

    ``breakpoints`` are strictly increasing, ``jumps`` strictly
    positive; the value on ``[breakpoints[k], breakpoints[k+1])`` is
    the running sum of the first k+1 jumps.
    """

    breakpoints: np.ndarray
    jumps: np.ndarray

    def __post_init__(self):
        xs = np.array(self.breakpoints, dtype=float)
        js = np.array(self.jumps, dtype=float)
        if xs.ndim != 1 or xs.shape != js.shape or xs.size == 0:
            raise ValueError("breakpoints and jumps must be equal-length 1-d arrays")
        if np.any(np.diff(xs) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if np.any(js <= 0):
            raise ValueError("jumps must be positive")
        cum = np.concatenate([[0.0], np.cumsum(js)])
        xs.setflags(write=False)
        js.setflags(write=False)
        cum.setflags(write=False)
        object.__setattr__(self, "breakpoints", xs)
        object.__setattr__(self, "jumps", js)
        object.__setattr__(self, "_cum", cum)

    def __call__(self, x):
        idx = np.searchsorted(self.breakpoints, np.asarray(x, dtype=float), side="right")
        return self._cum[idx]

    def left_limit(self, x):
        idx = np.searchsorted(self.breakpoints, np.asarray(x, dtype=float), side="left")
        return self._cum[idx]

    def plateaus(self) -> np.ndarray:
        """All plateau values, 0 first, total mass last."""
        return self._cum

    @property
    def total(self) -> float:
        return float(self._cum[-1])

    def to_dict(self) -> dict:
        return {
            "breakpoints": [float(b) for b in self.breakpoints],
            "jumps": [float(j) for j in self.jumps],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StepFunction":
        return cls(np.asarray(d["breakpoints"], float), np.asarray(d["jumps"], float))


@dataclass(frozen=True)
class PiecewiseLinearFlux:
    """Continuous piecewise-linear function on the mass variable.

    Nodes ``thetas`` run from 0 to 1; ``values`` are the flux there.
    The slope over cell i is the conserved quantity carried by the
    i-th particle of the matching discretization.
    """

    thetas: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        th = np.array(self.thetas, dtype=float)
        va = np.array(self.values, dtype=float)
        if th.ndim != 1 or th.shape != va.shape or th.size < 2:
            raise ValueError("thetas and values must be equal-length 1-d arrays, length >= 2")
        if abs(th[0]) > 1e-12 or abs(th[-1] - 1.0) > 1e-12:
            raise ValueError("theta grid must run from 0 to 1")
        th[0] = 0.0
        th[-1] = 1.0
        if np.any(np.diff(th) <= 0):
            raise ValueError("theta grid must be strictly increasing")
        th.setflags(write=False)
        va.setflags(write=False)
        object.__setattr__(self, "thetas", th)
        object.__setattr__(self, "values", va)

    def __call__(self, m):
        return np.interp(m, self.thetas, self.values)

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.thetas)

    @property
    def masses(self) -> np.ndarray:
        return np.diff(self.thetas)

    def lipschitz(self) -> float:
        return float(np.max(np.abs(self.slopes)))

    @classmethod
    def from_slopes(cls, masses, slopes, value0: float = 0.0) -> "PiecewiseLinearFlux":
        masses = np.asarray(masses, dtype=float)
        slopes = np.asarray(slopes, dtype=float)
        thetas = np.concatenate([[0.0], np.cumsum(masses)])
        values = np.concatenate([[value0], value0 + np.cumsum(masses * slopes)])
        return cls(thetas, values)

    def to_dict(self) -> dict:
        return {
            "thetas": [float(t) for t in self.thetas],
            "values": [float(v) for v in self.values],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PiecewiseLinearFlux":
        return cls(np.asarray(d["thetas"], float), np.asarray(d["values"], float))


def cumulative_from_particles(s: ParticleSystem) -> StepFunction:
    """Cumulative mass function of a state; co-located particles
    collapse into a single breakpoint with the summed jump."""
    xs, inverse = np.unique(s.x, return_inverse=True)
    jumps = np.bincount(inverse, weights=s.m)
    return StepFunction(xs, jumps)


def convolved_density(M: StepFunction, kernel: Kernel, x) -> np.ndarray:
    """(phi * M)(x), evaluated exactly as sum_j jump_j omega(x - b_j)."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    res = pairwise_sums(
        np.atleast_1d(x), M.breakpoints, M.jumps, kernel.omega, kernel.support
    )[0]
    return float(res[0]) if scalar else res


def flux_of_cumulative(M: StepFunction, flux: PiecewiseLinearFlux, x, tol: float = 1e-9):
    """Evaluate flux(M(x)); requires every plateau of M to be a node of
    the flux grid (raises :class:`GridMismatch` otherwise)."""
    plat = M.plateaus()
    pos = np.searchsorted(flux.thetas, plat)
    lo = np.clip(pos - 1, 0, flux.thetas.size - 1)
    hi = np.clip(pos, 0, flux.thetas.size - 1)
    dist = np.minimum(np.abs(flux.thetas[lo] - plat), np.abs(flux.thetas[hi] - plat))
    if np.any(dist > tol):
        worst = float(plat[np.argmax(dist)])
        raise GridMismatch(f"plateau value {worst!r} is not a flux node")
    return flux(M(x))


def _cluster_table(s: ParticleSystem):
    """Per-cluster arrays: particle ranges, masses, positions, velocities,
    cumulative mass edges."""
    slices = s.cluster_slices()
    lo = np.array([a for a, _ in slices])
    hi = np.array([b for _, b in slices])
    cum = np.concatenate([[0.0], np.cumsum(s.m)])
    theta_lo = cum[lo]
    theta_hi = cum[hi]
    return lo, hi, theta_lo, theta_hi


def check_rankine_hugoniot(
    s: ParticleSystem, flux: PiecewiseLinearFlux, kernel: Kernel
) -> np.ndarray:
    """Jump-condition residual of every cluster.

    For a cluster with mass range (a, b] located at position y and
    moving at velocity v, the residual is

        | v + (phi*M)(y) - (flux(b) - flux(a)) / (b - a) |.
    """
    lo, hi, theta_lo, theta_hi = _cluster_table(s)
    y = s.x[lo]
    v = s.v[lo]
    conv = pairwise_sums(y, s.x, s.m, kernel.omega, kernel.support)[0]
    chord = (flux(theta_hi) - flux(theta_lo)) / (theta_hi - theta_lo)
    return np.abs(v + conv - chord)


def check_oleinik(
    s: ParticleSystem, flux: PiecewiseLinearFlux, kernel: Kernel
) -> np.ndarray:
    """Chord admissibility margin of every cluster.

    For each interior flux node strictly inside a cluster's mass range,
    the chord from the left edge to that node must dominate the cluster
    speed v + (phi*M)(y); returned is the smallest margin per cluster
    (+inf for clusters without interior nodes).
    """
    lo, hi, theta_lo, theta_hi = _cluster_table(s)
    y = s.x[lo]
    v = s.v[lo]
    conv = pairwise_sums(y, s.x, s.m, kernel.omega, kernel.support)[0]
    speed = v + conv
    cum = np.concatenate([[0.0], np.cumsum(s.m)])
    margins = np.full(lo.size, math.inf)
    for c in range(lo.size):
        interior = cum[lo[c] + 1 : hi[c]]
        if interior.size == 0:
            continue
        chords = (flux(interior) - flux(theta_lo[c])) / (interior - theta_lo[c])
        margins[c] = float(np.min(chords) - speed[c])
    return margins


@dataclass(frozen=True)
class CertificateRow:
    t: float
    cluster: int
    rh_residual: float
    oleinik_margin: float  # +inf when the cluster has no interior node


def certify_state(
    s: ParticleSystem, flux: PiecewiseLinearFlux, kernel: Kernel
) -> list[CertificateRow]:
    rh = check_rankine_hugoniot(s, flux, kernel)
    ole = check_oleinik(s, flux, kernel)
    return [
        CertificateRow(t=float(s.time), cluster=c, rh_residual=float(rh[c]), oleinik_margin=float(ole[c]))
        for c in range(rh.size)
    ]


@dataclass(frozen=True)
class KruzkovPair:
    """Entropy eta(m) = |m - alpha| with its matched flux
    q(m) = sign(m - alpha) (A(m) - A(alpha))."""

    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")

    def eta(self, m):
        return np.abs(np.asarray(m, dtype=float) - self.alpha)

    def q(self, m, flux: PiecewiseLinearFlux):
        m = np.asarray(m, dtype=float)
        return np.sign(m - self.alpha) * (flux(m) - flux(self.alpha))


def _state_layers(s: ParticleSystem):
    """Unique atom positions and the plateau levels around them."""
    xs, inverse = np.unique(s.x, return_inverse=True)
    jumps = np.bincount(inverse, weights=s.m)
    plateaus = np.concatenate([[0.0], np.cumsum(jumps)])
    return xs, plateaus


def _entropy_integrand(
    s: ParticleSystem,
    flux: PiecewiseLinearFlux,
    kernel: Kernel,
    pair: KruzkovPair,
    test: TestFunction,
    t: float,
) -> float:
    ys, plateaus = _state_layers(s)
    eta = pair.eta(plateaus)
    qv = pair.q(plateaus, flux)

    g = test.space
    gv = g(ys)
    gant = g.antideriv(ys)
    h = test.time(t)
    hp = test.time.deriv(t)

    # plateau-by-plateau exact spatial integrals: plateau j lives on
    # (y_j, y_{j+1}) with y_0 = -inf, y_{K+1} = +inf
    gant_ext = np.concatenate([[0.0], gant, [g.mass]])
    seg = np.diff(gant_ext)  # integral of g over each plateau interval
    i1 = hp * float(np.dot(eta, seg))

    gv_ext = np.concatenate([[0.0], gv, [0.0]])
    dg = np.diff(gv_ext)  # g(y_{j+1}) - g(y_j)
    i2 = h * float(np.dot(qv, dg))

    conv = pairwise_sums(ys, s.x, s.m, kernel.omega, kernel.support)[0]
    datoms = np.diff(eta)  # jump of eta(M) at each atom
    i3 = h * float(np.dot(datoms, gv * conv))
    return i1 + i2 + i3


def entropy_residual(
    traj: Trajectory,
    flux: PiecewiseLinearFlux,
    kernel: Kernel,
    pair: KruzkovPair,
    test: TestFunction,
    quad_tol: float = 1e-6,
) -> float:
    """Entropy production of the trajectory against one test function.

    Spatial integrals are exact plateau sums; the time integral is a
    composite trapezoid over the trajectory's record times (which
    include all collisions, where the integrand kinks).  A coarse/fine
    Richardson comparison guards the quadrature: if the estimated error
    exceeds ``quad_tol``, :class:`InsufficientSnapshots` is raised.

    Nonnegative up to quadrature error for every admissible trajectory;
    for alpha in {0, 1} the integrand telescopes to the plain weak form
    and the result is 0 up to quadrature error.
    """
    t_lo, t_hi = test.time.support
    times = traj.times()
    if times[0] > t_lo or times[-1] < t_hi:
        raise InsufficientSnapshots(
            "trajectory does not cover the time support of the test function"
        )
    inside = [(r.time, r) for r in traj.records if t_lo < r.time < t_hi]
    # dedupe coincident record times (collision + snapshot at same t)
    seen: dict[float, object] = {}
    for tt, rec in inside:
        seen[tt] = rec
    nodes = sorted(seen)
    if len(nodes) < 8:
        raise InsufficientSnapshots(
            f"only {len(nodes)} snapshots inside the test-function window"
        )
    vals = [
        _entropy_integrand(seen[tt].state, flux, kernel, pair, test, tt) for tt in nodes
    ]
    ts = np.array([t_lo] + nodes + [t_hi])
    ys = np.array([0.0] + vals + [0.0])
    fine = float(np.trapezoid(ys, ts))
    idx = np.arange(0, ts.size, 2)
    if idx[-1] != ts.size - 1:
        idx = np.append(idx, ts.size - 1)
    coarse = float(np.trapezoid(ys[idx], ts[idx]))
    err = abs(fine - coarse) / 3.0
    if err > quad_tol:
        raise InsufficientSnapshots(
            f"time-quadrature error estimate {err:.3e} exceeds {quad_tol:.3e}"
        )
    return fine


@dataclass(frozen=True)
class AtomicMeasurePair:
    """Matched atomic measures: mass rho and momentum P = v rho."""

    positions: np.ndarray
    rho_weights: np.ndarray
    p_weights: np.ndarray

    def __post_init__(self):
        xs = np.array(self.positions, dtype=float)
        rw = np.array(self.rho_weights, dtype=float)
        pw = np.array(self.p_weights, dtype=float)
        if not (xs.shape == rw.shape == pw.shape and xs.ndim == 1):
            raise ValueError("measure arrays must be 1-d of equal length")
        if np.any(np.diff(xs) <= 0):
            raise ValueError("atom positions must be strictly increasing")
        if np.any(rw <= 0):
            raise ValueError("mass weights must be positive")
        for a in (xs, rw, pw):
            a.setflags(write=False)
        object.__setattr__(self, "positions", xs)
        object.__setattr__(self, "rho_weights", rw)
        object.__setattr__(self, "p_weights", pw)

    def cdf(self) -> StepFunction:
        return StepFunction(self.positions, self.rho_weights)


def build_measure_pair(s: ParticleSystem) -> AtomicMeasurePair:
    xs, inverse = np.unique(s.x, return_inverse=True)
    rho = np.bincount(inverse, weights=s.m)
    p = np.bincount(inverse, weights=s.m * s.v)
    return AtomicMeasurePair(positions=xs, rho_weights=rho, p_weights=p)


def moment(mp: AtomicMeasurePair, f: Callable, which: str = "rho") -> float:
    """Integral of f against the mass (``rho``) or momentum (``P``)
    component."""
    w = mp.rho_weights if which == "rho" else mp.p_weights
    if which not in ("rho", "P"):
        raise ValueError("which must be 'rho' or 'P'")
    return float(np.dot(w, f(mp.positions)))
