"""Distances, stability bounds, and study drivers.

The L1 distance between two cumulative step functions is computed
exactly by sweeping the merged breakpoint list; the Wasserstein-1
distance between atomic probability measures is the L1 distance of
their CDFs (the one-dimensional optimal-transport identity).  On top
of these sit the two empirical studies:

* convergence: distances between discretization levels and a fine
  reference level at selected times, with the closed-form bound
  2 R0 max m at time zero;
* stability: measured W1 between two evolving systems against the
  exponential and linear a-priori bounds, taking the minimum.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad

from .cumulative import (
    AtomicMeasurePair,
    StepFunction,
    build_measure_pair,
    cumulative_from_particles,
    moment,
)
from .discretize import InitialDatum, VelocityProfile, particles_from_data
from .dynamics import BoundsReport, ParticleSystem, Tolerances, Trajectory, a_priori_bounds, simulate
from .kernels import Kernel

__all__ = [
    "l1_distance",
    "l1_distance_to_initial",
    "wasserstein1",
    "StabilityInputs",
    "StabilityBounds",
    "stability_bounds",
    "time_modulus_check",
    "MOMENT_BATTERY",
    "ConvergenceRow",
    "ConvergenceTable",
    "convergence_study",
    "StabilityRow",
    "StabilityReport",
    "stability_experiment",
]


def l1_distance(m1: StepFunction, m2: StepFunction) -> float:
    """Exact integral of |m1 - m2| over the line.

    Both inputs must carry the same total mass (the difference is then
    compactly supported).  The difference is piecewise constant on the
    merged breakpoint list, so the integral is a finite sum.
    """
    if abs(m1.total - m2.total) > 1e-9:
        raise ValueError("step functions must have equal total mass")
    xs = np.union1d(m1.breakpoints, m2.breakpoints)
    if xs.size < 2:
        return 0.0
    left = xs[:-1]
    diff = m1(left) - m2(left)
    return float(np.sum(np.abs(diff) * np.diff(xs)))


def _segment_l1_affine(d0: float, d1: float, length: float) -> float:
    """Integral of |d(x)| over a segment where d is affine with endpoint
    values d0, d1."""
    if d0 * d1 >= 0.0:
        return 0.5 * (abs(d0) + abs(d1)) * length
    # sign change: two triangles
    return 0.5 * length * (d0 * d0 + d1 * d1) / (abs(d0) + abs(d1))


def l1_distance_to_initial(step: StepFunction, datum: InitialDatum) -> float:
    """Exact (or quadrature) integral of |M_N - M0| against a continuum
    initial datum; used for the time-zero discretization bound."""
    if datum.kind == "atoms":
        return l1_distance(step, datum.atoms)
    if datum.kind == "uniform":
        a, b = datum.interval
        xs = np.union1d(step.breakpoints, [a, b])
        total = 0.0
        for x0, x1 in zip(xs[:-1], xs[1:]):
            s = float(step(x0))
            d0 = s - float(datum.cdf(x0))
            d1 = s - float(datum.cdf(np.nextafter(x1, x0)))
            total += _segment_l1_affine(d0, d1, x1 - x0)
        # tails: step is 0 left of xs[0] and total right of xs[-1], as is M0
        return total
    lo = min(float(step.breakpoints[0]), -datum.r0)
    hi = max(float(step.breakpoints[-1]), datum.r0)
    xs = np.union1d(step.breakpoints, [lo, hi])
    total = 0.0
    for x0, x1 in zip(xs[:-1], xs[1:]):
        s = float(step(x0))
        val, _ = quad(lambda y: abs(s - float(datum.cdf(y))), x0, x1, limit=100)
        total += val
    return total


def wasserstein1(mu: AtomicMeasurePair, nu: AtomicMeasurePair) -> float:
    """W1 between atomic probability measures: the L1 distance of their
    cumulative distribution functions."""
    return l1_distance(mu.cdf(), nu.cdf())


@dataclass(frozen=True)
class StabilityInputs:
    """Ingredients of the stability estimates.

    ``w1_0``: initial W1 distance; ``lip_diff``: Lipschitz seminorm of
    the flux difference; ``sup_phi``, ``sup_omega``: kernel norms.
    """

    t: float
    w1_0: float
    lip_diff: float
    sup_phi: float
    sup_omega: float

    def __post_init__(self):
        vals = (self.t, self.w1_0, self.lip_diff, self.sup_phi, self.sup_omega)
        if any(v < 0 for v in vals):
            raise ValueError("stability inputs must be nonnegative")


@dataclass(frozen=True)
class StabilityBounds:
    exp_bound: float
    linear_bound: float

    @property
    def min_bound(self) -> float:
        return min(self.exp_bound, self.linear_bound)


def stability_bounds(si: StabilityInputs) -> StabilityBounds:
    """The two a-priori W1 growth bounds.

        exp:    e^{2 t sup_phi} w1_0 + lip_diff (e^{t sup_phi} - 1)/(2 sup_phi)
        linear: w1_0 + (lip_diff + 4 sup_omega) t

    The exp formula's removable singularity at sup_phi = 0 is handled by
    its limit lip_diff t / 2 (expm1 keeps it accurate for tiny inputs).
    """
    s = si.sup_phi
    if s == 0.0:
        second = 0.5 * si.lip_diff * si.t
    else:
        second = si.lip_diff * math.expm1(si.t * s) / (2.0 * s)
    exp_bound = math.exp(2.0 * si.t * s) * si.w1_0 + second
    linear_bound = si.w1_0 + (si.lip_diff + 4.0 * si.sup_omega) * si.t
    return StabilityBounds(exp_bound=exp_bound, linear_bound=linear_bound)


def time_modulus_check(traj: Trajectory, bounds: BoundsReport, max_times: int = 64) -> float:
    """Worst ratio  ||M(t) - M(s)||_L1 / (M_tilde (t - s))  over record
    pairs; at most ``max_times`` evenly selected record times enter.
    The a-priori speed bound makes the ratio at most 1.
    """
    times = np.unique(traj.times())
    if times.size < 2:
        raise ValueError("need at least two distinct record times")
    if times.size > max_times:
        sel = np.unique(np.linspace(0, times.size - 1, max_times).astype(int))
        times = times[sel]
    by_time = {}
    for rec in traj.records:
        by_time[rec.time] = rec.state  # last record at a time wins (post-merge)
    steps = [cumulative_from_particles(by_time[t]) for t in times]
    worst = 0.0
    for i in range(len(times)):
        for j in range(i + 1, len(times)):
            dt = times[j] - times[i]
            ratio = l1_distance(steps[i], steps[j]) / (bounds.m_tilde * dt)
            worst = max(worst, ratio)
    return worst


#: Fixed battery of test functions for moment comparisons of the
#: momentum measure (a computable surrogate for weak-star convergence).
MOMENT_BATTERY: tuple[tuple[str, Callable], ...] = (
    ("one", lambda x: np.ones_like(x)),
    ("x", lambda x: x),
    ("x2", lambda x: x * x),
    ("cos", np.cos),
    ("gauss", lambda x: np.exp(-x * x)),
)


def _worker_count(workers: int | None) -> int:
    if workers is not None:
        return max(1, workers)
    env = os.environ.get("NARZ_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    t: float
    distance: float
    bound: float  # closed-form discretization bound at t=0, NaN later


@dataclass(frozen=True)
class ConvergenceTable:
    rows: list[ConvergenceRow]
    n_ref: int
    moment_drift: dict[int, dict[str, float]]  # n -> test name -> |drift| at final time

    def distances_at(self, t: float) -> list[tuple[int, float]]:
        return [(r.n, r.distance) for r in self.rows if r.t == t]


def _evolve_for_study(
    datum: InitialDatum,
    u0,
    kernel: Kernel,
    n: int,
    times: Sequence[float],
    substep: float,
):
    system, _ = particles_from_data(datum, u0, kernel, n)
    horizon = max(times)
    tol = Tolerances(substep=substep)
    if horizon == 0.0:
        states = {0.0: system}
    else:
        traj = simulate(system, kernel, horizon, snapshot_times=list(times), tol=tol)
        states = {}
        for rec in traj.records:
            if any(abs(rec.time - t) == 0.0 for t in times):
                states[rec.time] = rec.state  # last record wins
    return {
        t: (cumulative_from_particles(st), build_measure_pair(st))
        for t, st in states.items()
    }


def convergence_study(
    datum: InitialDatum,
    kernel: Kernel,
    horizon: float,
    ns: Sequence[int],
    n_ref: int,
    u0=None,
    times: Sequence[float] | None = None,
    substep: float | None = None,
    workers: int | None = None,
) -> ConvergenceTable:
    """Distances between discretization levels and a reference level.

    For each n in ``ns`` the datum is discretized, evolved, and compared
    to the ``n_ref`` run at the sample times (default 0, T/2, T).  The
    bound column carries the closed-form time-zero bound
    2 R0 (max m_n + max m_ref); there is no closed-form bound at later
    times, so NaN is reported there.  Momentum moments against
    :data:`MOMENT_BATTERY` at the final time are returned per n.
    """
    ns = sorted(int(n) for n in ns)
    if not ns:
        raise ValueError("need at least one discretization level")
    if n_ref <= max(ns):
        raise ValueError("reference level must exceed every study level")
    if u0 is None:
        u0 = VelocityProfile.constant(0.0)
    if times is None:
        times = (0.0, horizon / 2.0, horizon)
    times = sorted(set(float(t) for t in times))
    if substep is None:
        substep = horizon / 2000.0 if horizon > 0 else 1.0

    levels = ns + [n_ref]
    k = _worker_count(workers)

    def job(n):
        return _evolve_for_study(datum, u0, kernel, n, times, substep)

    if k == 1:
        results = [job(n) for n in levels]
    else:
        with ThreadPoolExecutor(max_workers=k) as pool:
            results = list(pool.map(job, levels))
    by_level = dict(zip(levels, results))
    ref = by_level[n_ref]

    rows = []
    drift: dict[int, dict[str, float]] = {}
    t_final = times[-1]
    for n in ns:
        for t in times:
            step_n, _ = by_level[n][t]
            step_ref, _ = ref[t]
            dist = l1_distance(step_n, step_ref)
            bound = 2.0 * datum.r0 * (1.0 / n + 1.0 / n_ref) if t == 0.0 else math.nan
            rows.append(ConvergenceRow(n=n, t=t, distance=dist, bound=bound))
        _, pair_n = by_level[n][t_final]
        _, pair_ref = ref[t_final]
        drift[n] = {
            name: abs(moment(pair_n, f, "P") - moment(pair_ref, f, "P"))
            for name, f in MOMENT_BATTERY
        }
    return ConvergenceTable(rows=rows, n_ref=n_ref, moment_drift=drift)


@dataclass(frozen=True)
class StabilityRow:
    t: float
    measured: float
    exp_bound: float
    linear_bound: float
    min_bound: float
    within: bool
    p_moment_drift: float  # informational: no bound is claimed for momentum


@dataclass(frozen=True)
class StabilityReport:
    rows: list[StabilityRow]
    w1_0: float
    lip_diff: float
    tol_meas: float

    @property
    def all_within(self) -> bool:
        return all(r.within for r in self.rows)


def _lip_diff_of_fluxes(flux_a, flux_b) -> float:
    """Lipschitz seminorm of A - B for piecewise-linear fluxes: the max
    absolute slope difference on the merged mass grid."""
    grid = np.union1d(flux_a.thetas, flux_b.thetas)
    mids = 0.5 * (grid[:-1] + grid[1:])
    da = flux_a.slopes[np.searchsorted(flux_a.thetas, mids) - 1]
    db = flux_b.slopes[np.searchsorted(flux_b.thetas, mids) - 1]
    return float(np.max(np.abs(da - db)))


def stability_experiment(
    datum_a: InitialDatum,
    u0_a,
    datum_b: InitialDatum,
    u0_b,
    kernel: Kernel,
    horizon: float,
    n: int,
    times: Sequence[float] | None = None,
    substep: float | None = None,
    tol_meas: float | None = None,
) -> StabilityReport:
    """Evolve two discretized data and compare measured W1 against the
    a-priori bounds at the sample times.

    ``w1_0`` and ``lip_diff`` are taken from the discretized objects
    (initial particle measures and constructed fluxes), matching how
    the bounds would be applied in practice.  The default measurement
    tolerance 1e-6 + 4/n absorbs discretization slack.  Momentum drift
    is reported per row without any claimed bound.
    """
    if times is None:
        times = (horizon / 4.0, horizon / 2.0, horizon)
    times = sorted(set(float(t) for t in times))
    if tol_meas is None:
        tol_meas = 1e-6 + 4.0 / n
    if substep is None:
        substep = horizon / 5000.0 if horizon > 0 else 1.0

    sys_a, flux_a = particles_from_data(datum_a, u0_a, kernel, n)
    sys_b, flux_b = particles_from_data(datum_b, u0_b, kernel, n)
    w1_0 = wasserstein1(build_measure_pair(sys_a), build_measure_pair(sys_b))
    lip_diff = _lip_diff_of_fluxes(flux_a, flux_b)

    tol = Tolerances(substep=substep)
    traj_a = simulate(sys_a, kernel, max(times), snapshot_times=list(times), tol=tol)
    traj_b = simulate(sys_b, kernel, max(times), snapshot_times=list(times), tol=tol)

    def states_at(traj):
        out = {}
        for rec in traj.records:
            for t in times:
                if rec.time == t:
                    out[t] = rec.state
        return out

    sa = states_at(traj_a)
    sb = states_at(traj_b)
    rows = []
    for t in times:
        pa = build_measure_pair(sa[t])
        pb = build_measure_pair(sb[t])
        measured = wasserstein1(pa, pb)
        sb_t = stability_bounds(
            StabilityInputs(
                t=t,
                w1_0=w1_0,
                lip_diff=lip_diff,
                sup_phi=kernel.sup_phi,
                sup_omega=kernel.sup_omega,
            )
        )
        p_drift = max(
            abs(moment(pa, f, "P") - moment(pb, f, "P")) for _, f in MOMENT_BATTERY
        )
        rows.append(
            StabilityRow(
                t=t,
                measured=measured,
                exp_bound=sb_t.exp_bound,
                linear_bound=sb_t.linear_bound,
                min_bound=sb_t.min_bound,
                within=measured <= sb_t.min_bound + tol_meas,
                p_moment_drift=p_drift,
            )
        )
    return StabilityReport(rows=rows, w1_0=w1_0, lip_diff=lip_diff, tol_meas=tol_meas)
