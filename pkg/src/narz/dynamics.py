"""Event-driven sticky-particle dynamics.

The state is an ordered list of particles with masses summing to one.
Between collisions every particle follows

    dx_i/dt = v_i,
    dv_i/dt = sum_j m_j phi(x_i - x_j) (v_j - v_i),

integrated by classical fixed-substep RK4.  When adjacent clusters
touch they merge permanently: the group takes the mass-weighted mean
position and velocity, so clusters only ever grow.  The per-particle
quantity

    psi_i = v_i + sum_j m_j omega(x_i - x_j)

is constant along the smooth flow and averages barycentrically at
merges, which makes its numerical drift a sharp order-4 diagnostic of
the integrator.

Collision times are localized by bisection on the inter-cluster gap
function down to ``Tolerances.event_time``.  Contacts are declared at
gap <= ``Tolerances.gap``; chains of simultaneously touching clusters
merge transitively, one event per maximal chain, processed left to
right at the same timestamp.  A gap that dips below the contact
tolerance and recovers strictly inside one substep is below the
resolution of the scheme and is not an event.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import NonAdjacentMerge, StepSizeUnderflow
from .fastsum import _FAST_PATH_MIN_N, kernel_sums
from .kernels import Kernel

__all__ = [
    "ParticleSystem",
    "Tolerances",
    "Event",
    "TrajectoryRecord",
    "Trajectory",
    "BoundsReport",
    "compute_psi",
    "acceleration",
    "merge_clusters",
    "a_priori_bounds",
    "step_to_next_event",
    "simulate",
]

MASS_TOL = 1e-12


def _as_readonly(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ParticleSystem:
    """Immutable snapshot of the particle state at one time.

    ``cluster[i]`` is the 0-based id of the cluster particle ``i``
    belongs to; ids increase from left to right and every cluster is a
    contiguous index range sharing one position and one velocity.
    Distinct clusters may share a position only at construction time
    (initial ties); the stepping routines merge such contacts before
    advancing.
    """

    time: float
    x: np.ndarray
    v: np.ndarray
    m: np.ndarray
    cluster: np.ndarray

    def __post_init__(self):
        x = _as_readonly(self.x)
        v = _as_readonly(self.v)
        m = _as_readonly(self.m)
        cl = np.array(self.cluster, dtype=np.int64)
        cl.setflags(write=False)
        if not (x.ndim == 1 and x.shape == v.shape == m.shape == cl.shape):
            raise ValueError("state arrays must be 1-d and of equal length")
        if x.size == 0:
            raise ValueError("empty particle system")
        if np.any(np.diff(x) < 0):
            raise ValueError("positions must be nondecreasing")
        if np.any(m <= 0):
            raise ValueError("masses must be positive")
        total = float(m.sum())
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"masses must sum to 1, got {total!r}")
        d = np.diff(cl)
        if cl[0] != 0 or np.any((d != 0) & (d != 1)):
            raise ValueError("cluster ids must be consecutive and nondecreasing")
        same = d == 0
        if np.any(same & (np.diff(x) != 0)) or np.any(same & (np.diff(v) != 0)):
            raise ValueError("cluster members must share position and velocity")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "cluster", cl)

    @classmethod
    def create(cls, x, v, m, time: float = 0.0) -> "ParticleSystem":
        """Build a state, grouping particles with identical position and
        velocity into clusters."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        m = np.asarray(m, dtype=float)
        if x.size == 0:
            raise ValueError("empty particle system")
        brk = (x[1:] != x[:-1]) | (v[1:] != v[:-1])
        cluster = np.concatenate([[0], np.cumsum(brk)])
        return cls(time=float(time), x=x, v=v, m=m, cluster=cluster)

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def n_clusters(self) -> int:
        return int(self.cluster[-1]) + 1

    def cluster_slices(self) -> list[tuple[int, int]]:
        """Half-open particle index ranges, one per cluster."""
        starts = np.flatnonzero(np.diff(self.cluster)) + 1
        bounds = np.concatenate([[0], starts, [self.n]])
        return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]

    def cluster_reps(self) -> np.ndarray:
        """Index of the first particle of each cluster."""
        starts = np.flatnonzero(np.diff(self.cluster)) + 1
        return np.concatenate([[0], starts])

    def gaps(self) -> np.ndarray:
        """Distances between consecutive cluster positions."""
        xc = self.x[self.cluster_reps()]
        return np.diff(xc)


@dataclass(frozen=True)
class Tolerances:
    """Numerical control parameters of the event-driven integrator.

    ``substep``: RK4 step; ``None`` resolves to horizon / 1e4.  Kernels
    with limited smoothness at the support edge drop the step order
    from four to three when a pair distance crosses the edge, so the
    conserved invariants hold to roughly substep^3 per crossing;
    tighten the substep when certificates need residuals well below
    that scale.
    ``event_time``: bisection window for collision times.
    ``gap``: contact threshold; ``None`` resolves to 1e-12 * (1 + R0)
    with R0 the largest initial position magnitude.
    """

    substep: float | None = None
    event_time: float = 1e-10
    gap: float | None = None

    def resolve(self, horizon: float, r0: float) -> "Tolerances":
        sub = self.substep if self.substep is not None else horizon / 1e4
        gap = self.gap if self.gap is not None else 1e-12 * (1.0 + abs(r0))
        if not (sub > 0 and self.event_time > 0 and gap > 0):
            raise ValueError("tolerances must be positive")
        return Tolerances(substep=sub, event_time=self.event_time, gap=gap)


@dataclass(frozen=True)
class Event:
    """A collision, an intermediate snapshot, or the final horizon.

    Collision events carry the particle indices of the merged group,
    the per-member values of psi immediately before the merge, and the
    barycentric value after it.
    """

    kind: str  # "collision" | "snapshot" | "horizon"
    time: float
    indices: tuple[int, ...] = ()
    pre_psi: tuple[float, ...] | None = None
    post_psi: float | None = None


@dataclass(frozen=True)
class TrajectoryRecord:
    time: float
    state: ParticleSystem
    psi: np.ndarray


@dataclass(frozen=True)
class Trajectory:
    records: tuple[TrajectoryRecord, ...]
    events: tuple[Event, ...]

    def times(self) -> np.ndarray:
        return np.array([r.time for r in self.records])

    def collisions(self) -> list[Event]:
        return [e for e in self.events if e.kind == "collision"]

    def final_state(self) -> ParticleSystem:
        return self.records[-1].state


def _omega_sums(x, m, kernel, force_pairwise=False):
    return kernel_sums(x, m, kernel, "omega", force_pairwise=force_pairwise)[0]


def compute_psi(s: ParticleSystem, kernel: Kernel) -> np.ndarray:
    """psi_i = v_i + sum_j m_j omega(x_i - x_j), by the literal sum."""
    return s.v + _omega_sums(s.x, s.m, kernel, force_pairwise=True)


def acceleration(s: ParticleSystem, kernel: Kernel) -> np.ndarray:
    """a_i = sum_j m_j phi(x_i - x_j) (v_j - v_i), by the literal sum."""
    sums = kernel_sums(s.x, np.vstack([s.m * s.v, s.m]), kernel, "phi", force_pairwise=True)
    return sums[0] - s.v * sums[1]


def _accel_arrays(x, v, m, kernel):
    sums = kernel_sums(x, np.vstack([m * v, m]), kernel, "phi")
    return sums[0] - v * sums[1]


def _psi_arrays(x, v, m, kernel):
    return v + _omega_sums(x, m, kernel)


def _make_accel(kernel, m):
    """Acceleration closure for the stepping loop.

    Small systems evaluate phi on the full difference matrix without a
    support mask: admissible kernels vanish outside their support by
    contract, and skipping the mask roughly halves the per-step cost.
    Large systems keep the prefix-sum path of :func:`kernel_sums`.
    """
    if m.size >= _FAST_PATH_MIN_N:

        def accel(x, v):
            sums = kernel_sums(x, np.vstack([m * v, m]), kernel, "phi")
            return sums[0] - v * sums[1]

        return accel

    phi = kernel.phi

    def accel(x, v):
        p = phi(x[:, None] - x)
        return p @ (m * v) - v * (p @ m)

    return accel


def _rk4_step(x, v, accel, h):
    a1 = accel(x, v)
    x2 = x + (0.5 * h) * v
    v2 = v + (0.5 * h) * a1
    a2 = accel(x2, v2)
    x3 = x + (0.5 * h) * v2
    v3 = v + (0.5 * h) * a2
    a3 = accel(x3, v3)
    x4 = x + h * v3
    v4 = v + h * a3
    a4 = accel(x4, v4)
    xn = x + (h / 6.0) * (v + 2.0 * v2 + 2.0 * v3 + v4)
    vn = v + (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    return xn, vn


def merge_clusters(s: ParticleSystem, idx: Iterable[int]) -> ParticleSystem:
    """Merge the clusters covered by the particle indices ``idx``.

    ``idx`` must be a contiguous index range aligned with cluster
    boundaries and spanning at least two clusters; anything else raises
    :class:`NonAdjacentMerge`.  The group takes the mass-weighted mean
    position and velocity (momentum conserving).
    """
    idx = np.asarray(sorted(int(i) for i in idx), dtype=np.int64)
    if idx.size < 2 or np.any(np.diff(idx) != 1):
        raise NonAdjacentMerge("merge indices must be a contiguous range of length >= 2")
    lo, hi = int(idx[0]), int(idx[-1]) + 1
    if lo < 0 or hi > s.n:
        raise NonAdjacentMerge("merge indices out of range")
    cl = s.cluster
    if (lo > 0 and cl[lo - 1] == cl[lo]) or (hi < s.n and cl[hi - 1] == cl[hi]):
        raise NonAdjacentMerge("merge range must cover whole clusters")
    if cl[lo] == cl[hi - 1]:
        raise NonAdjacentMerge("merge range must span at least two clusters")

    w = s.m[lo:hi]
    total = w.sum()
    xbar = float(np.dot(w, s.x[lo:hi]) / total)
    vbar = float(np.dot(w, s.v[lo:hi]) / total)
    x = s.x.copy()
    v = s.v.copy()
    x[lo:hi] = xbar
    v[lo:hi] = vbar
    new_cl = cl.copy()
    new_cl[lo:hi] = cl[lo]
    drop = cl[hi - 1] - cl[lo]
    new_cl[hi:] -= drop
    return ParticleSystem(time=s.time, x=x, v=v, m=s.m, cluster=new_cl)


@dataclass(frozen=True)
class BoundsReport:
    """A-priori bounds derived from one state: psi range, velocity
    range, the speed bound m_tilde and the support radius growth."""

    psi_lo: float
    psi_hi: float
    vel_lo: float
    vel_hi: float
    m_tilde: float
    r0: float

    def radius(self, t: float) -> float:
        return self.r0 + t * self.m_tilde


def a_priori_bounds(s: ParticleSystem, kernel: Kernel) -> BoundsReport:
    psi = compute_psi(s, kernel)
    psi_lo = float(psi.min())
    psi_hi = float(psi.max())
    vel_lo = psi_lo - kernel.sup_omega
    vel_hi = psi_hi
    m_tilde = max(abs(vel_lo), abs(psi_hi))
    return BoundsReport(
        psi_lo=psi_lo,
        psi_hi=psi_hi,
        vel_lo=vel_lo,
        vel_hi=vel_hi,
        m_tilde=m_tilde,
        r0=float(np.max(np.abs(s.x))),
    )


def _leftmost_chain(reps, gaps, gap_tol):
    """First maximal run of touching gaps; returns cluster index range
    (c_lo, c_hi) inclusive, or None."""
    touching = np.flatnonzero(gaps <= gap_tol)
    if touching.size == 0:
        return None
    c_lo = int(touching[0])
    c_hi = c_lo + 1
    k = touching[0]
    for nxt in touching[1:]:
        if nxt == k + 1:
            c_hi = int(nxt) + 1
            k = nxt
        else:
            break
    return c_lo, c_hi


def _contact_event(state, kernel, gap_tol, time):
    """If any clusters touch, merge the leftmost maximal chain and
    return (new_state, event); otherwise (state, None)."""
    reps = state.cluster_reps()
    if reps.size < 2:
        return state, None
    gaps = np.diff(state.x[reps])
    chain = _leftmost_chain(reps, gaps, gap_tol)
    if chain is None:
        return state, None
    c_lo, c_hi = chain
    slices = state.cluster_slices()
    lo = slices[c_lo][0]
    hi = slices[c_hi][1]
    psi = _psi_arrays(state.x, state.v, state.m, kernel)
    merged = merge_clusters(state, range(lo, hi))
    merged = dataclasses.replace(merged, time=time)
    event = Event(
        kind="collision",
        time=time,
        indices=tuple(range(lo, hi)),
        pre_psi=tuple(float(p) for p in psi[lo:hi]),
        post_psi=float(np.dot(state.m[lo:hi], psi[lo:hi]) / state.m[lo:hi].sum()),
    )
    return merged, event


def step_to_next_event(
    s: ParticleSystem,
    kernel: Kernel,
    dt_max: float,
    tol: Tolerances | None = None,
) -> tuple[ParticleSystem, Event]:
    """Advance until the first collision or until ``dt_max`` elapses.

    Returns the post-event state together with the event: a collision
    (post-merge state, time localized to ``tol.event_time``) or a
    snapshot marker at ``s.time + dt_max``.  Contacts already present
    on entry (initial ties) are merged immediately at ``s.time``.
    """
    if not dt_max > 0:
        raise ValueError("dt_max must be positive")
    r0 = float(np.max(np.abs(s.x)))
    tol = (tol or Tolerances()).resolve(dt_max, r0)

    state, event = _contact_event(s, kernel, tol.gap, s.time)
    if event is not None:
        return state, event

    m = s.m
    cl = s.cluster
    reps = s.cluster_reps()
    # Integrate cluster representatives with aggregated masses: the
    # acceleration of a rigid cluster equals the representative sum over
    # cluster masses, and broadcasting the result back to the members
    # keeps them exactly equal (row-identical matrix products are not
    # bitwise reproducible across BLAS block boundaries, so per-particle
    # stepping could let members drift apart by an ulp).
    x = s.x[reps].copy()
    v = s.v[reps].copy()
    mr = np.add.reduceat(m, reps)
    accel = _make_accel(kernel, mr)
    t_local = 0.0

    def min_gap(xa):
        return float(np.min(np.diff(xa))) if xa.size > 1 else math.inf

    while t_local < dt_max:
        remaining = dt_max - t_local
        last = remaining <= tol.substep * (1.0 + 1e-12)
        h = remaining if last else tol.substep
        if h <= 0:
            break
        xn, vn = _rk4_step(x, v, accel, h)
        if min_gap(xn) > tol.gap:
            x, v = xn, vn
            t_local = dt_max if last else t_local + h
            continue

        # collision inside (t_local, t_local + h]: bisect the gap function
        lo_t, hi_t = 0.0, h
        x_hi, v_hi = xn, vn
        while hi_t - lo_t > tol.event_time:
            mid = 0.5 * (lo_t + hi_t)
            xm, vm = _rk4_step(x, v, accel, mid)
            if min_gap(xm) <= tol.gap:
                hi_t, x_hi, v_hi = mid, xm, vm
            else:
                lo_t = mid
        if hi_t <= 0:
            raise StepSizeUnderflow("collision bisection produced a nonpositive step")
        t_local += hi_t
        t_event = s.time + t_local
        x_rep = _restore_order(x_hi)
        touched = ParticleSystem(time=t_event, x=x_rep[cl], v=v_hi[cl], m=m, cluster=cl)
        state, event = _contact_event(touched, kernel, tol.gap, t_event)
        if event is None:
            raise StepSizeUnderflow(
                "bisection converged but no contact found at the localized time"
            )
        return state, event

    final = ParticleSystem(time=s.time + dt_max, x=x[cl], v=v[cl], m=m, cluster=cl)
    return final, Event(kind="snapshot", time=s.time + dt_max)


def _restore_order(x):
    """Clamp the tiny inversions a localized crossing can leave behind
    (bounded by gap rate times the event-time tolerance)."""
    if np.all(np.diff(x) >= 0):
        return x
    return np.maximum.accumulate(x)


def simulate(
    s0: ParticleSystem,
    kernel: Kernel,
    horizon: float,
    snapshot_times: Sequence[float] | None = None,
    tol: Tolerances | None = None,
    record_collision_states: bool = True,
) -> Trajectory:
    """Run the event loop from ``s0.time`` to ``s0.time + horizon``.

    The trajectory records the state and psi at every requested
    snapshot time and (by default) at every collision.  Snapshot times
    are absolute and must lie within the horizon; the final time is
    always recorded.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    t0 = float(s0.time)
    t_end = t0 + horizon
    r0 = float(np.max(np.abs(s0.x)))
    tol = (tol or Tolerances()).resolve(horizon, r0)

    if snapshot_times is None:
        targets = [t0, t_end]
    else:
        targets = sorted({float(t) for t in snapshot_times} | {t_end})
        eps = 1e-9 * (1.0 + abs(t_end))
        if targets and (targets[0] < t0 - eps or targets[-1] > t_end + eps):
            raise ValueError("snapshot times must lie within the horizon")

    records: list[TrajectoryRecord] = []
    events: list[Event] = []
    state = s0

    def record(st):
        psi = _psi_arrays(st.x, st.v, st.m, kernel)
        records.append(TrajectoryRecord(time=st.time, state=st, psi=psi))

    # initial ties merge before anything else happens
    while True:
        state, ev = _contact_event(state, kernel, tol.gap, t0)
        if ev is None:
            break
        events.append(ev)
        if record_collision_states:
            record(state)

    time_eps = 1e-12 * (1.0 + abs(t_end))
    for target in targets:
        while target - state.time > time_eps:
            state, ev = step_to_next_event(state, kernel, target - state.time, tol)
            if ev.kind == "collision":
                events.append(ev)
                if record_collision_states:
                    record(state)
            else:
                break
        if abs(state.time - target) <= max(time_eps, 1e-9 * (1.0 + abs(target))):
            state = dataclasses.replace(state, time=target)
        record(state)
        kind = "horizon" if target == targets[-1] else "snapshot"
        events.append(Event(kind=kind, time=target))

    return Trajectory(records=tuple(records), events=tuple(events))
