"""Distances, stability bounds, convergence studies.

Oracles: Monte-Carlo integration for the L1 distance of step
functions, and the transport linear program (scipy linprog) for the
Wasserstein-1 distance between atomic measures.
"""

import math

import numpy as np
import pytest
from scipy.optimize import linprog

from narz import (
    AtomicMeasurePair,
    InitialDatum,
    ParticleSystem,
    StabilityInputs,
    StepFunction,
    Tolerances,
    VelocityProfile,
    a_priori_bounds,
    convergence_study,
    cumulative_from_particles,
    l1_distance,
    l1_distance_to_initial,
    make_builtin,
    simulate,
    stability_bounds,
    stability_experiment,
    time_modulus_check,
    wasserstein1,
)

K = make_builtin("raised_cosine", (0.5,))


def mc_l1(f, g, lo, hi, n_samples=10_000_000, seed=0):
    """Oracle: Monte-Carlo estimate of int |f - g| with a 3 sigma
    half-width."""
    rng = np.random.default_rng(seed)
    xs = rng.uniform(lo, hi, n_samples)
    vals = np.abs(f(xs) - g(xs))
    mean = float(np.mean(vals))
    half = 3.0 * float(np.std(vals)) / math.sqrt(n_samples)
    return (hi - lo) * mean, (hi - lo) * half


def lp_w1(x_mu, w_mu, x_nu, w_nu):
    """Oracle: transport LP for W1 between atomic measures."""
    n, k = len(x_mu), len(x_nu)
    cost = np.abs(np.subtract.outer(x_mu, x_nu)).ravel()
    a_eq = np.zeros((n + k, n * k))
    for i in range(n):
        a_eq[i, i * k : (i + 1) * k] = 1.0
    for j in range(k):
        a_eq[n + j, j::k] = 1.0
    b_eq = np.concatenate([w_mu, w_nu])
    res = linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    assert res.success
    return float(res.fun)


def random_measure(rng, n):
    x = np.sort(rng.uniform(-2, 2, n))
    x += np.arange(n) * 1e-9
    w = rng.dirichlet(np.ones(n))
    return x, w


def pair_from(x, w):
    return AtomicMeasurePair(positions=x, rho_weights=w, p_weights=w * 0.1)


# L1 distance


def test_l1_distance_monte_carlo_oracle():
    f = StepFunction(breakpoints=np.array([-1.0, 0.0, 1.0]), jumps=np.array([0.3, 0.3, 0.4]))
    g = StepFunction(breakpoints=np.array([-0.5, 0.7]), jumps=np.array([0.6, 0.4]))
    exact = l1_distance(f, g)
    est, half = mc_l1(f, g, -1.5, 1.5)
    assert abs(exact - est) < half + 1e-12


def test_l1_distance_hand_example():
    # masses 1 at -1 and at +1: the cdfs differ by 1 on [-1, 1)
    f = StepFunction(breakpoints=np.array([-1.0]), jumps=np.array([1.0]))
    g = StepFunction(breakpoints=np.array([1.0]), jumps=np.array([1.0]))
    assert abs(l1_distance(f, g) - 2.0) < 1e-15


def test_l1_distance_metric_properties():
    rng = np.random.default_rng(3)
    fs = []
    for _ in range(3):
        x, w = random_measure(rng, 5)
        fs.append(StepFunction(breakpoints=x, jumps=w))
    a, b, c = fs
    assert l1_distance(a, a) == 0.0
    assert abs(l1_distance(a, b) - l1_distance(b, a)) < 1e-15
    assert l1_distance(a, c) <= l1_distance(a, b) + l1_distance(b, c) + 1e-14


def test_l1_distance_rejects_unequal_totals():
    f = StepFunction(breakpoints=np.array([0.0]), jumps=np.array([1.0]))
    g = StepFunction(breakpoints=np.array([0.0]), jumps=np.array([0.5]))
    with pytest.raises(ValueError):
        l1_distance(f, g)


def test_l1_distance_to_initial_uniform_cross_route():
    # exact affine-segment integration vs the pure step-function route
    # through a fine atomization of the uniform density
    d = InitialDatum.uniform(0.0, 1.0)
    s = ParticleSystem.create([0.25, 0.75], [0.0, 0.0], [0.5, 0.5])
    step = cumulative_from_particles(s)
    exact = l1_distance_to_initial(step, d)
    n_fine = 20000
    fine = StepFunction(
        breakpoints=(np.arange(1, n_fine + 1)) / n_fine, jumps=np.full(n_fine, 1.0 / n_fine)
    )
    approx = l1_distance(step, fine)
    assert abs(exact - approx) < 2.0 / n_fine
    # hand value: two ramps of height 1/4 twice (up and down), each
    # contributing mean gap 1/8 over width 1/4, four pieces total
    assert abs(exact - 0.125) < 1e-12


def test_l1_distance_to_initial_smooth_cdf_quadrature():
    def cdf(x):
        x = np.clip(np.asarray(x, dtype=float), -1.0, 1.0)
        return 0.5 * (x + 1.0)

    d_cdf = InitialDatum.from_cdf(cdf, r0=1.0)
    d_uni = InitialDatum.uniform(-1.0, 1.0)
    s = ParticleSystem.create([-0.5, 0.5], [0.0, 0.0], [0.5, 0.5])
    step = cumulative_from_particles(s)
    via_quad = l1_distance_to_initial(step, d_cdf)
    via_affine = l1_distance_to_initial(step, d_uni)
    assert abs(via_quad - via_affine) < 1e-9


# Wasserstein-1


@pytest.mark.parametrize("seed", range(5))
def test_wasserstein_matches_transport_lp(seed):
    rng = np.random.default_rng(seed)
    x1, w1 = random_measure(rng, 5)
    x2, w2 = random_measure(rng, 5)
    got = wasserstein1(pair_from(x1, w1), pair_from(x2, w2))
    ref = lp_w1(x1, w1, x2, w2)
    assert abs(got - ref) < 1e-9


def test_wasserstein_translation_is_exact():
    rng = np.random.default_rng(10)
    x, w = random_measure(rng, 7)
    shift = 0.37
    got = wasserstein1(pair_from(x, w), pair_from(x + shift, w))
    assert abs(got - shift) < 1e-12


# stability bounds


def test_stability_bounds_closed_forms():
    si = StabilityInputs(t=1.0, w1_0=0.2, lip_diff=0.5, sup_phi=0.0, sup_omega=1.0)
    b = stability_bounds(si)
    assert abs(b.exp_bound - (0.2 + 0.25)) < 1e-15
    assert abs(b.linear_bound - (0.2 + 4.5)) < 1e-15
    assert b.min_bound == b.exp_bound

    si2 = StabilityInputs(t=2.0, w1_0=0.1, lip_diff=0.3, sup_phi=1.5, sup_omega=2.0)
    b2 = stability_bounds(si2)
    expect_exp = math.exp(2 * 2 * 1.5) * 0.1 + 0.3 * math.expm1(2 * 1.5) / (2 * 1.5)
    assert abs(b2.exp_bound - expect_exp) < 1e-12
    assert abs(b2.linear_bound - (0.1 + (0.3 + 8.0) * 2.0)) < 1e-15


def test_stability_bounds_continuous_at_zero_phi():
    si_eps = StabilityInputs(t=1.0, w1_0=0.2, lip_diff=0.5, sup_phi=1e-12, sup_omega=1.0)
    si_zero = StabilityInputs(t=1.0, w1_0=0.2, lip_diff=0.5, sup_phi=0.0, sup_omega=1.0)
    assert abs(stability_bounds(si_eps).exp_bound - stability_bounds(si_zero).exp_bound) < 1e-9


def test_stability_bounds_monotone_in_time():
    prev = 0.0
    for t in np.linspace(0.0, 3.0, 13):
        b = stability_bounds(StabilityInputs(t=float(t), w1_0=0.1, lip_diff=0.2, sup_phi=0.7, sup_omega=1.0))
        assert b.min_bound >= prev - 1e-12
        prev = b.min_bound


def test_stability_inputs_reject_negative():
    with pytest.raises(ValueError):
        StabilityInputs(t=-1.0, w1_0=0.0, lip_diff=0.0, sup_phi=0.0, sup_omega=0.0)


# time modulus


def test_time_modulus_bounded_by_one():
    rng = np.random.default_rng(21)
    x = np.sort(rng.uniform(-0.5, 0.5, 8))
    v = rng.uniform(-1, 1, 8)
    m = rng.dirichlet(np.ones(8))
    s = ParticleSystem.create(x, v, m)
    rep = a_priori_bounds(s, K)
    traj = simulate(s, K, 1.0, snapshot_times=np.linspace(0, 1, 41), tol=Tolerances(substep=1e-3))
    worst = time_modulus_check(traj, rep)
    assert 0.0 < worst <= 1.0 + 1e-9


# convergence study


def test_convergence_study_distances_shrink():
    d = InitialDatum.uniform(0.0, 1.0)
    table = convergence_study(d, K, horizon=0.5, ns=(8, 16, 32), n_ref=128)
    t_vals = sorted({r.t for r in table.rows})
    assert t_vals == [0.0, 0.25, 0.5]
    for t in t_vals:
        seq = [dist for _, dist in sorted(table.distances_at(t))]
        assert seq[2] < seq[0]
    # the t = 0 rows carry the closed-form atomization bound
    for r in table.rows:
        if r.t == 0.0:
            assert not math.isnan(r.bound)
            assert r.distance <= r.bound
        else:
            assert math.isnan(r.bound)
    # momentum moments drift stays modest at the final time
    for n, drifts in table.moment_drift.items():
        assert set(drifts) == {"one", "x", "x2", "cos", "gauss"}
        assert all(v < 0.5 for v in drifts.values())


def test_convergence_study_exact_initial_distance_uniform():
    # right-edge quantiles of the uniform law: the t = 0 distance to a
    # finer level has the closed form (1/n - 1/n_ref) / 2
    d = InitialDatum.uniform(0.0, 1.0)
    table = convergence_study(d, K, horizon=0.25, ns=(8, 16), n_ref=64, times=(0.0, 0.25))
    for r in table.rows:
        if r.t == 0.0:
            expect = 0.5 * (1.0 / r.n - 1.0 / table.n_ref)
            assert abs(r.distance - expect) < 1e-12


# stability experiment


def test_stability_experiment_identical_data_is_tight():
    d = InitialDatum.uniform(0.0, 1.0)
    u0 = VelocityProfile.constant(0.0)
    rep = stability_experiment(d, u0, d, u0, K, horizon=0.5, n=32)
    assert rep.w1_0 == 0.0
    assert rep.lip_diff < 1e-12
    for row in rep.rows:
        assert row.measured < 1e-12
        assert row.within
    assert rep.all_within


def test_stability_experiment_translation():
    d_a = InitialDatum.uniform(0.0, 1.0)
    d_b = InitialDatum.uniform(0.25, 1.25)
    u0 = VelocityProfile.constant(0.0)
    rep = stability_experiment(d_a, u0, d_b, u0, K, horizon=0.5, n=64)
    assert abs(rep.w1_0 - 0.25) < 1e-9
    assert rep.all_within
    for row in rep.rows:
        assert row.measured <= row.min_bound + rep.tol_meas
