"""Cumulative representations, flux identities, entropy certificates.

Oracles: literal longdouble convolution sums, hand-computed two- and
three-particle flux chords, and the structural facts that the Kruzkov
residual vanishes (to quadrature accuracy) for collision-free windows
and for the extreme entropies alpha in {0, 1}.
"""

import numpy as np
import pytest

from narz import (
    Bump,
    GridMismatch,
    InsufficientSnapshots,
    KruzkovPair,
    ParticleSystem,
    PiecewiseLinearFlux,
    StepFunction,
    TestFunction,
    Tolerances,
    build_measure_pair,
    certify_state,
    check_oleinik,
    check_rankine_hugoniot,
    compute_psi,
    convolved_density,
    cumulative_from_particles,
    entropy_residual,
    flux_of_cumulative,
    make_builtin,
    moment,
    simulate,
)

K = make_builtin("raised_cosine", (0.6,))


def conv_oracle(positions, masses, kernel, x_eval):
    """Literal longdouble sum of m_j omega(x - x_j)."""
    out = np.empty(len(x_eval), dtype=np.longdouble)
    for i, xe in enumerate(x_eval):
        acc = np.longdouble(0.0)
        for xj, mj in zip(positions, masses):
            acc += np.longdouble(mj) * np.longdouble(float(kernel.omega(float(xe - xj))))
        out[i] = acc
    return out.astype(float)


def flux_from_state(s, kernel):
    return PiecewiseLinearFlux.from_slopes(s.m, compute_psi(s, kernel))


# step functions


def test_step_function_evaluation_and_left_limits():
    f = StepFunction(breakpoints=np.array([0.0, 1.0, 2.0]), jumps=np.array([0.2, 0.5, 0.3]))
    assert f(-1.0) == 0.0
    assert f(0.0) == 0.2  # right continuous
    assert f.left_limit(0.0) == 0.0
    assert f(1.5) == 0.7
    assert f.left_limit(2.0) == 0.7
    assert f(2.0) == 1.0
    assert f.total == 1.0


def test_step_function_requires_increasing_breakpoints():
    with pytest.raises(ValueError):
        StepFunction(breakpoints=np.array([1.0, 1.0]), jumps=np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        StepFunction(breakpoints=np.array([0.0, 1.0]), jumps=np.array([0.5, -0.1]))


def test_step_function_serialization_round_trip():
    f = StepFunction(breakpoints=np.array([-0.5, 0.25, 3.0]), jumps=np.array([0.1, 0.6, 0.3]))
    g = StepFunction.from_dict(f.to_dict())
    assert np.array_equal(g.breakpoints, f.breakpoints)
    assert np.array_equal(g.jumps, f.jumps)


def test_cumulative_from_particles_merges_coincident_positions():
    s = ParticleSystem.create([0.0, 0.0, 1.0], [0.3, 0.3, -1.0], [0.3, 0.3, 0.4])
    f = cumulative_from_particles(s)
    assert f.breakpoints.tolist() == [0.0, 1.0]
    assert f.jumps.tolist() == [0.6, 0.4]
    assert abs(f.total - 1.0) < 1e-15


# piecewise linear fluxes


def test_flux_from_slopes_and_interpolation():
    m = np.array([0.25, 0.25, 0.5])
    psi = np.array([2.0, 1.0, -1.0])
    flux = PiecewiseLinearFlux.from_slopes(m, psi)
    assert flux.thetas.tolist() == [0.0, 0.25, 0.5, 1.0]
    assert flux(0.0) == 0.0
    assert abs(flux(0.25) - 0.5) < 1e-15
    assert abs(flux(0.5) - 0.75) < 1e-15
    assert abs(flux(1.0) - 0.25) < 1e-15
    assert abs(flux(0.375) - 0.625) < 1e-15  # midpoint of the middle cell
    assert np.allclose(flux.slopes, psi)
    assert flux.lipschitz() == 2.0


def test_flux_serialization_round_trip():
    flux = PiecewiseLinearFlux(
        thetas=np.array([0.0, 0.3, 1.0]), values=np.array([0.0, 0.6, -0.2])
    )
    g = PiecewiseLinearFlux.from_dict(flux.to_dict())
    assert np.array_equal(g.thetas, flux.thetas)
    assert np.array_equal(g.values, flux.values)


def test_flux_of_cumulative_reads_values_at_plateaus():
    s = ParticleSystem.create([-0.5, 0.5], [1.0, -1.0], [0.5, 0.5])
    flux = flux_from_state(s, K)
    M = cumulative_from_particles(s)
    xs = np.array([-1.0, 0.0, 1.0])
    vals = flux_of_cumulative(M, flux, xs)
    assert vals[0] == flux(0.0)
    assert abs(vals[1] - flux(0.5)) < 1e-15
    assert abs(vals[2] - flux(1.0)) < 1e-15


def test_flux_of_cumulative_rejects_off_grid_plateaus():
    s = ParticleSystem.create([-0.5, 0.5], [1.0, -1.0], [0.5, 0.5])
    flux = PiecewiseLinearFlux(thetas=np.array([0.0, 0.4, 1.0]), values=np.array([0.0, 0.5, 0.3]))
    M = cumulative_from_particles(s)
    with pytest.raises(GridMismatch):
        flux_of_cumulative(M, flux, np.array([0.0]))


# convolution dual route


@pytest.mark.parametrize("n", [2, 5, 30])
def test_convolved_density_matches_longdouble_loop(n):
    rng = np.random.default_rng(n)
    x = np.sort(rng.uniform(-1, 1, n))
    m = rng.dirichlet(np.ones(n))
    s = ParticleSystem.create(x, np.zeros(n), m)
    M = cumulative_from_particles(s)
    x_eval = np.linspace(-1.5, 1.5, 37)
    got = convolved_density(M, K, x_eval)
    expect = conv_oracle(x, m, K, x_eval)
    assert np.max(np.abs(got - expect)) < 1e-14


# Rankine-Hugoniot and Oleinik certificates


def test_rh_residual_zero_at_initial_state():
    rng = np.random.default_rng(4)
    x = np.sort(rng.uniform(-1, 1, 8))
    v = rng.uniform(-1, 1, 8)
    m = rng.dirichlet(np.ones(8))
    s = ParticleSystem.create(x, v, m)
    flux = flux_from_state(s, K)
    res = check_rankine_hugoniot(s, flux, K)
    assert res.shape == (8,)
    assert np.max(res) < 1e-13


def test_two_particle_merge_chord_by_hand():
    # decreasing psi: a > b, equal masses; after the merge the cluster
    # speed must be the full chord (a + b) / 2 and the Oleinik margin
    # at the interior node is (a - b) / 2
    s = ParticleSystem.create([-0.4, 0.4], [0.9, -0.9], [0.5, 0.5])
    flux = flux_from_state(s, K)
    a, b = flux.slopes
    assert a > b
    traj = simulate(s, K, 3.0, tol=Tolerances(substep=1e-4))
    post = traj.final_state()
    assert post.n_clusters == 1
    rh = check_rankine_hugoniot(post, flux, K)
    assert rh.shape == (1,)
    assert rh[0] < 1e-8
    ole = check_oleinik(post, flux, K)
    assert abs(ole[0] - 0.5 * (a - b)) < 1e-8


def test_oleinik_margin_infinite_for_singletons():
    s = ParticleSystem.create([-0.5, 0.5], [0.1, -0.1], [0.5, 0.5])
    flux = flux_from_state(s, K)
    ole = check_oleinik(s, flux, K)
    assert np.all(np.isinf(ole))


def test_fully_merged_state_certifies():
    # spec-level example: run until everything sticks, then every
    # cluster (here one) satisfies RH to 1e-8 and Oleinik nonnegative
    x = [-0.6, -0.2, 0.1, 0.5]
    v = [1.5, 0.6, -0.4, -1.2]
    m = [0.25, 0.25, 0.25, 0.25]
    s = ParticleSystem.create(x, v, m)
    flux = flux_from_state(s, K)
    traj = simulate(s, K, 6.0, tol=Tolerances(substep=1e-4))
    final = traj.final_state()
    assert final.n_clusters == 1
    rows = certify_state(final, flux, K)
    assert len(rows) == 1
    assert rows[0].rh_residual <= 1e-8
    assert rows[0].oleinik_margin >= -1e-8


def test_certify_state_reports_every_cluster():
    s = ParticleSystem.create([-0.5, 0.0, 0.5], [0.2, 0.0, -0.2], [0.3, 0.4, 0.3])
    flux = flux_from_state(s, K)
    rows = certify_state(s, flux, K)
    assert [r.cluster for r in rows] == [0, 1, 2]
    assert all(r.t == 0.0 for r in rows)
    assert all(r.rh_residual < 1e-12 for r in rows)


def test_oleinik_flags_increasing_psi_merge():
    # an artificial cluster occupying a range where the flux is convex
    # (psi increasing) violates the one-sided chord condition
    m = np.array([0.5, 0.5])
    psi = np.array([-1.0, 1.0])  # increasing: entropy-violating merge
    flux = PiecewiseLinearFlux.from_slopes(m, psi)
    s = ParticleSystem(
        time=0.0,
        x=np.array([0.0, 0.0]),
        v=np.array([0.0, 0.0]),
        m=m,
        cluster=np.array([0, 0]),
    )
    ole = check_oleinik(s, flux, K)
    # chord from the left at the interior node minus the speed:
    # A(0.5)/0.5 = -1 while the cluster speed is 0 - conv(0)
    assert ole[0] < -0.5


# Kruzkov entropy pairs and the residual


def test_kruzkov_pair_formulas():
    flux = PiecewiseLinearFlux(thetas=np.array([0.0, 0.5, 1.0]), values=np.array([0.0, 0.8, 0.2]))
    pair = KruzkovPair(0.25)
    ms = np.array([0.0, 0.25, 0.6, 1.0])
    assert np.allclose(pair.eta(ms), [0.25, 0.0, 0.35, 0.75])
    expect_q = np.sign(ms - 0.25) * (flux(ms) - flux(0.25))
    assert np.allclose(pair.q(ms, flux), expect_q)
    with pytest.raises(ValueError):
        KruzkovPair(1.5)


def dense_trajectory(s, kernel, horizon, n_records=1601, substep=2e-4):
    return simulate(
        s,
        kernel,
        horizon,
        snapshot_times=np.linspace(0.0, horizon, n_records),
        tol=Tolerances(substep=substep),
    )


def test_entropy_residual_vanishes_without_collisions():
    # separating particles: no characteristics cross, so the residual
    # is pure quadrature noise for every alpha
    s = ParticleSystem.create([-0.3, 0.3], [-0.5, 0.5], [0.5, 0.5])
    flux = flux_from_state(s, K)
    traj = dense_trajectory(s, K, 1.0)
    assert not traj.collisions()
    test = TestFunction(space=Bump(center=0.0, width=2.0), time=Bump(center=0.5, width=0.45))
    for alpha in (0.0, 0.25, 0.5, 0.75, 1.0):
        res = entropy_residual(traj, flux, K, KruzkovPair(alpha), test)
        assert abs(res) < 1e-8


def test_entropy_residual_positive_at_shock():
    s = ParticleSystem.create([-0.4, 0.4], [0.9, -0.9], [0.5, 0.5])
    flux = flux_from_state(s, K)
    traj = dense_trajectory(s, K, 2.0)
    t_c = traj.collisions()[0].time
    assert 0.1 < t_c < 1.9
    width = 0.9 * min(t_c, 2.0 - t_c)
    test = TestFunction(space=Bump(center=0.0, width=2.5), time=Bump(center=t_c, width=width))
    # conservation: alpha = 0 and alpha = 1 see no dissipation
    res0 = entropy_residual(traj, flux, K, KruzkovPair(0.0), test)
    res1 = entropy_residual(traj, flux, K, KruzkovPair(1.0), test)
    assert abs(res0) < 1e-7
    assert abs(res1) < 1e-7
    # interior entropies see strictly positive dissipation at the merge
    for alpha in (0.25, 0.5, 0.75):
        res = entropy_residual(traj, flux, K, KruzkovPair(alpha), test)
        assert res > 1e-3
        assert res > 100 * abs(res0)


def test_entropy_residual_requires_dense_records():
    s = ParticleSystem.create([-0.4, 0.4], [0.9, -0.9], [0.5, 0.5])
    flux = flux_from_state(s, K)
    sparse = simulate(
        s, K, 2.0, snapshot_times=np.linspace(0, 2, 21), tol=Tolerances(substep=1e-3)
    )
    test = TestFunction(space=Bump(center=0.0, width=2.5), time=Bump(center=1.0, width=0.9))
    with pytest.raises(InsufficientSnapshots):
        entropy_residual(sparse, flux, K, KruzkovPair(0.5), test, quad_tol=1e-9)


def test_entropy_residual_rejects_uncovered_window():
    s = ParticleSystem.create([-0.3, 0.3], [-0.5, 0.5], [0.5, 0.5])
    flux = flux_from_state(s, K)
    traj = dense_trajectory(s, K, 1.0)
    test = TestFunction(space=Bump(center=0.0, width=1.0), time=Bump(center=0.9, width=0.5))
    with pytest.raises(InsufficientSnapshots):
        entropy_residual(traj, flux, K, KruzkovPair(0.5), test)


# measure pairs and moments


def test_measure_pair_moments_match_direct_sums():
    rng = np.random.default_rng(8)
    x = np.sort(rng.uniform(-1, 1, 6))
    v = rng.uniform(-1, 1, 6)
    m = rng.dirichlet(np.ones(6))
    s = ParticleSystem.create(x, v, m)
    mp = build_measure_pair(s)
    assert np.allclose(mp.rho_weights, m)
    assert np.allclose(mp.p_weights, m * v)
    f = np.cos
    assert abs(moment(mp, f, which="rho") - float(np.dot(m, np.cos(x)))) < 1e-14
    assert abs(moment(mp, f, which="P") - float(np.dot(m * v, np.cos(x)))) < 1e-14
    cdf = mp.cdf()
    assert abs(cdf.total - 1.0) < 1e-12
