"""Kernel families: closed-form norms, panel forms, admissibility.

Oracles: adaptive quadrature for masses / L1 norms / antiderivatives,
central finite differences for omega' = phi, and the literal blocked
double sum as the reference for the prefix-sum fast path.
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from narz import (
    BUILTIN_FAMILIES,
    Kernel,
    NonpositiveSupport,
    UnknownFamily,
    eval_panels,
    kernel_sums,
    make_builtin,
    pairwise_sums,
    panel_antiderivative,
    validate_hypotheses,
)
from narz.fastsum import panel_sums

RADII = (0.5, 1.0, 2.3)


def panel_joints(kernel):
    js = sorted({p[0] for p in kernel.form_omega} | {p[1] for p in kernel.form_omega})
    return js[1:-1]


def quad_mass(kernel):
    """Oracle: adaptive quadrature of omega over its support, split at
    the panel joints."""
    a, b = kernel.support
    val, err = quad(kernel.omega, a, b, points=panel_joints(kernel), limit=200)
    assert err < 1e-11
    return val


def quad_l1_phi(kernel):
    a, b = kernel.support
    pts = sorted(set(panel_joints(kernel)) | {0.5 * (a + b)})
    val, err = quad(lambda u: abs(kernel.phi(u)), a, b, points=pts, limit=200)
    assert err < 1e-9
    return val


def fd_derivative(f, u, h=1e-6):
    """Oracle: fourth-order central difference."""
    return (-f(u + 2 * h) + 8 * f(u + h) - 8 * f(u - h) + f(u - 2 * h)) / (12 * h)


def quad_antiderivative(kernel, x):
    a, b = kernel.support
    if x <= a:
        return 0.0
    pts = [j for j in panel_joints(kernel) + [b] if a < j < x]
    val, err = quad(kernel.omega, a, x, points=pts or None, limit=200)
    assert err < 1e-11
    return val


@pytest.mark.parametrize("family", BUILTIN_FAMILIES)
@pytest.mark.parametrize("r", RADII)
def test_builtin_mass_is_one(family, r):
    k = make_builtin(family, (r,))
    assert abs(quad_mass(k) - 1.0) < 1e-10


@pytest.mark.parametrize("family", BUILTIN_FAMILIES)
@pytest.mark.parametrize("r", RADII)
def test_phi_is_derivative_of_omega(family, r):
    k = make_builtin(family, (r,))
    a, b = k.support
    # interior points away from panel joints where the FD stencil is clean
    joints = {p[0] for p in k.form_omega} | {p[1] for p in k.form_omega}
    us = [u for u in np.linspace(a, b, 41)[1:-1] if min(abs(u - j) for j in joints) > 1e-3]
    for u in us:
        assert abs(k.phi(u) - fd_derivative(k.omega, u)) < 1e-8 / r


@pytest.mark.parametrize("family", BUILTIN_FAMILIES)
@pytest.mark.parametrize("r", RADII)
def test_norms_match_grid_and_quadrature(family, r):
    k = make_builtin(family, (r,))
    a, b = k.support
    # the sup of phi can sit exactly at a panel joint, so put the
    # joints on the grid
    u = np.union1d(np.linspace(a, b, 200001), panel_joints(k))
    sup_o = np.max(np.abs(k.omega(u)))
    sup_p = np.max(np.abs(k.phi(u)))
    assert sup_o <= k.sup_omega * (1 + 1e-12)
    assert sup_o > k.sup_omega * (1 - 1e-7)
    assert sup_p <= k.sup_phi * (1 + 1e-12)
    assert sup_p > k.sup_phi * (1 - 1e-7)
    assert abs(quad_l1_phi(k) - k.l1_phi) < 1e-8


def test_closed_form_norms():
    k = make_builtin("raised_cosine", (2.0,))
    assert k.sup_omega == 0.5
    assert k.sup_phi == math.pi / 8.0
    assert k.l1_phi == 1.0
    k = make_builtin("quadratic_spline", (1.0,))
    assert k.sup_omega == 9.0 / 8.0
    assert k.l1_phi == 9.0 / 4.0
    k = make_builtin("downstream_cosine", (0.5,))
    assert k.support == (-0.5, 0.0)
    assert k.sup_omega == 4.0
    k = make_builtin("upstream_cosine", (0.5,))
    assert k.support == (0.0, 0.5)


@pytest.mark.parametrize("family", BUILTIN_FAMILIES)
def test_panel_antiderivative_matches_quadrature(family):
    k = make_builtin(family, (1.3,))
    prim = panel_antiderivative(k.form_omega)
    a, b = k.support
    rng = np.random.default_rng(5)
    xs = np.concatenate([rng.uniform(a - 0.5, b + 0.5, 20), [a, b, 0.0]])
    for x in xs:
        assert abs(prim(x) - quad_antiderivative(k, x)) < 1e-11
    # normalized to zero left of the support and total mass to the right
    assert prim(a - 1.0) == 0.0
    assert abs(prim(b + 1.0) - 1.0) < 1e-12


@pytest.mark.parametrize("family", BUILTIN_FAMILIES)
def test_vanishes_outside_support(family):
    k = make_builtin(family, (0.7,))
    a, b = k.support
    u = np.array([a - 1.0, a - 1e-9, b + 1e-9, b + 1.0])
    assert np.all(k.omega(u) == 0.0)
    assert np.all(k.phi(u) == 0.0)
    # admissible kernels vanish continuously at the edges
    assert abs(k.omega(a + 1e-10)) < 1e-6
    assert abs(k.omega(b - 1e-10)) < 1e-6


def test_eval_panels_scalar_and_vector():
    k = make_builtin("raised_cosine", (1.0,))
    u = np.linspace(-1.2, 1.2, 101)
    vec = eval_panels(k.form_omega, u)
    scal = np.array([eval_panels(k.form_omega, float(v)) for v in u])
    assert np.array_equal(vec, scal)


def test_make_builtin_rejects_unknown_family():
    with pytest.raises(UnknownFamily):
        make_builtin("triangle", (1.0,))
    with pytest.raises(UnknownFamily):
        make_builtin("raised_cosine", (1.0, 2.0))


def test_make_builtin_rejects_bad_radius():
    for r in (0.0, -1.0, math.inf, math.nan):
        with pytest.raises((NonpositiveSupport, ValueError)):
            make_builtin("raised_cosine", (r,))


@pytest.mark.parametrize("family", BUILTIN_FAMILIES)
def test_builtin_hypotheses_hold(family):
    rep = validate_hypotheses(make_builtin(family, (1.0,)))
    assert rep.admissible
    assert abs(rep.mass - 1.0) < 1e-10
    assert rep.min_omega >= -1e-12


def test_hypothesis_checks_flag_violations():
    # half the mass: unit_mass must fail
    base = make_builtin("raised_cosine", (1.0,))
    halved = Kernel(
        omega=lambda u: 0.5 * base.omega(u),
        phi=lambda u: 0.5 * base.phi(u),
        support=base.support,
        sup_omega=0.5 * base.sup_omega,
        sup_phi=0.5 * base.sup_phi,
        l1_phi=0.5 * base.l1_phi,
    )
    rep = validate_hypotheses(halved)
    assert not rep.unit_mass
    assert not rep.admissible

    # mismatched derivative: phi not omega'
    wrong = Kernel(
        omega=base.omega,
        phi=lambda u: -base.phi(u),
        support=base.support,
        sup_omega=base.sup_omega,
        sup_phi=base.sup_phi,
        l1_phi=base.l1_phi,
    )
    rep = validate_hypotheses(wrong)
    assert not rep.derivative_consistent
    assert not rep.admissible


def test_kernel_requires_finite_support():
    with pytest.raises(NonpositiveSupport):
        Kernel(
            omega=lambda u: u,
            phi=lambda u: u,
            support=(1.0, 1.0),
            sup_omega=1.0,
            sup_phi=1.0,
            l1_phi=1.0,
        )


# dual route: the prefix-sum fast path must reproduce the literal
# blocked double sum on every builtin family


@pytest.mark.parametrize("family", BUILTIN_FAMILIES)
def test_panel_sums_match_pairwise(family):
    rng = np.random.default_rng(11)
    k = make_builtin(family, (0.4,))
    n = 300
    x = np.sort(rng.uniform(-1.0, 1.0, n))
    w = rng.uniform(0.1, 1.0, n)
    for which, g, form in (("omega", k.omega, k.form_omega), ("phi", k.phi, k.form_phi)):
        slow = pairwise_sums(x, x, w, g, k.support)
        fast = panel_sums(x, w, form)
        scale = max(1.0, np.max(np.abs(slow)))
        assert np.max(np.abs(fast - slow)) < 1e-13 * scale
        via_dispatch = kernel_sums(x, w, k, which)
        assert np.array_equal(via_dispatch, fast)


def test_panel_sums_separate_eval_points():
    rng = np.random.default_rng(3)
    k = make_builtin("quadratic_spline", (0.6,))
    x = np.sort(rng.uniform(-1.0, 1.0, 200))
    w = rng.uniform(0.0, 1.0, 200)
    x_eval = np.sort(rng.uniform(-1.5, 1.5, 57))
    slow = pairwise_sums(x_eval, x, w, k.omega, k.support)
    fast = panel_sums(x, w, k.form_omega, x_eval=x_eval)
    assert np.max(np.abs(fast - slow)) < 1e-12


def test_pairwise_sums_multiple_weight_rows():
    rng = np.random.default_rng(7)
    k = make_builtin("raised_cosine", (0.8,))
    x = np.sort(rng.uniform(-1.0, 1.0, 50))
    w = rng.uniform(0.0, 1.0, (3, 50))
    out = pairwise_sums(x, x, w, k.omega, k.support)
    assert out.shape == (3, 50)
    for i in range(3):
        row = pairwise_sums(x, x, w[i], k.omega, k.support)[0]
        # stacked and single-row evaluations may order the additions
        # differently inside the matmul
        assert np.allclose(out[i], row, rtol=0.0, atol=1e-13)
