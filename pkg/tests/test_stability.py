import math

import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings
from hypothesis import strategies as hst

from translator_lab import stability as st
from translator_lab.exact import bowl, grim_reaper
from translator_lab.geometry import compute_geometry
from translator_lab.grid import ScalarField, make_domain


def flat_square(n=17, L=math.pi):
    h = L / (n - 1)
    d = make_domain("RECT", x=(-2 * h, L + 2 * h), y=(-2 * h, L + 2 * h), nx=n + 4, ny=n + 4)
    return ScalarField(d, np.zeros((d.nx, d.ny)))


def random_phi(op, seed):
    phi = np.zeros((op.domain.nx, op.domain.ny))
    phi[op.free_mask] = np.random.default_rng(seed).standard_normal(int(op.free_mask.sum()))
    return phi


@pytest.fixture(scope="module")
def bowl_op():
    d = make_domain("RECT", x=(-1, 1), y=(-1, 1), nx=21, ny=21)
    u = st.critical_point(bowl().sample(d)).u
    return st.jacobi_operator(u)


def test_flat_operator_has_zero_potential_and_constant_kernel():
    op = st.jacobi_operator(flat_square(), C=0.0)
    assert np.allclose(op.natural_potential, 0, atol=1e-12)
    out = op.apply(np.ones((op.domain.nx, op.domain.ny))).values
    assert np.allclose(out, 0, atol=1e-10)


def test_flat_top_eigenvalue_is_minus_two():
    lam = st.top_eigenvalue(st.jacobi_operator(flat_square(33), C=0.0), 1e-9).value
    assert lam == pytest.approx(-2.0, abs=0.02)


def test_counterexample_potential_makes_it_positive():
    lam = st.top_eigenvalue(st.jacobi_operator(flat_square(33), C=0.0, potential=4.0), 1e-9).value
    assert lam > 1.9


@settings(max_examples=10, deadline=None)
@given(hst.integers(0, 2**31))
def test_flat_form_is_negative(seed):
    op = st.jacobi_operator(flat_square(), C=0.0)
    assert op.quadratic_form(random_phi(op, seed)) < 0


def test_first_variation_of_plane():
    u = flat_square()
    d = u.domain
    eta = st.bump(d, (math.pi / 2, math.pi / 2), 1.0)
    # H_var = 0 and tilt = 1: the first variation is C times the integral of eta
    fv = st.first_variation(compute_geometry(u), eta, C=1.0)
    assert fv == pytest.approx(np.sum(eta.values) * d.hx * d.hy, rel=1e-12)


def test_operator_symmetric_in_weighted_product(bowl_op):
    a, b = random_phi(bowl_op, 1), random_phi(bowl_op, 2)
    la, lb = bowl_op.apply(a).values, bowl_op.apply(b).values
    m = bowl_op.mass
    assert np.sum(m * b * la) == pytest.approx(np.sum(m * a * lb), rel=1e-10)


def test_power_iteration_matches_eigsh(bowl_op):
    est = st.top_eigenvalue(bowl_op, 1e-9)
    ref = spla.eigsh(bowl_op.eigen_matrix(), k=1, which="LA", return_eigenvectors=False)[0]
    assert est.value == pytest.approx(ref, abs=1e-7)
    assert est.value < 0


def test_quadratic_form_two_ways(bowl_op):
    eta = st.bump(bowl_op.domain, (0.0, 0.0), 0.7)
    q_op, q_sum = bowl_op.quadratic_form(eta), bowl_op.quadratic_form_sum(eta)
    assert q_op == pytest.approx(q_sum, rel=1e-10)


def test_identity_for_translator(bowl_op):
    eta = st.bump(bowl_op.domain, (0.0, 0.0), 0.7)
    assert st.stability_identity(bowl_op, eta)["identity_gap"] <= 1e-6


def test_translations_in_kernel(bowl_op):
    # vertical shifts are exact symmetries of the scheme, horizontal ones only to O(h^2)
    assert st.kernel_check(bowl_op, st.E3) < 1e-10
    d = make_domain("RECT", x=(-1, 1), y=(-1, 1), nx=41, ny=41)
    fine = st.jacobi_operator(st.critical_point(bowl().sample(d)).u)
    for v in (st.E1, st.E2):
        coarse_r, fine_r = st.kernel_check(bowl_op, v), st.kernel_check(fine, v)
        assert coarse_r < 1e-3 and coarse_r / fine_r > 3.2


def test_support_enforced(bowl_op):
    phi = np.zeros((bowl_op.domain.nx, bowl_op.domain.ny))
    phi[1, 1] = 1.0
    with pytest.raises(ValueError, match="vanish"):
        bowl_op.quadratic_form(phi)


def test_weighted_area_of_unit_square():
    d = make_domain("RECT", x=(0, 1), y=(0, 1), nx=9, ny=9)
    g = compute_geometry(ScalarField(d, np.zeros((9, 9))))
    assert st.weighted_area(g, rule="trapezoid") == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(ValueError):
        st.weighted_area(g, rule="simpson")


def test_perturbed_F_zero_and_guard():
    d = make_domain("RECT", x=(-1.2, 1.2), y=(-1, 1), nx=17, ny=17)
    g = compute_geometry(grim_reaper().sample(d))
    eta = st.bump(d, (0.0, 0.0), 0.8)
    assert st.perturbed_F(g, eta, 0.0) == st.perturbed_F(g, np.zeros((17, 17)), 0.3)
    with pytest.raises(ValueError, match="too large"):
        st.perturbed_F(g, eta, 10.0)


def test_report_for_non_translator():
    d = make_domain("RECT", x=(-1, 1), y=(-1, 1), nx=17, ny=17)
    X, Y = d.coords()
    rep = st.stability_report(ScalarField(d, 2.0 * (X * X + Y * Y)), n_random=3)
    assert not rep.translator and not rep.polished and not rep.verdict
    js = rep.to_json()
    assert js["verdict"] is False and len(js["Q_values"]) == 5


def test_report_for_grim():
    d = make_domain("RECT", x=(-1.2, 1.2), y=(-1, 1), nx=25, ny=25)
    rep = st.stability_report(grim_reaper().sample(d), n_random=5)
    assert rep.translator and rep.polished and rep.verdict
    assert rep.top_eigenvalue["value"] < 0
