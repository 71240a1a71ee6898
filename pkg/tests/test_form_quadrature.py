import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semigroup_lab import coefficient_models as cm
from semigroup_lab import form_quadrature as fq


def rng_of(seed):
    return np.random.default_rng(seed)


def grid_for(u, h, rule="midpoint"):
    return fq.QuadratureGrid.covering(u, h, rule=rule)


def variable_scalar_field_1d():
    """``q(x) = 1 + x^2`` with m = 1 and no potential."""
    return cm.CoefficientField(
        1, 1,
        q=lambda X: (1 + X[:, 0] ** 2)[:, None, None],
        a=lambda X: np.zeros((len(X), 1, 1, 1, 1)),
        v_mat=lambda X: np.zeros((len(X), 1, 1)),
        grad_q=lambda X: (2 * X[:, 0])[:, None, None, None],
        grad_a=lambda X: np.zeros((len(X), 1, 1, 1, 1, 1)),
        name="q=1+x^2")


# --- test functions ---------------------------------------------------------

@pytest.mark.parametrize("kind", ["gaussian", "poly"])
def test_test_function_derivatives_consistent(kind):
    u = fq.random_mixture(rng_of(0), 2, 2, kind=kind)
    X = rng_of(1).uniform(-0.5, 0.5, (20, 2))
    errs = []
    for step in (1e-3, 5e-4):
        fd_g = np.stack([(u.value(X + step * e) - u.value(X - step * e)) / (2 * step)
                         for e in np.eye(2)], axis=1)
        fd_h = np.stack([(u.grad(X + step * e) - u.grad(X - step * e)) / (2 * step)
                         for e in np.eye(2)], axis=1)
        errs.append((np.abs(fd_g - u.grad(X)).max(), np.abs(fd_h - u.hess(X)).max()))
    for coarse, fine in zip(*errs):
        assert coarse / fine > 3.5


def test_poly_bump_vanishes_on_support_boundary():
    u = fq.poly_bump([0.0, 0.0], 0.5, [1.0, 2.0])
    X = np.array([[0.5, 0.0], [0.0, -0.5], [0.6, 0.6]])
    assert np.all(u.value(X) == 0) and np.all(u.grad(X) == 0)


# --- pointwise --------------------------------------------------------------

def test_regularized_modulus_examples():
    assert fq.regularized_modulus(np.zeros(2), 1.0, 1.5) == 1.0
    assert fq.regularized_modulus(np.array([3.0, 4j]), 123.0, 2) == 5.0
    assert fq.regularized_modulus(np.array([3.0]), 16.0, 1.5) == 5.0


def test_apply_operator_heat_gaussian():
    for d in (1, 2, 3):
        u = fq.gaussian(np.zeros(d), 1 / np.sqrt(2), [1.0])
        X = rng_of(d).uniform(-2, 2, (50, d))
        r2 = np.sum(X ** 2, axis=1)
        expected = (4 * r2 - 2 * d) * np.exp(-r2)
        got = fq.apply_operator(cm.make_heat(d, 1), u, X)[:, 0]
        assert np.allclose(got, expected, rtol=0, atol=1e-13)


def test_apply_operator_with_identity_potential():
    u = fq.random_mixture(rng_of(2), 2, 2)
    X = rng_of(3).uniform(-1, 1, (30, 2))
    lap = np.trace(u.hess(X), axis1=1, axis2=2)
    got = fq.apply_operator(cm.make_heat(2, 2, V0=np.eye(2)), u, X)
    assert np.allclose(got, lap - u.value(X), rtol=0, atol=1e-12)


def test_apply_operator_variable_coefficient_against_flux_fd():
    fld = variable_scalar_field_1d()
    u = fq.gaussian([0.3], 0.4, [1.0])
    X = np.linspace(-1, 1, 9)[:, None]
    exact = fq.apply_operator(fld, u, X)[:, 0].real
    x = X[:, 0]
    assert np.allclose(exact, (2 * x * u.grad(X)[:, 0, 0] + (1 + x ** 2) * u.hess(X)[:, 0, 0, 0]).real)
    errs = []
    for h in (1e-2, 5e-3, 2.5e-3):
        q = lambda s: 1 + s ** 2
        f = lambda s: u.value(s[:, None])[:, 0].real
        flux = (q(x + h / 2) * (f(x + h) - f(x)) - q(x - h / 2) * (f(x) - f(x - h))) / h ** 2
        errs.append(np.abs(flux - exact).max())
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_dmod_matches_exact_gradient():
    c, w = np.array([0.1, -0.2]), 0.3
    amp = np.array([1.0 + 2j, -0.5j])
    u = fq.gaussian(c, w, amp)
    X = rng_of(4).uniform(-1, 1, (200, 2))
    g = np.exp(-np.sum((X - c) ** 2, axis=1) / (2 * w * w))
    # |u|^2 = |amp|^2 g^2 so D|u|^2 = -2 |amp|^2 g^2 (x - c) / w^2
    exact = -2 * np.sum(np.abs(amp) ** 2) * (g ** 2)[:, None] * (X - c) / w ** 2
    got = fq.dmod(u.value(X), u.grad(X))
    assert np.max(np.abs(got - exact)) <= 1e-10 * np.max(np.abs(exact))


def test_pointwise_checks_on_coupled_field():
    fld = cm.random_case_II(rng_of(5), 2, 2, 0.2)
    u = fq.random_mixture(rng_of(6), 2, 2)
    X = rng_of(7).uniform(-1, 1, (500, 2))
    rel, margin = fq.pointwise_checks(fld, u, X)
    assert rel < 1e-7
    assert margin >= -1e-10


# --- identity ---------------------------------------------------------------

def test_identity_zero_function():
    u = fq.gaussian([0.0, 0.0], 0.3, [1.0, 1.0]).scaled(0.0)
    res = fq.dissipation_identity_residual(cm.make_heat(2, 2), u, 1.5, 1e-6, grid_for(u, 0.1))
    assert res.residual == 0


def test_identity_p2_green():
    u = fq.random_mixture(rng_of(8), 2, 2, complex_values=False)
    res = fq.dissipation_identity_residual(cm.make_heat(2, 2), u, 2.0, 0.0, grid_for(u, 1 / 64))
    assert res.residual <= 1e-8
    bd = res.breakdown
    assert bd.cross_term == 0 and bd.A_cross_term == 0


def test_identity_converges_case_II():
    fld = cm.random_case_II(rng_of(9), 2, 2, 0.2)
    u = fq.random_mixture(rng_of(10), 2, 2)
    res = [fq.dissipation_identity_residual(fld, u, 2.2, 0.0, grid_for(u, h)).residual
           for h in (1 / 4, 1 / 8)]
    assert res[0] / res[1] >= 3


def test_grid_sanity_bound():
    u = fq.gaussian([0.0], 0.1, [1.0])
    with pytest.raises(ValueError, match="width/8"):
        fq.dissipation_identity_residual(cm.make_heat(1, 1), u, 2.0, 0.0, grid_for(u, 0.5))
    with pytest.raises(ValueError, match="support"):
        fq.dissipation_identity_residual(cm.make_heat(1, 1), u, 2.0, 0.0,
                                         fq.QuadratureGrid([-0.2], [0.2], 0.01))


def test_B_at_most_4A():
    fld = cm.random_case_I(rng_of(11), 2, 2, 0.05)
    for seed in range(5):
        u = fq.random_mixture(rng_of(100 + seed), 2, 2)
        for p in (1.5, 2.5):
            g = grid_for(u, 1 / 16)
            bd = fq.form_breakdown(fld, u, p, fq.default_eps(u, g, p), g)
            assert bd.B_quant <= 4 * bd.A_quant * (1 + 1e-10)


def test_trapezoid_rule_agrees():
    fld = cm.random_case_II(rng_of(12), 2, 2, 0.2)
    u = fq.random_mixture(rng_of(13), 2, 2)
    a = fq.form_breakdown(fld, u, 2.3, 0.0, grid_for(u, 1 / 16))
    b = fq.form_breakdown(fld, u, 2.3, 0.0, grid_for(u, 1 / 16, "trapezoid"))
    assert abs(a.lhs - b.lhs) <= 1e-10 * a.scale


def test_translation_invariance():
    fld = cm.make_heat(2, 2, V0=np.array([[1.0, 0.2], [-0.2, 1.5]]))
    u = fq.random_mixture(rng_of(14), 2, 2)
    v = u.shifted([0.37, -1.21])
    for p in (1.7, 2.0, 2.6):
        g, gs = grid_for(u, 1 / 16), grid_for(v, 1 / 16)
        a = fq.form_breakdown(fld, u, p, fq.default_eps(u, g, p), g)
        b = fq.form_breakdown(fld, v, p, fq.default_eps(v, gs, p), gs)
        assert abs(a.lhs - b.lhs) <= 1e-10 * a.scale


def test_thread_count_does_not_change_bits():
    fld = cm.random_case_III(rng_of(15), 2, 2, 0.05, 0.025)
    u = fq.random_mixture(rng_of(16), 2, 2)
    g = grid_for(u, 1 / 32)
    a = fq.form_breakdown(fld, u, 1.8, 1e-6, g, threads=1)
    b = fq.form_breakdown(fld, u, 1.8, 1e-6, g, threads=4)
    assert a.to_dict() == b.to_dict()


# --- dissipativity ----------------------------------------------------------

def test_margin_p2_green_equality():
    u = fq.random_mixture(rng_of(17), 2, 2, complex_values=False)
    r = fq.dissipativity_margin(cm.make_heat(2, 2), u, 2.0, 0.0, 1.0, grid_for(u, 1 / 32))
    assert abs(r.margin) <= 1e-10 * r.A_quant


def test_margin_p2_decomposition():
    fld = cm.random_case_II(rng_of(18), 2, 2, 0.2, V0=np.eye(2))
    u = fq.random_mixture(rng_of(19), 2, 2)
    for delta in (0.0, 0.5, 1.0):
        r = fq.dissipativity_margin(fld, u, 2.0, 0.0, delta, grid_for(u, 1 / 32))
        bd = r.breakdown
        expected = (1 - delta) * bd.A_quant + bd.A_term.real + bd.V_term.real
        assert r.margin == pytest.approx(expected, rel=1e-8)
        assert r.margin >= 0


def test_margin_outside_theory_flag():
    fld = cm.random_case_II(rng_of(20), 2, 2, 0.5)
    u = fq.random_mixture(rng_of(21), 2, 2)
    r = fq.dissipativity_margin(fld, u, 8.0, 0.0, 0.0, grid_for(u, 1 / 16))
    assert r.outside_theory
    r = fq.dissipativity_margin(fld, u, 2.5, 0.0, 0.0, grid_for(u, 1 / 16))
    assert not r.outside_theory


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 1000), f=st.floats(0.02, 0.98))
def test_margin_nonnegative_case_III(seed, f):
    from semigroup_lab.constants_lab import Jtilde_interval, max_delta_for
    fld = cm.random_case_III(rng_of(seed), 2, 2, 0.05, 0.025)
    C = fld.metadata["claimed_scriptC"]
    Jt = Jtilde_interval(C)
    p = float(Jt.lo) + f * (min(float(Jt.hi), 8.0) - float(Jt.lo))
    u = fq.random_mixture(rng_of(seed + 1), 2, 2)
    g = grid_for(u, 1 / 16)
    r = fq.dissipativity_margin(fld, u, p, fq.default_eps(u, g, p), max_delta_for(p, C).delta, g)
    assert r.margin >= -1e-6


# --- analyticity ------------------------------------------------------------

def test_analyticity_real_symmetric_is_zero():
    fld = cm.random_case_I(rng_of(22), 2, 2, 0.05, V0=np.array([[2.0, 0.5], [0.5, 1.0]]))
    u = fq.random_mixture(rng_of(23), 2, 2, complex_values=False)
    for p in (1.6, 2.0, 3.0):
        g = grid_for(u, 1 / 16)
        r = fq.analyticity_ratio(fld, u, p, fq.default_eps(u, g, p), g)
        assert r.num <= 1e-10 * r.breakdown.scale
        assert r.ratio <= 1e-10


def test_analyticity_identity_coefficients_complex_u():
    fld = cm.make_heat(2, 2, V0=np.eye(2))
    u = fq.random_mixture(rng_of(24), 2, 2, complex_values=True)
    r = fq.analyticity_ratio(fld, u, 2.0, 0.0, grid_for(u, 1 / 32))
    assert r.num <= 1e-10 * r.breakdown.scale


def test_analyticity_budget_holds_case_III():
    rng = rng_of(25)
    fld = cm.random_case_III(rng, 2, 2, 0.3, 0.02, V0=np.array([[1.0, 0.4], [-0.4, 1.0]]))
    cv = cm.estimate_cV(fld, cm.SamplePlan([-1, -1], [1, 1], resolution=3)).value
    for _ in range(5):
        u = fq.random_mixture(rng, 2, 2)
        for p in (1.8, 2.0, 2.4):
            g = grid_for(u, 1 / 16)
            r = fq.analyticity_ratio(fld, u, p, fq.default_eps(u, g, p), g, c_V=cv)
            assert np.isfinite(r.ratio)
            assert r.budget["within"]


def test_analyticity_zero_den():
    u = fq.gaussian([0.0], 0.3, [1.0]).scaled(0.0)
    r = fq.analyticity_ratio(cm.make_heat(1, 1), u, 2.0, 0.0, grid_for(u, 0.1))
    assert r.ratio == 0.0


# --- weighted estimate ------------------------------------------------------

def _weighted_setup():
    # Q = 0.1 phi I, G = 0.1 I so C = 0.1; V = (1 + |x|^2) I equals v
    fld = cm.make_symmetric_case_II(0.1 * np.eye(2), 0.1 * np.eye(2), V0=np.eye(2), alpha=0.1, v_alpha=1.0)
    w = cm.quadratic_potential_weight(gamma=0.5, C_gamma=0.0, c1=1.0)
    return fld, w


def test_weighted_certified_family_finite_ratio():
    fld, w = _weighted_setup()
    rep = cm.certify_potential_weight(fld, w, cm.SamplePlan([-4, -4], [4, 4], resolution=17))
    assert rep.passed, rep.status
    rng = rng_of(26)
    ratios = []
    for _ in range(10):
        u = fq.random_mixture(rng, 2, 2, complex_values=False, center_box=1.0, widths=(0.15, 0.4))
        a = fq.weighted_estimate_audit(fld, w, u, 2.0, 0.0, grid_for(u, 1 / 16), c0=0.0, scriptC=0.1)
        assert a.identity_residual <= 1e-8 * (abs(a.lhs) + 1)
        assert a.margin >= -1e-8 * (abs(a.lhs) + 1)
        assert a.Lambda == pytest.approx(1 - 0.25 * 1.44 / 3.2)
        ratios.append(a.ratio)
    assert np.all(np.isfinite(ratios))


def test_weighted_reduced_constant_case():
    fld = cm.make_symmetric_case_II(np.eye(2), 0.1 * np.eye(2), V0=2.0 * np.eye(2))
    w = cm.constant_potential_weight(2.0)
    u = fq.random_mixture(rng_of(27), 2, 2, complex_values=False)
    for p in (1.7, 2.0, 2.5):
        g = grid_for(u, 1 / 16)
        a = fq.weighted_estimate_audit(fld, w, u, p, fq.default_eps(u, g, p), g, c0=0.0, scriptC=0.1)
        assert a.psi2 == 1.0
        assert a.margin >= -1e-8 * abs(a.lhs)


def test_weighted_zero_function():
    fld, w = _weighted_setup()
    u = fq.gaussian([0.0, 0.0], 0.3, [1.0, 1.0]).scaled(0.0)
    a = fq.weighted_estimate_audit(fld, w, u, 2.0, 0.0, grid_for(u, 0.1), c0=0.0, scriptC=0.1)
    assert a.lhs == a.I1 == a.I2 == a.I3 == 0
    assert a.ratio is None


def test_weighted_rejects_complex_and_bad_lambda():
    fld, w = _weighted_setup()
    u = fq.random_mixture(rng_of(28), 2, 2, complex_values=True)
    with pytest.raises(ValueError, match="real-valued"):
        fq.weighted_estimate_audit(fld, w, u, 2.0, 0.0, grid_for(u, 1 / 16), c0=0.0, scriptC=0.1)
    big = cm.quadratic_potential_weight(gamma=5.0)
    with pytest.raises(ValueError, match="Lambda"):
        fq.weighted_estimate_audit(fld, big, u, 2.0, 0.0, grid_for(u, 1 / 16), c0=0.0, scriptC=0.1)


def test_eps_sweep():
    out = fq.eps_sweep(lambda e: e * 2, 1e-6)
    assert [x for x, _ in out] == [1e-6, 1e-7, 1e-8]
