from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semigroup_lab import constants_lab as cl

from oracles import gp_scan


# --- intervals --------------------------------------------------------------

def test_J_exact_values():
    J = cl.J_interval(1)
    assert (J.lo, J.hi) == (F(5, 3), F(3))
    J = cl.J_interval(F(1, 2))
    assert (J.lo, J.hi) == (F(3, 2), F(6))
    assert J.closed_lo and J.closed_hi


def test_cond_window_and_domain_window_exact():
    w = cl.cond_p_window(1)
    assert (w.lo, w.hi) == (F(5, 3), F(5, 2))
    dw = cl.domain_window(F(1, 4))
    assert (dw.lo, dw.hi) == (F(7, 4), F(5, 2))
    assert not dw.closed_lo and not dw.closed_hi
    assert F(7, 4) not in dw and F(2) in dw


def test_Jtilde_half_open():
    Jt = cl.Jtilde_interval(F(1, 2))
    assert F(6) not in Jt and F(3, 2) in Jt


def test_two_in_J_for_positive_C():
    for C in (F(1, 100), F(1, 2), F(1), F(7), 0.37, 12.5):
        assert 2 in cl.J_interval(C)


def test_float_inputs_give_floats():
    rep = cl.dissipativity_intervals(0.3)
    assert not rep.exact and isinstance(rep.J.lo, float)
    assert rep.J.lo == pytest.approx(2 - 1 / 1.6)


def test_zero_constant_gives_open_unbounded_J():
    J = cl.J_interval(0)
    assert J.lo == 1 and J.hi == float("inf")
    assert 1 not in J and 1.0001 in J and 1e6 in J


def test_dissipativity_intervals_rejects_bad_delta():
    with pytest.raises(ValueError):
        cl.dissipativity_intervals(F(1, 2), 1)
    with pytest.raises(ValueError):
        cl.dissipativity_intervals(-0.1)


@settings(max_examples=50, deadline=None)
@given(C=st.fractions(F(1, 50), F(5), max_denominator=50),
       d1=st.fractions(0, F(9, 10), max_denominator=20),
       d2=st.fractions(0, F(9, 10), max_denominator=20))
def test_J_delta_nesting(C, d1, d2):
    lo_d, hi_d = sorted((d1, d2))
    a = cl.J_delta_interval(C, lo_d)
    b = cl.J_delta_interval(C, hi_d)
    assert a.lo <= b.lo and b.hi <= a.hi
    J = cl.J_interval(C)
    assert J.lo <= b.lo and b.hi <= J.hi


def test_J_delta_matches_quadratic_condition():
    # p belongs to J_delta iff the quadratic is nonnegative on t >= 1/2
    t = np.linspace(0.5, 100, 200_001)
    rng = np.random.default_rng(0)
    for _ in range(100):
        C = rng.uniform(0.05, 3)
        delta = rng.uniform(0, 0.9)
        Jd = cl.J_delta_interval(C, delta)
        J = cl.J_interval(C)
        p = rng.uniform(float(J.lo) - 0.1, min(float(J.hi), 60) + 0.5)
        if p <= 1:
            continue
        ok = cl.quadratic_margin(p, C, delta, t).min() >= -1e-10
        near = min(abs(p - float(Jd.lo)), abs(p - float(Jd.hi))) < 1e-3
        if not near:
            assert ok == (p in Jd)


def test_J_delta_as_printed_differs_from_quadratic():
    # the printed left endpoint moves the wrong way as delta grows
    C, delta = F(1, 2), F(1, 2)
    printed = cl.J_delta_as_printed(C, delta)
    corrected = cl.J_delta_interval(C, delta)
    assert printed.lo < cl.J_interval(C).lo < corrected.lo
    p = float(printed.lo)
    assert cl.quadratic_margin(p, float(C), float(delta), np.linspace(0.5, 50, 10001)).min() < 0


@settings(max_examples=200, deadline=None)
@given(C=st.floats(0.01, 5), p=st.floats(1.001, 50))
def test_cond_window_conjugate_symmetry(C, p):
    w = cl.cond_p_window(C)
    q = p / (p - 1)
    lo, hi = float(w.lo), float(w.hi)
    # skip exponents within roundoff of an endpoint
    if min(abs(p - lo), abs(p - hi), abs(q - lo), abs(q - hi)) < 1e-9:
        return
    assert (p in w) == (q in w)


def test_cond_window_conjugate_symmetry_random_batch():
    rng = np.random.default_rng(1)
    C = F(3, 10)
    w = cl.cond_p_window(C)
    for _ in range(1000):
        p = F(int(rng.integers(1001, 10_000)), 1000)
        assert (p in w) == (p / (p - 1) in w)


def test_cond_window_inside_Jtilde():
    for C in (F(1, 10), F(1, 2), F(1), F(3)):
        w, Jt = cl.cond_p_window(C), cl.Jtilde_interval(C)
        assert w.lo in Jt and w.hi in Jt


# --- g_p --------------------------------------------------------------------

def test_gp_min_examples():
    assert cl.gp_min(1, 4, 2, 0.7)[0] == -1
    assert cl.gp_min(1, 0, 3.3, 0.7) == (-1.0, None)
    val, sigma = cl.gp_min(1, 4, 3, 0.5)
    assert val == pytest.approx(-1, abs=1e-15) and sigma == 1.0
    assert gp_scan(1, 4, 3, 0.5) == pytest.approx(-1, abs=1e-8)


def test_gp_min_rejects_bad_input():
    with pytest.raises(ValueError):
        cl.gp_min(0, 0, 2, 1)
    with pytest.raises(ValueError):
        cl.gp_min(1, 4.5, 2, 1)


def test_gp_min_against_scan():
    rng = np.random.default_rng(2)
    for _ in range(50):
        A = rng.uniform(0.1, 5)
        B = rng.uniform(0, 4 * A)
        p = rng.uniform(1.1, 8)
        C = rng.uniform(0, 2)
        val, sigma = cl.gp_min(A, B, p, C)
        assert val == pytest.approx(gp_scan(A, B, p, C), abs=1e-8)
        assert cl.g_p(sigma, A, B, p, C) == pytest.approx(val, abs=1e-12)


# --- max_delta_for ----------------------------------------------------------

def test_max_delta_examples():
    assert cl.max_delta_for(2, 0.3) == (1.0, "capped")
    assert cl.max_delta_for(6, 0.5).delta == pytest.approx(0.0, abs=1e-15)
    assert cl.max_delta_for(6 - 1e-9, 0.5).status == "ok"
    assert cl.max_delta_for(7, 0.5) == (0.0, "out_of_range")
    assert cl.max_delta_for(1.2, 0.5) == (0.0, "out_of_range")


def test_max_delta_quadratic_scan():
    t = np.linspace(0.5, 100, 400_001)
    rng = np.random.default_rng(3)
    for _ in range(100):
        C = rng.uniform(0.05, 3)
        Jt = cl.Jtilde_interval(C)
        p = rng.uniform(float(Jt.lo), min(float(Jt.hi), 40))
        delta, status = cl.max_delta_for(p, C)
        assert status == "ok"
        assert cl.quadratic_margin(p, C, delta, t).min() >= -1e-10
        # slightly more gain breaks the inequality
        if delta < 0.999:
            assert cl.quadratic_margin(p, C, min(delta + 1e-3, 1), t).min() < 0


# --- Theta and Lambda -------------------------------------------------------

def test_theta_lambda_examples():
    tl = cl.theta_lambda(cl.LambdaInputs(2, 0.1, 0, 0, 1, 1))
    assert tl.Theta == pytest.approx(0.8, abs=1e-15)
    assert tl.Lambda == pytest.approx(0.55, abs=1e-15)
    assert tl.Lambda_alt == pytest.approx(0.55, abs=1e-15)


def test_theta_lambda_errors():
    with pytest.raises(ValueError, match="outside"):
        cl.theta_lambda(cl.LambdaInputs(3, 0.25, 0, 1, 1, 1))
    with pytest.raises(ValueError):
        cl.theta_lambda(cl.LambdaInputs(2, 0.6, 0, 1, 1, 1))
    with pytest.raises(ValueError):
        cl.LambdaInputs(2, 0.1, 0, 1, 1, 0)


@settings(max_examples=200, deadline=None)
@given(C=st.floats(0.01, 0.49), f=st.floats(0.01, 0.99), c0=st.floats(0, 3),
       g=st.floats(0, 3), Cg=st.floats(0, 3), v0=st.floats(0.05, 20))
def test_lambda_forms_agree(C, f, c0, g, Cg, v0):
    w = cl.domain_window(C)
    p = float(w.lo) + f * (float(w.hi) - float(w.lo))
    tl = cl.theta_lambda(cl.LambdaInputs(p, C, c0, g, Cg, v0))
    assert abs(tl.Lambda - tl.Lambda_alt) <= 1e-12 * max(1, abs(tl.Lambda))


# --- epsilon optimization ---------------------------------------------------

def test_appendixB_all_ones():
    prob = cl.AppendixBProblem(1, 1, 1, 1, 1, 1, 1, 1, 16)
    sol = cl.appendixB_solve(prob)
    assert sol.sup == 0.0
    assert np.allclose(sol.eps, 4.0, rtol=0, atol=1e-15)
    assert sol.slack == 4.0
    assert prob.psi1_tilde(sol.eps) >= 0


def test_appendixB_random_against_optimizer():
    rng = np.random.default_rng(4)
    for i in range(20):
        prob = cl.AppendixBProblem(*rng.uniform(0.05, 2, 8), rng.uniform(1, 10))
        sol = cl.appendixB_solve(prob)
        num = cl.appendixB_numeric(prob, seed=i)
        assert abs(sol.sup - num) <= 1e-4 * max(1, abs(sol.sup))
        assert prob.psi1_tilde(sol.eps) >= -1e-12
        # no feasible point does better
        raw = rng.uniform(0, 1, (1000, 4))
        scale = rng.uniform(0, 1, (1000, 1)) * prob.e1 / (raw @ prob.pairs()[:, 0])[:, None]
        pts = raw * scale
        assert np.all(prob.psi1_tilde(pts) >= -1e-12)
        assert prob.psi2(pts).max() <= sol.sup + 1e-9


def test_appendixB_degenerate_C_gamma_zero():
    p, c0, C, gamma, v0 = 2.1, 0.2, 0.1, 1.5, 2.0
    prob = cl.AppendixBProblem.from_constants(p, c0, C, gamma, 0.0, v0)
    with pytest.raises(ValueError):
        cl.appendixB_solve(prob)
    sol = cl.appendixB_solve(prob, allow_degenerate=True)
    assert sol.degenerate and sol.dropped == [1, 3]
    assert np.isnan(sol.eps[1]) and np.isnan(sol.eps[3])
    a1, a2, c1, c2 = prob.a1, prob.a2, prob.c1, prob.c2
    expected = 1 - (np.sqrt(a1 * a2) + np.sqrt(c1 * c2)) ** 2 / prob.e1
    assert sol.sup == pytest.approx(expected, rel=1e-14)
    assert cl.appendixB_numeric(prob) == pytest.approx(expected, rel=1e-4)


def test_appendixB_rejects_half_zero_pair():
    prob = cl.AppendixBProblem(1, 0, 1, 1, 1, 1, 1, 1, 16)
    with pytest.raises(ValueError):
        cl.appendixB_solve(prob, allow_degenerate=True)


def test_appendixB_matches_lambda():
    # the optimum of the weighted estimate reproduces Lambda_p
    p, C, c0, g, Cg, v0 = 2.2, 0.1, 0.3, 0.4, 0.2, 1.5
    prob = cl.AppendixBProblem.from_constants(p, c0, C, g, Cg, v0)
    sol = cl.appendixB_solve(prob)
    lam = cl.theta_lambda(cl.LambdaInputs(p, C, c0, g, Cg, v0)).Lambda
    assert sol.sup == pytest.approx(lam, rel=1e-12)
    psi1 = cl.psi1_value(p, c0, C, g, Cg, sol.eps)
    assert psi1 == pytest.approx(0.0, abs=1e-12)
    assert cl.psi2_value(p, c0, C, g, Cg, v0, sol.eps) == pytest.approx(sol.sup, rel=1e-12)


# --- domain norm constants --------------------------------------------------

def test_domain_norm_constants():
    M1, _ = cl.domain_norm_constants(0, 1, 1)
    assert M1 == 0.25
    _, M2 = cl.domain_norm_constants(1, 3.0, 1)
    assert M2 == 3
    c1, K, v0 = 0.7, 2.5, 0.4
    M1, M2 = cl.domain_norm_constants(c1, K, v0)
    assert M1 == pytest.approx(1 / (2 + 2 * K + 2 * c1 * K)) and M2 == pytest.approx(1 + c1 + 2.5)
    for bad in ((-1, 1, 1), (0, 0, 1), (0, 1, 0)):
        with pytest.raises(ValueError):
            cl.domain_norm_constants(*bad)
