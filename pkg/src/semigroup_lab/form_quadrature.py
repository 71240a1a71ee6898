"""Quadrature checks of the integral identities and inequalities.

Test functions are smooth, numerically compactly supported maps
``u: R^d -> C^m`` with exact gradients and Hessians.  Integrals are computed
with a tensor midpoint (default) or trapezoid rule over a box containing the
support.  Node loops are chunked; chunk partial sums are reduced in a fixed
order so results do not depend on the thread count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._parallel import ordered_map
from .coefficient_models import CoefficientField, WeightData
from .constants_lab import (AppendixBProblem, Jtilde_interval, appendixB_solve,
                            psi1_value, psi2_value, theta_pc)

# where |u| falls below this fraction of its peak the singular weights are cut to zero
MODULUS_FLOOR = 1e-60


# ---------------------------------------------------------------------------
# test functions

@dataclass
class TestFunction:
    """``u`` with derivatives; ``value -> (n, m)``, ``grad -> (n, d, m)``, ``hess -> (n, d, d, m)``."""

    __test__ = False  # not a pytest class

    d: int
    m: int
    value: Callable
    grad: Callable
    hess: Callable
    support_lo: np.ndarray
    support_hi: np.ndarray
    label: str = ""

    def shifted(self, shift):
        """``u(x - shift)``."""
        s = np.asarray(shift, dtype=float)
        return TestFunction(self.d, self.m,
                            lambda X: self.value(X - s),
                            lambda X: self.grad(X - s),
                            lambda X: self.hess(X - s),
                            self.support_lo + s, self.support_hi + s, self.label + "+shift")

    def scaled(self, c):
        return TestFunction(self.d, self.m,
                            lambda X: c * self.value(X),
                            lambda X: c * self.grad(X),
                            lambda X: c * self.hess(X),
                            self.support_lo, self.support_hi, self.label)


def _profile_function(d, amplitude, prof, support, label):
    amp = np.asarray(amplitude, dtype=complex)

    def value(X):
        g, _, _ = prof(np.asarray(X, dtype=float))
        return g[:, None] * amp

    def grad(X):
        _, dg, _ = prof(np.asarray(X, dtype=float))
        return dg[:, :, None] * amp

    def hess(X):
        _, _, hg = prof(np.asarray(X, dtype=float))
        return hg[:, :, :, None] * amp

    lo, hi = support
    return TestFunction(d, amp.size, value, grad, hess, np.asarray(lo, float), np.asarray(hi, float), label)


def gaussian(center, width, amplitude):
    """``amplitude * exp(-|x - c|^2 / (2 width^2))``; support declared as ``c +- 9 width``."""
    c = np.asarray(center, dtype=float)
    s2 = float(width) ** 2
    d = c.size

    def prof(X):
        y = X - c
        g = np.exp(-np.sum(y * y, axis=1) / (2 * s2))
        dg = -y / s2 * g[:, None]
        hg = (y[:, :, None] * y[:, None, :] / s2 ** 2 - np.eye(d) / s2) * g[:, None, None]
        return g, dg, hg

    r = 9.0 * float(width)
    return _profile_function(d, amplitude, prof, (c - r, c + r), "gaussian")


def poly_bump(center, radius, amplitude):
    """``amplitude * (1 - |x - c|^2 / R^2)^3`` inside the ball, zero outside (C^2)."""
    c = np.asarray(center, dtype=float)
    R2 = float(radius) ** 2
    d = c.size

    def prof(X):
        y = X - c
        s = np.maximum(1.0 - np.sum(y * y, axis=1) / R2, 0.0)
        g = s ** 3
        dg = -6.0 * (s ** 2)[:, None] * y / R2
        hg = (24.0 * s[:, None, None] * y[:, :, None] * y[:, None, :] / R2 ** 2
              - 6.0 * (s ** 2)[:, None, None] * np.eye(d) / R2)
        return g, dg, hg

    r = float(radius)
    return _profile_function(d, amplitude, prof, (c - r, c + r), "poly_bump")


def mixture(parts, label="mixture"):
    parts = list(parts)
    d, m = parts[0].d, parts[0].m
    lo = np.min([p.support_lo for p in parts], axis=0)
    hi = np.max([p.support_hi for p in parts], axis=0)
    return TestFunction(d, m,
                        lambda X: sum(p.value(X) for p in parts),
                        lambda X: sum(p.grad(X) for p in parts),
                        lambda X: sum(p.hess(X) for p in parts),
                        lo, hi, label)


def random_mixture(rng, d, m, n_terms=2, center_box=0.5, widths=(0.2, 0.35),
                   kind="gaussian", complex_values=True):
    """A random sum of Gaussians (or polynomial bumps) with random amplitudes."""
    parts = []
    for _ in range(n_terms):
        c = rng.uniform(-center_box, center_box, d)
        w = rng.uniform(*widths)
        amp = rng.standard_normal(m)
        if complex_values:
            amp = amp + 1j * rng.standard_normal(m)
        if kind == "gaussian":
            parts.append(gaussian(c, w, amp))
        else:
            parts.append(poly_bump(c, 3 * w, amp))
    return mixture(parts, f"random-{kind}")


# ---------------------------------------------------------------------------
# grid

@dataclass
class QuadratureGrid:
    lo: np.ndarray
    hi: np.ndarray
    h: float
    rule: str = "midpoint"
    counts: tuple = field(init=False)
    spacing: np.ndarray = field(init=False)

    def __post_init__(self):
        self.lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if not self.h > 0:
            raise ValueError("grid spacing must be positive")
        if not np.all(self.hi > self.lo):
            raise ValueError("grid box must be nonempty")
        if self.rule not in ("midpoint", "trapezoid"):
            raise ValueError(f"unknown rule {self.rule!r}")
        L = self.hi - self.lo
        self.counts = tuple(int(max(1, round(x / self.h))) for x in L)
        self.spacing = L / np.array(self.counts)

    @classmethod
    def covering(cls, u: TestFunction, h, rule="midpoint", pad=0.0):
        return cls(u.support_lo - pad, u.support_hi + pad, h, rule)

    @property
    def d(self):
        return self.lo.size

    def axes(self):
        out = []
        for a, n, dx in zip(self.lo, self.counts, self.spacing):
            if self.rule == "midpoint":
                out.append((a + dx * (np.arange(n) + 0.5), np.full(n, dx)))
            else:
                wts = np.full(n + 1, dx)
                wts[[0, -1]] = dx / 2
                out.append((a + dx * np.arange(n + 1), wts))
        return out

    @property
    def n_nodes(self):
        extra = 0 if self.rule == "midpoint" else 1
        return int(np.prod([n + extra for n in self.counts]))

    def node_chunks(self, size=16384):
        """Yield ``(X, weights)`` blocks in a fixed order."""
        axes = self.axes()
        shape = tuple(len(a[0]) for a in axes)
        total = int(np.prod(shape))
        for start in range(0, total, size):
            idx = np.unravel_index(np.arange(start, min(start + size, total)), shape)
            X = np.stack([axes[l][0][idx[l]] for l in range(self.d)], axis=1)
            W = np.prod([axes[l][1][idx[l]] for l in range(self.d)], axis=0)
            yield X, W

    def check_covers(self, u: TestFunction):
        if np.any(self.lo > u.support_lo + 1e-12) or np.any(self.hi < u.support_hi - 1e-12):
            raise ValueError("quadrature box does not contain the test-function support")
        width = float(np.min(u.support_hi - u.support_lo))
        if np.max(self.spacing) > width / 8:
            raise ValueError(f"grid spacing {np.max(self.spacing):.3g} exceeds support width/8 = {width / 8:.3g}")


# ---------------------------------------------------------------------------
# pointwise quantities

def regularized_modulus(u_val, eps, p):
    """``(|u|^2 + eps)^{1/2}`` for ``p < 2``, plain ``|u|`` otherwise (last axis = components)."""
    u = np.asarray(u_val)
    r2 = np.sum(np.abs(u) ** 2, axis=-1)
    if p < 2:
        return np.sqrt(r2 + eps)
    return np.sqrt(r2)


def default_eps(u: TestFunction, grid: QuadratureGrid, p):
    """``1e-6 * (sup |u|)^2`` for ``p < 2`` and 0 otherwise."""
    if p >= 2:
        return 0.0
    return 1e-6 * sup_modulus(u, grid) ** 2


def sup_modulus(u: TestFunction, grid: QuadratureGrid):
    return max(float(np.max(np.sqrt(np.sum(np.abs(u.value(X)) ** 2, axis=1))))
               for X, _ in grid.node_chunks())


def _weights(u_val, eps, p, peak):
    """``|u|_eps^{p-2}`` and ``|u|_eps^{p-4}``, cut to zero where ``|u|`` underflows (p >= 2)."""
    r = regularized_modulus(u_val, eps, p)
    if p < 2:
        if not eps > 0:
            raise ValueError("eps must be positive when p < 2")
        return r ** (p - 2), r ** (p - 4)
    alive = r > MODULUS_FLOOR * peak
    safe = np.where(alive, r, 1.0)
    return np.where(alive, safe ** (p - 2), 0.0), np.where(alive, safe ** (p - 4), 0.0)


def apply_operator(fld: CoefficientField, u: TestFunction, X, allow_fd=True):
    """``sum Q^{hk} D_hk u + sum (D_h Q^{hk}) D_k u - V u`` at points ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Qf = fld.full_blocks(X)
    dQ = fld.full_block_grads(X, allow_fd)
    V = fld.eval_v(X)
    out = np.einsum("nhkij,nhkj->ni", Qf, u.hess(X))
    out += np.einsum("nhhkij,nkj->ni", dQ, u.grad(X))
    out -= np.einsum("nij,nj->ni", V, u.value(X))
    return out


def dmod(u_val, u_grad):
    """``D_h |u|^2 = 2 Re sum_i conj(u_i) D_h u_i`` as ``(n, d)``."""
    return 2.0 * np.real(np.einsum("ni,nhi->nh", np.conj(u_val), u_grad))


def pointwise_checks(fld: CoefficientField, u: TestFunction, X, fd_step=1e-6):
    """Node-wise consistency of ``D|u|^2`` and the bound ``(Q g, g) <= 4 |u|^2 sum Re(Q Du_i, Du_i)``.

    Returns ``(dmod_rel_err, dis_margin_min)``; the first compares the
    formula with a central difference of ``|u|^2``, the second is the smallest
    relative margin.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    uv, ug = u.value(X), u.grad(X)
    g = dmod(uv, ug)
    fd = np.empty_like(g)
    for l in range(u.d):
        e = np.zeros(u.d)
        e[l] = fd_step
        fp = np.sum(np.abs(u.value(X + e)) ** 2, axis=1)
        fm = np.sum(np.abs(u.value(X - e)) ** 2, axis=1)
        fd[:, l] = (fp - fm) / (2 * fd_step)
    scale = np.max(np.abs(g)) + 1e-300
    rel = float(np.max(np.abs(g - fd)) / scale)
    Q = fld.eval_q(X)
    lhs = np.einsum("nhk,nk,nh->n", Q, g, g)
    gradQ = np.real(np.einsum("nhk,nki,nhi->n", Q, ug, np.conj(ug)))
    rhs = 4.0 * np.sum(np.abs(uv) ** 2, axis=1) * gradQ
    margin = (rhs - lhs) / (np.max(np.abs(rhs)) + 1e-300)
    return rel, float(np.min(margin))


# ---------------------------------------------------------------------------
# integrals

_KEYS = ("lhs", "grad_term", "A_term", "cross_term", "V_term", "A_cross_term",
         "A_quant", "B_quant", "norm_p", "Au_norm_p")


def _integrands(fld, u, X, p, eps, peak, allow_fd):
    uv, ug = u.value(X), u.grad(X)
    Au = apply_operator(fld, u, X, allow_fd)
    w, w4 = _weights(uv, eps, p, peak)
    q = fld.eval_q(X)
    a = fld.eval_a(X)
    V = fld.eval_v(X)
    cu, cg = np.conj(uv), np.conj(ug)
    g2 = dmod(uv, ug)
    c = (p - 2) / 2
    grad = np.einsum("nhk,nki,nhi->n", q, ug, cg)
    return {
        "lhs": np.einsum("ni,ni->n", Au, cu) * w,
        "grad_term": grad * w,
        "A_term": np.einsum("nhkij,nkj,nhi->n", a, ug, cg) * w,
        "cross_term": c * np.einsum("nhk,nki,nh,ni->n", q, ug, g2, cu) * w4,
        "V_term": np.einsum("nij,nj,ni->n", V, uv, cu) * w,
        "A_cross_term": c * np.einsum("nhkij,nkj,ni,nh->n", a, ug, cu, g2) * w4,
        "A_quant": grad.real * w,
        "B_quant": np.einsum("nhk,nk,nh->n", q, g2, g2) * w4,
        "norm_p": np.sum(np.abs(uv) ** 2, axis=1) ** (p / 2),
        "Au_norm_p": np.sum(np.abs(Au) ** 2, axis=1) ** (p / 2),
    }


def _reduce(fn, grid, threads):
    chunks = list(grid.node_chunks())
    parts = ordered_map(lambda c: {k: np.sum(v * c[1]) for k, v in fn(c[0]).items()}, chunks, threads)
    keys = parts[0].keys()
    return {k: complex(np.sum([pt[k] for pt in parts])) for k in keys}


@dataclass
class FormBreakdown:
    lhs: complex
    grad_term: complex
    A_term: complex
    cross_term: complex
    V_term: complex
    A_cross_term: complex
    A_quant: float
    B_quant: float
    norm_p: float
    Au_norm_p: float
    p: float
    eps: float

    @property
    def rhs(self):
        return -(self.grad_term + self.A_term + self.cross_term + self.V_term + self.A_cross_term)

    @property
    def scale(self):
        return (abs(self.grad_term) + abs(self.A_term) + abs(self.cross_term)
                + abs(self.V_term) + abs(self.A_cross_term))

    def to_dict(self):
        out = {}
        for k in _KEYS:
            v = getattr(self, k)
            if isinstance(v, complex):
                out[k] = [v.real, v.imag]
            else:
                out[k] = float(v)
        out.update(p=self.p, eps=self.eps)
        return out


def form_breakdown(fld, u, p, eps, grid, allow_fd=True, threads=None, check=True):
    """Every integral of the expansion of ``int (Au, u |u|_eps^{p-2})``."""
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")
    if p < 2 and not eps > 0:
        raise ValueError("eps must be positive when p < 2")
    if check:
        grid.check_covers(u)
    peak = sup_modulus(u, grid)
    if peak == 0:
        zero = {k: 0j for k in _KEYS}
    else:
        zero = _reduce(lambda X: _integrands(fld, u, X, p, eps, peak, allow_fd), grid, threads)
    real_keys = ("A_quant", "B_quant", "norm_p", "Au_norm_p")
    vals = {k: (zero[k].real if k in real_keys else zero[k]) for k in _KEYS}
    return FormBreakdown(p=float(p), eps=float(eps), **vals)


@dataclass
class IdentityResult:
    residual: float
    relative: float
    breakdown: FormBreakdown


def dissipation_identity_residual(fld, u, p, eps, grid, **kw):
    """``|LHS - RHS|`` of the expansion identity (real and imaginary parts together)."""
    bd = form_breakdown(fld, u, p, eps, grid, **kw)
    res = abs(bd.lhs - bd.rhs)
    return IdentityResult(float(res), float(res / bd.scale) if bd.scale > 0 else 0.0, bd)


@dataclass
class MarginResult:
    margin: float
    delta: float
    re_lhs: float
    A_quant: float
    B_quant: float
    outside_theory: bool
    breakdown: FormBreakdown


def dissipativity_margin(fld, u, p, eps, delta, grid, scriptC=None, **kw):
    """``-delta * A - Re int (Au, u |u|_eps^{p-2})``; nonnegative for p in J tilde and delta up to max_delta_for.

    ``outside_theory`` is set when ``p`` is not in J-tilde for ``scriptC``
    (defaults to the field's claimed constant).
    """
    C = fld.metadata.get("claimed_scriptC") if scriptC is None else scriptC
    outside = C is None or p not in Jtilde_interval(float(C))
    bd = form_breakdown(fld, u, p, eps, grid, **kw)
    margin = -delta * bd.A_quant - bd.lhs.real
    return MarginResult(float(margin), float(delta), float(bd.lhs.real), bd.A_quant, bd.B_quant,
                        bool(outside), bd)


@dataclass
class AnalyticityResult:
    num: float
    den: float
    ratio: float
    budget: dict
    breakdown: FormBreakdown


def analyticity_budget_constant(p, c0, scriptC):
    """Gradient coefficient of the sector bound: ``c0 + C + 5|p-2|/2 ((1+c0)/2 + C)``."""
    return c0 + scriptC + 2.5 * abs(p - 2) * ((1 + c0) / 2 + scriptC)


def analyticity_ratio(fld, u, p, eps, grid, c0=None, scriptC=None, c_V=None, **kw):
    """``|Im I| / (-Re I)`` for ``I = int (Au, u |u|_eps^{p-2})`` plus a budget diagnostic."""
    bd = form_breakdown(fld, u, p, eps, grid, **kw)
    num = abs(bd.lhs.imag)
    den = -bd.lhs.real
    if den > 0:
        ratio = num / den
    else:
        ratio = 0.0 if num == 0 else float("inf")
    c0 = fld.metadata.get("claimed_c0") if c0 is None else c0
    C = fld.metadata.get("claimed_scriptC") if scriptC is None else scriptC
    budget = {}
    if c0 is not None and C is not None:
        C1 = analyticity_budget_constant(p, c0, C)
        budget = {"C1": C1, "gradient_part": C1 * bd.A_quant}
        if c_V is not None:
            budget["potential_part"] = c_V * bd.V_term.real
            budget["total"] = budget["gradient_part"] + budget["potential_part"]
            budget["within"] = bool(num <= budget["total"] * (1 + 1e-9) + 1e-12 * bd.scale)
    return AnalyticityResult(float(num), float(den), float(ratio), budget, bd)


# ---------------------------------------------------------------------------
# weighted estimate

@dataclass
class WeightedAudit:
    lhs: float
    I1: float
    I2: float
    I3: float
    psi1: float
    psi2: float
    lower_bound: float
    margin: float
    identity_residual: float
    vu_norm: float
    Au_norm: float
    ratio: float | None
    eps_star: list
    Lambda: float
    terms: dict = field(default_factory=dict)

    def to_dict(self):
        out = {k: getattr(self, k) for k in ("lhs", "I1", "I2", "I3", "psi1", "psi2", "lower_bound",
                                             "margin", "identity_residual", "vu_norm", "Au_norm",
                                             "ratio", "Lambda")}
        out["eps_star"] = [None if not np.isfinite(e) else float(e) for e in self.eps_star]
        out["terms"] = dict(self.terms)
        return out


def weighted_estimate_audit(fld, weights: WeightData, u, p, eps, grid, c0=None, scriptC=None,
                            allow_fd=True, threads=None):
    """Audit the weighted lower bound for real-valued ``u``.

    Computes ``int (-Au, u) |u|_eps^{p-2} v^{p-1}`` and compares it with
    ``psi1 I1 + (p-2)/4 I2 + psi2 I3`` at the optimal epsilons.  The seven-term
    expansion of the left side is checked as well.  Reports the measured
    ratio ``||v u||_p / ||A u||_p``.
    """
    if weights.v is None:
        raise ValueError("weights.v is required")
    c0 = fld.metadata.get("claimed_c0", 0.0) if c0 is None else c0
    C = fld.metadata.get("claimed_scriptC") if scriptC is None else scriptC
    if C is None:
        raise ValueError("scriptC must be given or claimed by the field")
    theta = theta_pc(p, C)
    prob = AppendixBProblem.from_constants(p, c0, C, weights.gamma, weights.C_gamma, weights.v0)
    k = (1 + c0 + 2 * C) ** 2 * (p - 1) ** 2
    Lam = 1 - k * (weights.gamma * weights.v0 ** 1.5 + weights.C_gamma) ** 2 / (4 * weights.v0 ** 3 * theta) \
        if theta > 0 else -np.inf
    if not Lam > 0:
        raise ValueError(f"Lambda_p = {Lam} is not positive; the weighted estimate does not apply")
    sol = appendixB_solve(prob, allow_degenerate=True)
    eps_star = sol.eps
    psi1 = psi1_value(p, c0, C, weights.gamma, weights.C_gamma, eps_star)
    psi2 = psi2_value(p, c0, C, weights.gamma, weights.C_gamma, weights.v0, eps_star)

    grid.check_covers(u)
    peak = sup_modulus(u, grid)
    zero_u = peak == 0
    vfun, vgrad = weights.v.value, weights.v.grad

    def integrands(X):
        uv = u.value(X)
        if np.max(np.abs(uv.imag)) > 0:
            raise ValueError("the weighted audit needs a real-valued test function")
        uv, ug = uv.real, u.grad(X).real
        Au = apply_operator(fld, u, X, allow_fd).real
        w, w4 = _weights(uv, eps, p, peak)
        v = np.asarray(vfun(X), dtype=float)
        gv = np.asarray(vgrad(X), dtype=float)
        vp1, vp2 = v ** (p - 1), v ** (p - 2)
        q = fld.eval_q(X)
        a = fld.eval_a(X)
        V = fld.eval_v(X)
        g2 = dmod(uv, ug)
        gradQ = np.einsum("nhk,nki,nhi->n", q, ug, ug)
        Qgg = np.einsum("nhk,nk,nh->n", q, g2, g2)
        Adu_u = np.einsum("nhkij,nkj,ni->nh", a, ug, uv)
        r2 = np.sum(uv * uv, axis=1)
        return {
            "lhs": -np.einsum("ni,ni->n", Au, uv) * w * vp1,
            "F1": gradQ * w * vp1,
            "F2": (p - 2) / 4 * Qgg * w4 * vp1,
            "F3": (p - 1) / 2 * np.einsum("nhk,nk,nh->n", q, g2, gv) * w * vp2,
            "F4": np.einsum("nhkij,nkj,nhi->n", a, ug, ug) * w * vp1,
            "F5": (p - 2) / 2 * np.einsum("nh,nh->n", Adu_u, g2) * w4 * vp1,
            "F6": (p - 1) * np.einsum("nh,nh->n", Adu_u, gv) * w * vp2,
            "F7": np.einsum("nij,nj,ni->n", V, uv, uv) * w * vp1,
            "I1": gradQ * w * vp1,
            "I2": Qgg * w4 * vp1,
            "I3": r2 * w * v ** p,
            "vu": (np.sqrt(r2) * v) ** p,
            "Au": np.sum(Au * Au, axis=1) ** (p / 2),
        }

    if zero_u:
        tot = {k: 0.0 for k in ("lhs", "F1", "F2", "F3", "F4", "F5", "F6", "F7", "I1", "I2", "I3", "vu", "Au")}
    else:
        tot = {k: v.real for k, v in _reduce(integrands, grid, threads).items()}
    expansion = sum(tot[f"F{i}"] for i in range(1, 8))
    lower = psi1 * tot["I1"] + (p - 2) / 4 * tot["I2"] + psi2 * tot["I3"]
    vu_norm = tot["vu"] ** (1 / p)
    Au_norm = tot["Au"] ** (1 / p)
    ratio = None if Au_norm == 0 else vu_norm / Au_norm
    return WeightedAudit(
        lhs=tot["lhs"], I1=tot["I1"], I2=tot["I2"], I3=tot["I3"], psi1=float(psi1), psi2=float(psi2),
        lower_bound=float(lower), margin=float(tot["lhs"] - lower),
        identity_residual=float(abs(tot["lhs"] - expansion)),
        vu_norm=float(vu_norm), Au_norm=float(Au_norm), ratio=ratio,
        eps_star=list(eps_star), Lambda=float(Lam),
        terms={f"F{i}": float(tot[f"F{i}"]) for i in range(1, 8)},
    )


def eps_sweep(fn, eps0, factors=(1.0, 0.1, 0.01)):
    """Evaluate ``fn(eps)`` on a short geometric sweep (sensitivity report)."""
    return [(eps0 * f, fn(eps0 * f)) for f in factors]
