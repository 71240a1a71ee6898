"""Exponent calculus for the dissipativity and domain results.

Interval endpoints are exact :class:`fractions.Fraction` values whenever the
inputs are ``int`` or ``Fraction``; otherwise they are floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np


def _num(x):
    """Keep ints and Fractions exact, turn everything else into float."""
    if isinstance(x, bool):
        raise TypeError("boolean is not a number here")
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    return float(x)


def _is_exact(*xs):
    return all(isinstance(x, Fraction) for x in xs)


@dataclass(frozen=True)
class Interval:
    lo: object
    hi: object
    closed_lo: bool = True
    closed_hi: bool = True

    def __contains__(self, p):
        above = p >= self.lo if self.closed_lo else p > self.lo
        below = p <= self.hi if self.closed_hi else p < self.hi
        return bool(above and below)

    @property
    def empty(self):
        if self.lo < self.hi:
            return False
        return not (self.lo == self.hi and self.closed_lo and self.closed_hi)

    def as_floats(self):
        return (float(self.lo), float(self.hi))

    def to_dict(self):
        return {
            "lo": str(self.lo) if isinstance(self.lo, Fraction) else float(self.lo),
            "hi": str(self.hi) if isinstance(self.hi, Fraction) else float(self.hi),
            "lo_float": float(self.lo),
            "hi_float": float(self.hi),
            "closed_lo": self.closed_lo,
            "closed_hi": self.closed_hi,
        }

    def __str__(self):
        left = "[" if self.closed_lo else "("
        right = "]" if self.closed_hi else ")"
        return f"{left}{self.lo}, {self.hi}{right}"


@dataclass
class ExponentReport:
    scriptC: object
    delta: object
    J: Interval
    Jtilde: Interval
    J_delta: Interval
    cond_p_window: Interval
    domain_window: Interval
    exact: bool
    # the uncorrected closed form of J_delta, kept for comparison only
    J_delta_as_printed: Interval | None = None

    def to_dict(self):
        out = {
            "scriptC": str(self.scriptC) if self.exact else float(self.scriptC),
            "delta": str(self.delta) if self.exact else float(self.delta),
            "exact": self.exact,
        }
        for name in ("J", "Jtilde", "J_delta", "cond_p_window", "domain_window", "J_delta_as_printed"):
            iv = getattr(self, name)
            out[name] = None if iv is None else iv.to_dict()
        return out


def _upper_excess(C, one):
    """Right endpoint offset ``p - 2`` of J for the given constant."""
    if C == 0:
        return math.inf
    return one / (C * C) if C < 1 else one / (2 * C - 1)


def J_interval(scriptC):
    """The closed interval J of exponents giving plain dissipativity."""
    C = _num(scriptC)
    one = Fraction(1) if _is_exact(C) else 1.0
    lo = 2 - one / (2 * C + 1)
    hi = 2 + _upper_excess(C, one)
    # p > 1 and p < inf are never attained
    return Interval(lo, hi, closed_lo=C > 0, closed_hi=C > 0)


def Jtilde_interval(scriptC):
    """J with the right endpoint removed."""
    J = J_interval(scriptC)
    return Interval(J.lo, J.hi, J.closed_lo, False)


def J_delta_interval(scriptC, delta):
    """Exponents for which dissipativity holds with gain ``delta``.

    Obtained from the quadratic condition
    ``(1 - delta) t^2 - |p-2| C t + (p-2)/4 >= 0`` for ``t >= 1/2``; the
    result is ``2 + (1 - delta) (J - 2)``.
    """
    C, dl = _num(scriptC), _num(delta)
    if not 0 <= dl < 1:
        raise ValueError(f"delta must lie in [0, 1), got {delta}")
    exact = _is_exact(C, dl)
    one = Fraction(1) if exact else 1.0
    if not exact:
        C, dl = float(C), float(dl)
    lo = 2 - (1 - dl) / (2 * C + 1)
    hi = 2 + (1 - dl) * _upper_excess(C, one)
    return Interval(lo, hi, closed_lo=C > 0, closed_hi=C > 0)


def J_delta_as_printed(scriptC, delta):
    """The uncorrected closed form of J_delta, branching at ``C = 1 - delta``.

    Its left endpoint ``2 - 1/(2C + 1 - delta)`` moves left as ``delta``
    grows, which contradicts the quadratic condition; see
    :func:`J_delta_interval` for the corrected set.
    """
    C, dl = _num(scriptC), _num(delta)
    exact = _is_exact(C, dl)
    one = Fraction(1) if exact else 1.0
    if not exact:
        C, dl = float(C), float(dl)
    if C <= 0:
        return None
    lo = 2 - one / (2 * C + 1 - dl)
    hi = 2 + (1 - dl) / (C * C) if C < 1 - dl else 2 + one / (2 * C - 1 + dl)
    return Interval(lo, hi)


def cond_p_window(scriptC):
    """Exponents with ``|1/p - 1/2| <= 1 / (2 (4C + 1))``; closed under p -> p'."""
    C = _num(scriptC)
    one = Fraction(1) if _is_exact(C) else 1.0
    r = one / (2 * (4 * C + 1))
    lo = 1 / (one / 2 + r)
    hi = math.inf if r == one / 2 else 1 / (one / 2 - r)
    return Interval(lo, hi, closed_lo=C > 0, closed_hi=C > 0)


def domain_window(scriptC):
    """Open interval ``(1 + 6C/(4C+1), 3/2 + 1/(4C))`` where Theta is positive.

    Empty for ``C >= 1/2``.
    """
    C = _num(scriptC)
    one = Fraction(1) if _is_exact(C) else 1.0
    lo = 1 + 6 * C / (4 * C + 1)
    hi = math.inf if C == 0 else one * 3 / 2 + one / (4 * C)
    return Interval(lo, hi, closed_lo=False, closed_hi=False)


def dissipativity_intervals(scriptC, delta=0):
    """Bundle every exponent interval for a given taming constant."""
    C, dl = _num(scriptC), _num(delta)
    if C < 0 or (isinstance(C, float) and not math.isfinite(C)):
        raise ValueError(f"scriptC must be finite and nonnegative, got {scriptC}")
    if not 0 <= dl < 1:
        raise ValueError(f"delta must lie in [0, 1), got {delta}")
    exact = _is_exact(C, dl)
    if not exact:
        C, dl = float(C), float(dl)
    return ExponentReport(
        scriptC=C,
        delta=dl,
        J=J_interval(C),
        Jtilde=Jtilde_interval(C),
        J_delta=J_delta_interval(C, dl),
        cond_p_window=cond_p_window(C),
        domain_window=domain_window(C),
        exact=exact,
        J_delta_as_printed=J_delta_as_printed(C, dl),
    )


def g_p(sigma, A, B, p, scriptC):
    """``(-1 + |p-2| C sigma) A + (|p-2| C / (4 sigma) - (p-2)/4) B``."""
    sigma = np.asarray(sigma, dtype=float)
    x = p - 2
    return (-1 + abs(x) * scriptC * sigma) * A + (abs(x) * scriptC / (4 * sigma) - x / 4) * B


def gp_min(A, B, p, scriptC):
    """Minimum of ``g_p`` over ``sigma > 0``.

    Returns ``(value, sigma_star)``; ``sigma_star`` is ``None`` when ``B = 0``
    (the infimum ``-A`` is approached as ``sigma -> 0`` and not attained
    unless ``p = 2``).
    """
    if not A > 0:
        raise ValueError(f"A must be positive, got {A}")
    if B < 0 or B > 4 * A:
        raise ValueError(f"need 0 <= B <= 4A, got A={A}, B={B}")
    if B == 0:
        return -float(A), None
    x = p - 2
    val = -A - x * B / 4 + abs(x) * scriptC * math.sqrt(A * B)
    return float(val), math.sqrt(B / (4 * A))


class DeltaResult(NamedTuple):
    delta: float
    status: str  # "ok", "capped" (p = 2) or "out_of_range"


def max_delta_for(p, scriptC):
    """Largest ``delta`` with ``p`` in ``J_delta``.

    The value is clipped at 0; at ``p = 2`` every ``delta < 1`` works and 1 is
    returned with status ``"capped"``.  Exponents outside J-tilde give
    ``(0.0, "out_of_range")``.
    """
    C = float(scriptC)
    p = float(p)
    if p not in Jtilde_interval(C) or p <= 1:
        return DeltaResult(0.0, "out_of_range")
    x = p - 2
    if x == 0:
        return DeltaResult(1.0, "capped")
    if x < 0:
        d = 1 - abs(x) * (2 * C + 1)
    elif C <= 1:
        d = 1 - x * C * C
    else:
        d = 1 - x * (2 * C - 1)
    return DeltaResult(float(min(max(d, 0.0), 1.0)), "ok")


def quadratic_margin(p, scriptC, delta, t):
    """``(1 - delta) t^2 - |p-2| C t + (p-2)/4``."""
    t = np.asarray(t, dtype=float)
    x = p - 2
    return (1 - delta) * t * t - abs(x) * scriptC * t + x / 4


@dataclass
class LambdaInputs:
    p: float
    scriptC: float
    c0: float
    gamma: float
    C_gamma: float
    v0: float

    def __post_init__(self):
        if not self.v0 > 0:
            raise ValueError(f"v0 must be positive, got {self.v0}")
        for name in ("scriptC", "c0", "gamma", "C_gamma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


def theta_pc(p, scriptC):
    """``Theta = p - 1 - 2C(5 - 2p)`` for ``p < 2`` and ``1 - 2C(2p - 3)`` otherwise."""
    if p < 2:
        return p - 1 - 2 * scriptC * (5 - 2 * p)
    return 1 - 2 * scriptC * (2 * p - 3)


class ThetaLambda(NamedTuple):
    Theta: float
    Lambda: float
    Lambda_alt: float


def theta_lambda(inputs: LambdaInputs, check_window=True):
    """Return ``(Theta, Lambda_p, Lambda_p via the v0-normalized form)``.

    ``Lambda_p = 1 - (p-1)^2 (gamma v0^{3/2} + C_gamma)^2 (1 + c0 + 2C)^2 / (4 v0^3 Theta)``.
    """
    p, C = inputs.p, inputs.scriptC
    if check_window:
        if not 0 < C < 0.5:
            raise ValueError(f"scriptC must lie in (0, 1/2), got {C}")
        if p not in domain_window(C):
            raise ValueError(f"p={p} is outside the window {domain_window(C)}")
    theta = theta_pc(p, C)
    if not theta > 0:
        raise ValueError(f"Theta must be positive, got {theta}")
    k = (1 + inputs.c0 + 2 * C) ** 2 * (p - 1) ** 2
    v0 = inputs.v0
    lam = 1 - k * (inputs.gamma * v0 ** 1.5 + inputs.C_gamma) ** 2 / (4 * v0 ** 3 * theta)
    lam_alt = 1 - k * (inputs.gamma + inputs.C_gamma * v0 ** -1.5) ** 2 / (4 * theta)
    if abs(lam - lam_alt) > 1e-12 * max(1.0, abs(lam)):
        raise ArithmeticError(f"the two Lambda forms disagree: {lam} vs {lam_alt}")
    return ThetaLambda(float(theta), float(lam), float(lam_alt))


@dataclass
class AppendixBProblem:
    a1: float
    a2: float
    b1: float
    b2: float
    c1: float
    c2: float
    d1: float
    d2: float
    e1: float

    def pairs(self):
        return np.array([[self.a1, self.a2], [self.b1, self.b2],
                         [self.c1, self.c2], [self.d1, self.d2]], dtype=float)

    @classmethod
    def from_constants(cls, p, c0, scriptC, gamma, C_gamma, v0):
        """Coefficients produced by the weighted estimate."""
        a1 = (p - 1) * (1 + c0) * gamma
        b1 = (p - 1) * (1 + c0) * C_gamma
        c1 = scriptC * (p - 1) * gamma
        d1 = scriptC * (p - 1) * C_gamma
        return cls(a1=a1, a2=a1 / 4, b1=b1, b2=b1 / (4 * v0 ** 3),
                   c1=c1, c2=c1, d1=d1, d2=d1 / v0 ** 3, e1=theta_pc(p, scriptC))

    def psi2(self, eps):
        eps = np.asarray(eps, dtype=float)
        y = self.pairs()[:, 1]
        keep = y > 0
        return 1.0 - np.sum(y[keep] / eps[..., keep], axis=-1)

    def psi1_tilde(self, eps):
        eps = np.asarray(eps, dtype=float)
        x = self.pairs()[:, 0]
        keep = x > 0
        return self.e1 - np.sum(x[keep] * eps[..., keep], axis=-1)


@dataclass
class AppendixBSolution:
    sup: float
    eps: np.ndarray
    slack: float
    degenerate: bool
    dropped: list = field(default_factory=list)


def appendixB_solve(problem: AppendixBProblem, allow_degenerate=False, rtol=1e-10):
    """Closed-form supremum of ``psi2`` over ``{psi1_tilde >= 0}``.

    ``sup = 1 - (sum_i sqrt(x_i y_i))^2 / e1`` and
    ``eps_i = e1 sqrt(y_i) / (sqrt(x_i) * sum)``.  Pairs with both
    coefficients zero are dropped when ``allow_degenerate`` is set; their
    ``eps`` entry is NaN.
    """
    P = problem.pairs()
    if not problem.e1 > 0:
        raise ValueError(f"e1 must be positive, got {problem.e1}")
    if np.any(P < 0):
        raise ValueError("coefficients must be nonnegative")
    zero = (P[:, 0] == 0) | (P[:, 1] == 0)
    vanished = (P[:, 0] == 0) & (P[:, 1] == 0)
    if np.any(zero) and not allow_degenerate:
        raise ValueError("zero coefficient pair; pass allow_degenerate=True for the limit path")
    if np.any(zero & ~vanished):
        # only one of x_i, y_i vanishes: the supremum is not attained
        raise ValueError("a pair with exactly one zero coefficient has no maximizer")
    keep = ~vanished
    if not np.any(keep):
        return AppendixBSolution(1.0, np.full(4, np.nan), float(problem.e1), True,
                                 [int(i) for i in np.flatnonzero(vanished)])
    x, y = P[keep, 0], P[keep, 1]
    S = float(np.sum(np.sqrt(x * y)))
    sup = 1.0 - S * S / problem.e1
    eps = np.full(4, np.nan)
    eps_k = problem.e1 * np.sqrt(y) / (np.sqrt(x) * S)
    idx = np.flatnonzero(keep)
    eps[idx] = eps_k
    # recover the first surviving epsilon from the active constraint
    i0 = idx[0]
    rest = float(np.sum(x[1:] * eps_k[1:]))
    slack = problem.e1 - rest
    if not slack > 0:
        raise ArithmeticError(f"active-constraint slack is not positive ({slack})")
    eps[i0] = slack / x[0]
    val = 1.0 - float(np.sum(y / eps[idx]))
    if abs(val - sup) > rtol * max(1.0, abs(sup)):
        raise ArithmeticError(f"psi2(eps*) = {val} differs from the closed form {sup}")
    return AppendixBSolution(float(sup), eps, float(slack), bool(np.any(vanished)),
                             [int(i) for i in np.flatnonzero(vanished)])


def appendixB_numeric(problem: AppendixBProblem, n_starts=8, seed=0):
    """Numerical maximization of ``psi2`` under ``psi1_tilde >= 0`` (test oracle).

    Works in log-variables with SLSQP from several random feasible starts.
    """
    from scipy.optimize import minimize

    P = problem.pairs()
    keep = ~((P[:, 0] == 0) & (P[:, 1] == 0))
    x, y = P[keep, 0], P[keep, 1]
    e1 = problem.e1
    rng = np.random.default_rng(seed)
    best = -np.inf
    for _ in range(n_starts):
        w = rng.dirichlet(np.ones(x.size)) * rng.uniform(0.2, 0.9)
        z0 = np.log(w * e1 / x)
        with np.errstate(over="ignore"):  # line-search probes can overshoot
            res = minimize(
                lambda z: float(np.sum(y * np.exp(-z))),
                z0,
                jac=lambda z: -y * np.exp(-z),
                constraints=[{"type": "ineq",
                              "fun": lambda z: e1 - float(np.sum(x * np.exp(z))),
                              "jac": lambda z: -x * np.exp(z)}],
                method="SLSQP",
                options={"ftol": 1e-15, "maxiter": 500},
            )
        z = res.x
        if e1 - np.sum(x * np.exp(z)) >= -1e-9 * e1:
            best = max(best, 1.0 - float(np.sum(y * np.exp(-z))))
    return best


def domain_norm_constants(c1, K_op, v0):
    """``M1 = 1 / (2 (1 + (c1 + 1) K))`` and ``M2 = 1 + c1 + 1/v0``."""
    if c1 < 0:
        raise ValueError(f"c1 must be nonnegative, got {c1}")
    if not K_op > 0:
        raise ValueError(f"K_op must be positive, got {K_op}")
    if not v0 > 0:
        raise ValueError(f"v0 must be positive, got {v0}")
    return 1.0 / (2 * (1 + (c1 + 1) * K_op)), 1.0 + c1 + 1.0 / v0


def psi1_value(p, c0, scriptC, gamma, C_gamma, eps):
    """Coefficient of the gradient integral in the weighted lower bound."""
    e0, e1, e2, e3 = (0.0 if not np.isfinite(e) else e for e in eps)
    return (1 - (p - 1) * (1 + c0) * (gamma * e0 + C_gamma * e1) - 2 * scriptC
            - 4 * scriptC * abs(p - 2) - scriptC * (p - 1) * (gamma * e2 + C_gamma * e3))


def psi2_value(p, c0, scriptC, gamma, C_gamma, v0, eps):
    """Coefficient of the potential integral in the weighted lower bound."""
    e0, e1, e2, e3 = eps
    out = 1.0

    def term(coef, e):
        if coef == 0:
            return 0.0
        return coef / e

    out -= (p - 1) * (1 + c0) * (term(gamma, e0) / 4 + term(C_gamma, e1) / (4 * v0 ** 3))
    out -= scriptC * (p - 1) * (term(gamma, e2) + term(C_gamma, e3) / v0 ** 3)
    return out
