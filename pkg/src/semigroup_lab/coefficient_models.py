"""Coefficient families, sample plans and sample-based certification.

All field callables are vectorized: they take an ``(n, d)`` array of points
and return stacked matrices

* ``q``       -> ``(n, d, d)``
* ``a``       -> ``(n, d, d, m, m)``
* ``v_mat``   -> ``(n, m, m)``
* ``grad_q``  -> ``(n, d, d, d)`` with ``[:, l, h, k] = D_l q_hk``
* ``grad_a``  -> ``(n, d, d, d, m, m)`` with ``[:, l, h, k] = D_l A^{hk}``

Certification samples a box; it is evidence, never a proof.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._parallel import ordered_map
from .matrix_forms import PD_RTOL, big_matrix, scriptC_batch

SAMPLING_NOTE = ("certification is sample-based on a bounded box; it is not a proof "
                 "and cannot tell local from global boundedness")


class PreconditionError(ValueError):
    """An input violates a documented precondition; carries a witness."""

    def __init__(self, message, witness=None, value=None):
        self.witness = None if witness is None else np.asarray(witness, dtype=float).tolist()
        self.value = None if value is None else float(value)
        extra = ""
        if self.witness is not None:
            extra = f" at x={self.witness}"
        if self.value is not None:
            extra += f" (value {self.value:.6g})"
        super().__init__(message + extra)


class FieldEvaluationError(RuntimeError):
    """A coefficient callable failed or returned bad data at some point."""


def _points(x, d):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != d:
        raise ValueError(f"points must have shape (n, {d}), got {x.shape}")
    return x


def _central_fd(fun, x, h_fd):
    """Central differences of a stacked matrix function; returns ``(n, d, ...)``."""
    n, d = x.shape
    step = h_fd * (1.0 + np.linalg.norm(x, axis=1))
    out = []
    for l in range(d):
        e = np.zeros(d)
        e[l] = 1.0
        xp = x + step[:, None] * e
        xm = x - step[:, None] * e
        diff = (fun(xp) - fun(xm))
        out.append(diff / (2 * step).reshape((n,) + (1,) * (diff.ndim - 1)))
    return np.stack(out, axis=1)


@dataclass
class CoefficientField:
    """A coefficient family ``Q(x)``, ``A^{hk}(x)``, ``V(x)`` over R^d."""

    d: int
    m: int
    q: Callable
    a: Callable
    v_mat: Callable
    grad_q: Callable | None = None
    grad_a: Callable | None = None
    metadata: dict = field(default_factory=dict)
    name: str = "custom"
    h_fd: float = 1e-5

    def _eval(self, fun, x, shape, what):
        x = _points(x, self.d)
        try:
            out = np.asarray(fun(x), dtype=float)
        except Exception as exc:  # noqa: BLE001 - re-raised with location
            raise FieldEvaluationError(f"{what} failed on points starting at {x[0].tolist()}: {exc}") from exc
        want = (x.shape[0],) + shape
        if out.shape != want:
            raise FieldEvaluationError(f"{what} returned shape {out.shape}, expected {want}")
        bad = ~np.isfinite(out.reshape(x.shape[0], -1)).all(axis=1)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise FieldEvaluationError(f"{what} is not finite at x={x[i].tolist()}")
        return out

    def eval_q(self, x):
        return self._eval(self.q, x, (self.d, self.d), "q")

    def eval_a(self, x):
        return self._eval(self.a, x, (self.d, self.d, self.m, self.m), "a")

    def eval_v(self, x):
        return self._eval(self.v_mat, x, (self.m, self.m), "v_mat")

    @property
    def uses_fd(self):
        return self.grad_q is None or self.grad_a is None

    def eval_grad_q(self, x, allow_fd=True):
        d = self.d
        if self.grad_q is not None:
            return self._eval(self.grad_q, x, (d, d, d), "grad_q")
        if not allow_fd:
            raise FieldEvaluationError("grad_q unavailable and finite differences disabled")
        return _central_fd(self.eval_q, _points(x, d), self.h_fd)

    def eval_grad_a(self, x, allow_fd=True):
        d, m = self.d, self.m
        if self.grad_a is not None:
            return self._eval(self.grad_a, x, (d, d, d, m, m), "grad_a")
        if not allow_fd:
            raise FieldEvaluationError("grad_a unavailable and finite differences disabled")
        return _central_fd(self.eval_a, _points(x, d), self.h_fd)

    def full_blocks(self, x):
        """``Q^{hk} = q_hk I + A^{hk}`` as ``(n, d, d, m, m)``."""
        return self.eval_q(x)[..., None, None] * np.eye(self.m) + self.eval_a(x)

    def full_block_grads(self, x, allow_fd=True):
        """``D_l Q^{hk}`` as ``(n, d, d, d, m, m)``."""
        gq = self.eval_grad_q(x, allow_fd)
        ga = self.eval_grad_a(x, allow_fd)
        return gq[..., None, None] * np.eye(self.m) + ga

    def without_gradients(self):
        """Same field with analytic gradients dropped (finite-difference path)."""
        return CoefficientField(self.d, self.m, self.q, self.a, self.v_mat, None, None,
                                dict(self.metadata), self.name + "-fd", self.h_fd)


@dataclass
class SamplePlan:
    """Points in an axis-aligned box: a uniform grid or seeded random draws."""

    lo: np.ndarray
    hi: np.ndarray
    mode: str = "grid"
    resolution: tuple | int = 9
    count: int = 1000
    seed: int = 0

    def __post_init__(self):
        self.lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise ValueError("box corners must be 1-d arrays of equal length")
        if not np.all(self.hi > self.lo):
            raise ValueError("box must be nonempty (hi > lo on every axis)")
        if self.mode not in ("grid", "random"):
            raise ValueError(f"unknown sample mode {self.mode!r}")
        if self.mode == "grid":
            res = np.broadcast_to(np.asarray(self.resolution, dtype=int), self.lo.shape)
            if np.any(res < 1):
                raise ValueError("grid resolution must be positive")
            self.resolution = tuple(int(r) for r in res)
        elif self.count < 1:
            raise ValueError("sample count must be positive")

    @property
    def d(self):
        return self.lo.size

    def points(self):
        if self.mode == "random":
            rng = np.random.default_rng(self.seed)
            return self.lo + (self.hi - self.lo) * rng.random((self.count, self.d))
        axes = [np.linspace(a, b, r) if r > 1 else np.array([(a + b) / 2])
                for a, b, r in zip(self.lo, self.hi, self.resolution)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)

    def boundary_points(self, per_axis=5):
        """Coarse sample of the box faces."""
        axes = [np.linspace(a, b, per_axis) for a, b in zip(self.lo, self.hi)]
        pts = []
        for l in range(self.d):
            for side in (self.lo[l], self.hi[l]):
                grids = [ax if j != l else np.array([side]) for j, ax in enumerate(axes)]
                mesh = np.meshgrid(*grids, indexing="ij")
                pts.append(np.stack([g.ravel() for g in mesh], axis=1))
        return np.concatenate(pts)

    def to_dict(self):
        out = {"lo": self.lo.tolist(), "hi": self.hi.tolist(), "mode": self.mode}
        if self.mode == "grid":
            out["resolution"] = list(self.resolution)
        else:
            out["count"] = int(self.count)
            out["seed"] = int(self.seed)
        return out


@dataclass
class ScalarWeight:
    """A scalar function with its gradient, both vectorized over ``(n, d)``."""

    value: Callable
    grad: Callable


@dataclass
class WeightData:
    psi: ScalarWeight | None = None
    v: ScalarWeight | None = None
    gamma: float = 0.0
    C_gamma: float = 0.0
    v0: float = 1.0
    c1: float | None = None
    c_V: float | None = None


@dataclass
class HypothesisReport:
    status: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    witnesses: dict = field(default_factory=dict)
    n_samples: int = 0
    fd_used: bool = False
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return all(s != "fail" for s in self.status.values())

    def record(self, name, ok, witness=None, value=None):
        if ok is None:
            self.status[name] = "unknown"
            return
        self.status[name] = "pass" if ok else "fail"
        if witness is not None:
            self.witnesses[name] = {"x": np.asarray(witness, dtype=float).tolist(),
                                    "value": float(value)}
        elif not ok:
            raise ValueError(f"failed condition {name!r} needs a witness")

    def to_dict(self):
        return {
            "status": dict(self.status),
            "constants": {k: _jsonable(v) for k, v in self.constants.items()},
            "witnesses": self.witnesses,
            "n_samples": int(self.n_samples),
            "fd_used": bool(self.fd_used),
            "notes": list(self.notes),
        }


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if np.isfinite(v) else ("inf" if v > 0 else ("-inf" if v < 0 else "nan"))
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def _chunks(X, size):
    return [X[i:i + size] for i in range(0, X.shape[0], size)]


def pointwise_table(fld: CoefficientField, X, chunk=2048, threads=None):
    """Pointwise constants at every sample; dict of ``(n,)`` arrays.

    Points where ``Q_s`` is not positive definite get NaN constants.
    """
    def work(Xc):
        Q = fld.eval_q(Xc)
        A = fld.eval_a(Xc)
        V = fld.eval_v(Xc)
        Qs = (Q + np.swapaxes(Q, -1, -2)) / 2
        wq = np.linalg.eigvalsh(Qs)
        pd = (wq[:, 0] > PD_RTOL * np.maximum(wq[:, -1], 0)) & (wq[:, -1] > 0)
        n = Xc.shape[0]
        out = {k: np.full(n, np.nan) for k in ("c0", "C_re", "C_im", "scriptC", "lambda_min_sym")}
        out["qs_min_eig"] = wq[:, 0]
        if np.any(pd):
            sc = scriptC_batch(Q[pd], A[pd])
            for k in ("c0", "C_re", "C_im", "scriptC", "lambda_min_sym"):
                out[k][pd] = sc[k]
        Vs = (V + np.swapaxes(V, -1, -2)) / 2
        out["v_min_eig"] = np.linalg.eigvalsh(Vs)[:, 0]
        out["lambda_min_sym_all"] = np.linalg.eigvalsh(
            (big_matrix(A) + np.swapaxes(big_matrix(A), -1, -2)) / 2)[:, 0]
        return out

    parts = ordered_map(work, _chunks(np.asarray(X, dtype=float), chunk), threads)
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def certify_hypotheses(fld: CoefficientField, plan: SamplePlan, tol=1e-10, threads=None):
    """Check positivity of ``Q_s``, the block lower bound and ``V``; estimate c0 and C."""
    X = plan.points()
    if X.shape[0] == 0:
        raise ValueError("sample plan is empty")
    tab = pointwise_table(fld, X, threads=threads)
    rep = HypothesisReport(n_samples=X.shape[0], fd_used=False)
    rep.notes.append(SAMPLING_NOTE)

    qmin = tab["qs_min_eig"]
    i = int(np.argmin(qmin))
    pd_ok = bool(np.all(np.isfinite(tab["c0"])))
    bad = np.flatnonzero(~np.isfinite(tab["c0"]))
    rep.record("Q_positive", pd_ok, None if pd_ok else X[bad[0]], None if pd_ok else qmin[bad[0]])
    rep.constants["qs_min_eig"] = float(qmin[i])

    def worst(key, largest=True):
        vals = tab[key]
        j = int(np.nanargmax(vals) if largest else np.nanargmin(vals))
        return float(vals[j]), X[j]

    if pd_ok:
        for key in ("c0", "C_re", "C_im", "scriptC"):
            val, x = worst(key)
            rep.constants[key] = val
            rep.constants[key + "_witness"] = x.tolist()
    lam, xl = worst("lambda_min_sym_all", largest=False)
    rep.constants["lambda_min_sym"] = lam
    scale = 1.0 + float(np.max(np.abs(tab["scriptC"][np.isfinite(tab["scriptC"])]), initial=0.0))
    rep.record("A_lower_bound", lam >= -tol * scale, xl if lam < -tol * scale else None, lam)
    vmin, xv = worst("v_min_eig", largest=False)
    rep.constants["v_min_eig"] = vmin
    rep.record("V_nonnegative", vmin >= -tol, xv if vmin < -tol else None, vmin)
    for key in ("claimed_c0", "claimed_scriptC", "claimed_scriptC_alt"):
        if key in fld.metadata:
            rep.constants[key] = float(fld.metadata[key])
    return rep


def _check_weight_growth(psi_vals, boundary_vals, X, margin):
    if np.any(psi_vals <= 1 + margin):
        j = int(np.argmin(psi_vals))
        raise PreconditionError("log-weight must exceed 1 on the samples", X[j], psi_vals[j])
    if not np.max(boundary_vals) > np.min(psi_vals) * (1 + margin):
        raise PreconditionError("log-weight does not grow towards the box boundary",
                                X[int(np.argmin(psi_vals))], float(np.max(boundary_vals)))


def estimate_K_logweight(fld: CoefficientField, psi: ScalarWeight, plan: SamplePlan, margin=1e-9):
    """Empirical ``K = sup (Q grad psi, grad psi) / (psi log psi)^2``."""
    X = plan.points()
    val = np.asarray(psi.value(X), dtype=float)
    bvals = np.asarray(psi.value(plan.boundary_points()), dtype=float)
    _check_weight_growth(val, bvals, X, margin)
    g = np.asarray(psi.grad(X), dtype=float)
    Q = fld.eval_q(X)
    num = np.einsum("nhk,nk,nh->n", Q, g, g)
    ratio = num / (val * np.log(val)) ** 2
    return float(np.max(ratio))


def default_log_weight():
    """``psi(x) = exp(sqrt(1 + |x|^2))``."""
    def value(X):
        return np.exp(np.sqrt(1 + np.sum(np.asarray(X) ** 2, axis=1)))

    def grad(X):
        X = np.asarray(X, dtype=float)
        r = np.sqrt(1 + np.sum(X ** 2, axis=1))
        return (np.exp(r) / r)[:, None] * X

    return ScalarWeight(value, grad)


@dataclass
class CVEstimate:
    value: float
    unbounded: bool
    witness: list | None = None


def _cv_batch(V, tol=1e-10):
    """Pointwise c_V for stacked ``(n, m, m)``; inf where the ratio is unbounded."""
    Vs = (V + np.swapaxes(V, -1, -2)) / 2
    Vas = (V - np.swapaxes(V, -1, -2)) / 2
    w, U = np.linalg.eigh(Vs)
    n = V.shape[0]
    out = np.zeros(n)
    scale = 1.0 + np.abs(V).reshape(n, -1).max(axis=1)
    for i in range(n):
        top = max(w[i, -1], 0.0)
        rng_mask = w[i] > max(PD_RTOL * top, tol * scale[i])
        kern = U[i][:, ~rng_mask]
        if kern.shape[1] and np.linalg.norm(Vas[i] @ kern) > tol * scale[i]:
            out[i] = np.inf
            continue
        if not np.any(rng_mask):
            out[i] = 0.0
            continue
        R = U[i][:, rng_mask] / np.sqrt(w[i][rng_mask])
        M = R.T @ Vas[i] @ R
        out[i] = np.linalg.norm(M, 2) if M.size else 0.0
    return out


def estimate_cV(fld: CoefficientField, plan: SamplePlan, tol=1e-10):
    """Smallest ``c_V`` with ``|Im(V z, z)| <= c_V Re(V z, z)``, sup over samples.

    Singular ``V_s`` is allowed when ``V_as`` annihilates its kernel; then the
    pseudo-inverse square root of ``V_s`` is used.  Otherwise the ratio is
    unbounded and the result carries a witness.
    """
    X = plan.points()
    V = fld.eval_v(X)
    Vs = (V + np.swapaxes(V, -1, -2)) / 2
    vmin = np.linalg.eigvalsh(Vs)[:, 0]
    scale = 1.0 + np.abs(V).reshape(len(X), -1).max(axis=1)
    if np.any(vmin < -tol * scale):
        j = int(np.argmin(vmin))
        raise PreconditionError("symmetric part of V is not positive semidefinite", X[j], vmin[j])
    cv = _cv_batch(V, tol)
    j = int(np.argmax(cv))
    if np.isinf(cv[j]):
        return CVEstimate(float("inf"), True, X[j].tolist())
    return CVEstimate(float(cv[j]), False, X[j].tolist())


def certify_potential_weight(fld: CoefficientField, weights: WeightData, plan: SamplePlan, tol=1e-10):
    """Check the growth bound on ``v``, ``V >= v`` and ``|V| <= c1 v`` on samples."""
    if weights.v is None:
        raise ValueError("weights.v is required")
    X = plan.points()
    v = np.asarray(weights.v.value(X), dtype=float)
    if np.any(v < weights.v0 - tol):
        j = int(np.argmin(v))
        raise PreconditionError(f"v drops below v0={weights.v0}", X[j], v[j])
    gv = np.asarray(weights.v.grad(X), dtype=float)
    Q = fld.eval_q(X)
    qvv = np.maximum(np.einsum("nhk,nk,nh->n", Q, gv, gv), 0.0)
    lhs = np.sqrt(qvv)
    rhs = weights.gamma * v ** 1.5 + weights.C_gamma
    rep = HypothesisReport(n_samples=X.shape[0])
    rep.notes.append(SAMPLING_NOTE)
    gap = rhs - lhs
    j = int(np.argmin(gap))
    rep.record("v_gradient_bound", gap[j] >= -tol * (1 + rhs[j]), X[j] if gap[j] < -tol * (1 + rhs[j]) else None, gap[j])
    rep.constants["v_gradient_margin"] = float(gap[j])

    V = fld.eval_v(X)
    Vs = (V + np.swapaxes(V, -1, -2)) / 2
    low = np.linalg.eigvalsh(Vs - v[:, None, None] * np.eye(fld.m))[:, 0]
    j = int(np.argmin(low))
    ok = low[j] >= -tol * (1 + v[j])
    rep.record("V_dominates_v", ok, None if ok else X[j], low[j])
    rep.constants["V_minus_v_min_eig"] = float(low[j])

    norms = np.linalg.norm(V, ord=2, axis=(1, 2))
    rep.constants["c1_empirical"] = float(np.max(norms / v))
    if weights.c1 is None:
        rep.record("V_bounded_by_c1_v", None)
    else:
        gap = weights.c1 * v + tol * (1 + v) - norms
        j = int(np.argmin(gap))
        rep.record("V_bounded_by_c1_v", gap[j] >= 0, X[j] if gap[j] < 0 else None, norms[j] / v[j])
    rep.constants["v0_empirical"] = float(np.min(v))
    rep.constants["v0_witness"] = X[int(np.argmin(v))].tolist()
    return rep


# ---------------------------------------------------------------------------
# builders

def _quadratic_profile(alpha):
    def phi(X):
        return 1.0 + alpha * np.sum(X ** 2, axis=1)

    def dphi(X):
        return 2.0 * alpha * X

    return phi, dphi


def scaled_field(Q0, A0, V0=None, alpha=0.1, v_alpha=None, name="scaled", metadata=None):
    """Field with ``Q = phi Q0``, ``A = phi A0`` and ``V = phi_V V0``.

    ``phi(x) = 1 + alpha |x|^2`` and ``phi_V(x) = 1 + v_alpha |x|^2``
    (``v_alpha=None`` keeps ``V`` constant).  Pointwise constants do not
    depend on ``x`` since the coefficient matrices only change by a positive
    factor, but the operator still has variable coefficients.
    """
    Q0 = np.asarray(Q0, dtype=float)
    A0 = np.asarray(A0, dtype=float)
    d, m = Q0.shape[0], A0.shape[2]
    V0 = np.zeros((m, m)) if V0 is None else np.asarray(V0, dtype=float)
    phi, dphi = _quadratic_profile(alpha)
    vphi = (lambda X: np.ones(len(X))) if v_alpha is None else _quadratic_profile(v_alpha)[0]

    def q(X):
        return phi(X)[:, None, None] * Q0

    def a(X):
        return phi(X)[:, None, None, None, None] * A0

    def v_mat(X):
        return vphi(X)[:, None, None] * V0

    def grad_q(X):
        return dphi(X)[:, :, None, None] * Q0

    def grad_a(X):
        return dphi(X)[:, :, None, None, None, None] * A0

    meta = {"alpha": alpha, "v_alpha": v_alpha}
    meta.update(metadata or {})
    return CoefficientField(d, m, q, a, v_mat, grad_q, grad_a, meta, name)


def make_heat(d, m, V0=None, v_alpha=None):
    """``Q = I``, no coupling; optional potential ``V0``."""
    return scaled_field(np.eye(d), np.zeros((d, d, m, m)), V0, alpha=0.0, v_alpha=v_alpha,
                        name="heat", metadata={"claimed_c0": 0.0, "claimed_scriptC": 0.0})


def _spot_sym_psd(A0, what, tol=1e-12):
    big = big_matrix(A0)
    lam = np.linalg.eigvalsh((big + big.T) / 2)[0]
    if lam < -tol * (1 + np.abs(big).max()):
        raise PreconditionError(f"{what}: symmetrized block matrix is not positive semidefinite", None, lam)
    return lam


def _check_spd(Q0, what):
    Q0 = np.asarray(Q0, dtype=float)
    if not np.allclose(Q0, Q0.T, rtol=0, atol=1e-14 * (1 + np.abs(Q0).max())):
        raise PreconditionError(f"{what}: Q must be symmetric")
    w = np.linalg.eigvalsh(Q0)
    if not w[0] > PD_RTOL * w[-1]:
        raise PreconditionError(f"{what}: Q must be positive definite", None, w[0])
    return w


def make_symmetric_case_I(Q0, k0, B, V0=None, alpha=0.1, v_alpha=None):
    """Symmetric ``Q`` with ``A^{hk} = k0 lambda_Q(x) B^{hk}``.

    ``B`` is a ``(d, d, m, m)`` block array with entries in ``[-1, 1]`` whose
    symmetrized big matrix is positive semidefinite.  Claimed ``C = m d k0``.
    """
    w = _check_spd(Q0, "case I")
    B = np.asarray(B, dtype=float)
    d, m = B.shape[0], B.shape[2]
    if k0 < 0:
        raise PreconditionError("case I: k0 must be nonnegative", None, k0)
    if np.abs(B).max(initial=0.0) > 1 + 1e-14:
        raise PreconditionError("case I: |B| entries must not exceed 1", None, np.abs(B).max())
    _spot_sym_psd(B, "case I")
    # lambda_Q(x) = phi(x) * lambda_min(Q0), so A is phi times a constant block array
    A0 = k0 * w[0] * B
    return scaled_field(Q0, A0, V0, alpha, v_alpha, name="case_I",
                        metadata={"claimed_c0": 0.0, "claimed_scriptC": m * d * k0, "k0": k0})


def make_symmetric_case_II(Q0, G, V0=None, alpha=0.1, v_alpha=None):
    """Symmetric ``Q`` with ``A^{hk} = q_hk G``; claimed ``C = lambda_max(G_s)``."""
    _check_spd(Q0, "case II")
    G = np.asarray(G, dtype=float)
    if np.any(G < 0):
        raise PreconditionError("case II: G must have nonnegative entries", None, G.min())
    Gs = (G + G.T) / 2
    wg = np.linalg.eigvalsh(Gs)
    if wg[0] < -1e-12 * (1 + abs(wg[-1])):
        raise PreconditionError("case II: symmetric part of G must be positive semidefinite", None, wg[0])
    Q0 = np.asarray(Q0, dtype=float)
    A0 = Q0[:, :, None, None] * G
    return scaled_field(Q0, A0, V0, alpha, v_alpha, name="case_II",
                        metadata={"claimed_c0": 0.0, "claimed_scriptC": float(max(wg[-1], 0.0))})


def make_diag_antisym(diag_q, Q0_antisym, k2, k3, P, E, V0=None, alpha=0.1, v_alpha=None):
    """Diagonal-plus-antisymmetric ``Q`` with bounded coupling blocks.

    ``Q = diag(diag_q) + Q0_antisym`` with off-diagonal row sums at most
    ``k2 q_ii``.  Diagonal blocks are ``A^{hh} = k2 q_hh P^h`` with entries of
    ``P^h`` in ``[0, 1]``; off-diagonal blocks are ``A^{hk} = k3 min_r q_rr E^{hk}``
    with entries of ``E^{hk}`` in ``[-1, 1]``.  Both candidate constants are
    stored; the claimed one is ``m (k2 + d k3)``, which never exceeds
    ``m d (k2 + k3)``.
    """
    dq = np.asarray(diag_q, dtype=float)
    K = np.asarray(Q0_antisym, dtype=float)
    d = dq.size
    P = np.asarray(P, dtype=float)
    E = np.asarray(E, dtype=float)
    m = P.shape[-1]
    if np.any(dq <= 0):
        raise PreconditionError("case III: diagonal of Q must be positive", None, dq.min())
    if not np.allclose(K, -K.T, rtol=0, atol=1e-14):
        raise PreconditionError("case III: perturbation must be antisymmetric")
    if np.any(np.diag(K) != 0):
        raise PreconditionError("case III: antisymmetric part must have zero diagonal")
    rows = np.abs(K).sum(axis=1)
    if np.any(rows > k2 * dq * (1 + 1e-12)):
        i = int(np.argmax(rows / dq))
        raise PreconditionError("case III: row sums exceed k2 q_ii", None, rows[i] / dq[i])
    if P.shape != (d, m, m) or np.any(P < 0) or np.any(P > 1):
        raise PreconditionError("case III: diagonal block pattern must be (d, m, m) with entries in [0, 1]")
    if E.shape != (d, d, m, m) or np.abs(E).max(initial=0.0) > 1:
        raise PreconditionError("case III: off-diagonal pattern must be (d, d, m, m) with entries in [-1, 1]")
    A0 = k3 * dq.min() * E.copy()
    for h in range(d):
        A0[h, h] = k2 * dq[h] * P[h]
    _spot_sym_psd(A0, "case III")
    Q0 = np.diag(dq) + K
    meta = {
        "claimed_c0": float(k2),
        "claimed_scriptC": float(m * (k2 + d * k3)),
        "claimed_scriptC_alt": float(m * d * (k2 + k3)),
        "k2": float(k2),
        "k3": float(k3),
    }
    return scaled_field(Q0, A0, V0, alpha, v_alpha, name="case_III", metadata=meta)


def random_case_I(rng, d, m, k0, alpha=0.1, V0=None):
    """A random admissible case I field."""
    M = rng.standard_normal((d, d))
    Q0 = M @ M.T + d * np.eye(d)
    W = rng.standard_normal((d * m, d * m))
    S = W @ W.T
    B4 = S.reshape(d, m, d, m).transpose(0, 2, 1, 3)
    B = B4 / np.abs(B4).max()
    return make_symmetric_case_I(Q0, k0, B, V0=V0, alpha=alpha)


def random_case_II(rng, d, m, lam_G, alpha=0.1, V0=None):
    """A random admissible case II field with ``lambda_max(G_s)`` equal to ``lam_G``."""
    M = rng.standard_normal((d, d))
    Q0 = M @ M.T + d * np.eye(d)
    R = rng.random((m, m))
    G = R @ R.T + np.diag(rng.random(m))
    G = G * (lam_G / np.linalg.eigvalsh(G)[-1])
    return make_symmetric_case_II(Q0, G, V0=V0, alpha=alpha)


def random_case_III_parts(rng, d, m, k2, k3):
    """Random admissible inputs for :func:`make_diag_antisym`.

    The off-diagonal pattern is shrunk by halves until the symmetrized block
    matrix is positive semidefinite.
    """
    dq = 1.0 + rng.random(d)
    K = rng.standard_normal((d, d))
    K = (K - K.T) / 2
    rows = np.abs(K).sum(axis=1)
    if d > 1:
        K *= np.min(k2 * dq / np.where(rows > 0, rows, 1.0)) * rng.uniform(0.5, 1.0)
    beta = rng.uniform(0.0, 1.0)
    P = np.stack([beta * np.eye(m) + (1 - beta) * np.ones((m, m)) * rng.uniform(0, 1)
                  for _ in range(d)])
    P = np.clip(P, 0.0, 1.0)
    E = rng.uniform(-1, 1, (d, d, m, m))
    for h in range(d):
        E[h, h] = 0.0
    for _ in range(60):
        A0 = k3 * dq.min() * E.copy()
        for h in range(d):
            A0[h, h] = k2 * dq[h] * P[h]
        big = big_matrix(A0)
        if np.linalg.eigvalsh((big + big.T) / 2)[0] >= 0:
            break
        E *= 0.5
    return dq, K, P, E


def random_case_III(rng, d, m, k2, k3, alpha=0.1, V0=None):
    dq, K, P, E = random_case_III_parts(rng, d, m, k2, k3)
    return make_diag_antisym(dq, K, k2, k3, P, E, V0=V0, alpha=alpha)


def empirical_scriptC(fld: CoefficientField, plan: SamplePlan):
    """Sup of the pointwise taming constant over a plan."""
    X = plan.points()
    return float(np.max(scriptC_batch(fld.eval_q(X), fld.eval_a(X))["scriptC"]))


def quadratic_potential_weight(gamma=2.0, C_gamma=0.0, c1=1.0):
    """``v(x) = 1 + |x|^2`` with its gradient."""
    def value(X):
        return 1.0 + np.sum(np.asarray(X) ** 2, axis=1)

    def grad(X):
        return 2.0 * np.asarray(X, dtype=float)

    return WeightData(v=ScalarWeight(value, grad), gamma=gamma, C_gamma=C_gamma, v0=1.0, c1=c1)


def constant_potential_weight(v0, c1=1.0):
    def value(X):
        return np.full(len(X), float(v0))

    def grad(X):
        return np.zeros_like(np.asarray(X, dtype=float))

    return WeightData(v=ScalarWeight(value, grad), gamma=0.0, C_gamma=0.0, v0=float(v0), c1=c1)

