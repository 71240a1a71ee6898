"""Finite-difference discretization of the operator and an L^p contraction audit.

Unknowns live on the interior nodes of a box with zero Dirichlet data,
ordered node-major: index ``node * m + component`` with nodes in C order.
Diagonal second derivatives use the flux form with midpoint coefficients;
mixed derivatives use a centered cross difference with coefficients at the
neighbouring nodes, which keeps the matrix symmetric for symmetric fields.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .coefficient_models import CoefficientField


class SolverError(RuntimeError):
    def __init__(self, message, iterations, residual, step=None):
        self.iterations = iterations
        self.residual = residual
        self.step = step
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3g}"
                         + (f", step={step})" if step is not None else ")"))


@dataclass
class SimGrid:
    """Interior nodes of ``[lo, hi]`` with ``N`` unknown nodes per axis."""

    lo: np.ndarray
    hi: np.ndarray
    N: tuple

    def __post_init__(self):
        self.lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        self.N = tuple(int(n) for n in np.broadcast_to(np.asarray(self.N), self.lo.shape))
        if not np.all(self.hi > self.lo):
            raise ValueError("grid box must be nonempty")
        if min(self.N) < 1:
            raise ValueError("need at least one interior node per axis")

    @property
    def d(self):
        return self.lo.size

    @property
    def h(self):
        return (self.hi - self.lo) / (np.array(self.N) + 1)

    @property
    def n_nodes(self):
        return int(np.prod(self.N))

    @property
    def cell_volume(self):
        return float(np.prod(self.h))

    def multi_index(self):
        """``(n_nodes, d)`` integer coordinates ``1..N`` of the interior nodes."""
        idx = np.indices(self.N).reshape(self.d, -1).T
        return idx + 1

    def coords(self, mi=None):
        mi = self.multi_index() if mi is None else mi
        return self.lo + mi * self.h

    def flat(self, mi):
        """Flat node number of integer coordinates; -1 where outside the interior."""
        inside = np.all((mi >= 1) & (mi <= np.array(self.N)), axis=1)
        out = np.full(mi.shape[0], -1)
        if np.any(inside):
            out[inside] = np.ravel_multi_index(tuple((mi[inside] - 1).T), self.N)
        return out

    def boundary_band(self, width=2):
        """Mask of nodes within ``width`` cells of the boundary."""
        mi = self.multi_index()
        N = np.array(self.N)
        return np.any((mi <= width) | (mi > N - width), axis=1)

    def to_dict(self):
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist(), "N": list(self.N), "h": self.h.tolist()}


@dataclass
class DiscreteOperator:
    matrix: sp.csr_matrix
    grid: SimGrid
    m: int
    flags: dict = field(default_factory=dict)
    _lu: dict = field(default_factory=dict, repr=False)

    @property
    def size(self):
        return self.matrix.shape[0]

    def symmetry_residual(self):
        M = self.matrix
        top = abs(M).max()
        return 0.0 if top == 0 else float(abs(M - M.T).max() / top)

    def factor(self, key, build):
        if key not in self._lu:
            M = build()
            self._lu[key] = (M, splu(M.tocsc()))
        return self._lu[key]


def _append(rows, cols, vals, r_nodes, c_nodes, blocks, m):
    ok = c_nodes >= 0
    if not np.any(ok):
        return
    r, c, B = r_nodes[ok], c_nodes[ok], blocks[ok]
    ii, jj = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    rows.append((r[:, None, None] * m + ii).ravel())
    cols.append((c[:, None, None] * m + jj).ravel())
    vals.append(B.ravel())


def assemble(fld: CoefficientField, grid: SimGrid, warn_change=0.2):
    """Sparse matrix of the operator with zero boundary data."""
    if fld.d != grid.d:
        raise ValueError(f"field dimension {fld.d} does not match grid dimension {grid.d}")
    d, m = grid.d, fld.m
    mi = grid.multi_index()
    X = grid.coords(mi)
    me = grid.flat(mi)
    h = grid.h
    eye = np.eye(d, dtype=int)
    rows, cols, vals = [], [], []
    max_change = 0.0

    for a in range(d):
        Xp = X + 0.5 * h[a] * eye[a]
        Xm = X - 0.5 * h[a] * eye[a]
        Qp = fld.full_blocks(Xp)[:, a, a]
        Qm = fld.full_blocks(Xm)[:, a, a]
        den = np.linalg.norm(Qm, axis=(1, 2)) + 1e-300
        max_change = max(max_change, float(np.max(np.linalg.norm(Qp - Qm, axis=(1, 2)) / den)))
        s = 1.0 / h[a] ** 2
        _append(rows, cols, vals, me, grid.flat(mi + eye[a]), s * Qp, m)
        _append(rows, cols, vals, me, grid.flat(mi - eye[a]), s * Qm, m)
        _append(rows, cols, vals, me, me, -s * (Qp + Qm), m)

    for a in range(d):
        for b in range(d):
            if a == b:
                continue
            s = 1.0 / (4 * h[a] * h[b])
            for sa in (1, -1):
                Qn = fld.full_blocks(X + sa * h[a] * eye[a])[:, a, b]
                for sb in (1, -1):
                    nb = grid.flat(mi + sa * eye[a] + sb * eye[b])
                    _append(rows, cols, vals, me, nb, (sa * sb * s) * Qn, m)

    V = fld.eval_v(X)
    _append(rows, cols, vals, me, me, -V, m)

    n = grid.n_nodes * m
    if rows:
        M = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, n)).tocsr()
    else:
        M = sp.csr_matrix((n, n))
    M.sum_duplicates()
    M.eliminate_zeros()
    if not np.all(np.isfinite(M.data)):
        raise ValueError("nonfinite coefficient encountered during assembly")
    flags = {"diagonal_terms": "flux form, midpoint coefficients",
             "cross_terms": "centered, node coefficients",
             "max_relative_coefficient_change": max_change,
             "coefficient_warning": bool(max_change > warn_change)}
    if max_change > warn_change:
        warnings.warn(f"coefficients change by {max_change:.0%} across one cell; refine the grid",
                      RuntimeWarning, stacklevel=2)
    return DiscreteOperator(M, grid, m, flags)


def _solve_real(lu, M, b, tol, max_refine=3):
    """Solve with an LU factor plus iterative refinement; returns ``(x, residual, its)``."""
    x = lu.solve(b)
    nb = np.linalg.norm(b)
    res = np.linalg.norm(M @ x - b)
    its = 1
    while res > tol * max(nb, 1e-300) and its <= max_refine:
        x = x + lu.solve(b - M @ x)
        res = np.linalg.norm(M @ x - b)
        its += 1
    return x, res, its


def step(op: DiscreteOperator, u, dt, scheme="implicit-euler", tol=1e-12, max_refine=3):
    """One implicit step; ``u`` is a flat vector of length ``op.size``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    A = op.matrix
    I = sp.identity(op.size, format="csr")
    if scheme == "implicit-euler":
        M, lu = op.factor(("ie", dt), lambda: (I - dt * A).tocsr())
        rhs_op = None
    elif scheme == "crank-nicolson":
        M, lu = op.factor(("cn", dt), lambda: (I - 0.5 * dt * A).tocsr())
        rhs_op = I + 0.5 * dt * A
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    u = np.asarray(u)
    b = u if rhs_op is None else rhs_op @ u
    parts = [b.real, b.imag] if np.iscomplexobj(b) else [b]
    out, worst, its = [], 0.0, 0
    for part in parts:
        x, res, k = _solve_real(lu, M, np.ascontiguousarray(part), tol, max_refine)
        out.append(x)
        worst, its = max(worst, res), max(its, k)
    unorm = np.linalg.norm(u)
    if worst > tol * max(unorm, np.linalg.norm(b), 1e-300):
        raise SolverError("linear solve did not reach tolerance", its, float(worst))
    return out[0] + 1j * out[1] if len(out) == 2 else out[0]


@dataclass
class EvolutionConfig:
    dt: float
    steps: int
    scheme: str = "implicit-euler"
    tol: float = 1e-12
    max_refine: int = 3
    p_list: tuple = (2.0,)
    audit_tol: float = 1e-8

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")
        if not self.tol < 1e-8:
            raise ValueError("solver tolerance must be below 1e-8 for contraction audits")
        if self.scheme not in ("implicit-euler", "crank-nicolson"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


@dataclass
class TrajectoryReport:
    times: np.ndarray
    norms: dict
    violations: list
    max_violation: dict
    analyticity_proxy: float
    boundary_fraction: float
    exploratory: list
    audit_tol: float

    @property
    def ok(self):
        return not self.violations

    def to_dict(self, with_series=False):
        out = {
            "steps": int(len(self.times) - 1),
            "violations": [dict(v) for v in self.violations],
            "max_violation": {str(k): float(v) for k, v in self.max_violation.items()},
            "analyticity_proxy": float(self.analyticity_proxy),
            "boundary_fraction": float(self.boundary_fraction),
            "exploratory_p": [float(p) for p in self.exploratory],
            "audit_tol": float(self.audit_tol),
            "final_norms": {str(p): float(v[-1]) for p, v in self.norms.items()},
        }
        if with_series:
            out["norms"] = {str(p): [float(x) for x in v] for p, v in self.norms.items()}
        return out


def discrete_lp_norm(u, grid: SimGrid, m, p):
    """``(h_1 ... h_d sum_nodes |u(node)|^p)^{1/p}``, with ``|.|`` the Euclidean norm over components."""
    nodes = np.sqrt(np.sum(np.abs(np.asarray(u).reshape(-1, m)) ** 2, axis=1))
    top = nodes.max(initial=0.0)
    if top == 0:
        return 0.0
    return float(top * (grid.cell_volume * np.sum((nodes / top) ** p)) ** (1.0 / p))


def sample_initial(u_fn, grid: SimGrid, real=True):
    """Nodal values of a test function as a flat vector."""
    vals = u_fn.value(grid.coords())
    if real:
        vals = vals.real
    return np.ascontiguousarray(vals.reshape(-1))


def evolve_and_audit(op: DiscreteOperator, u0, config: EvolutionConfig, window=None):
    """Run the scheme and flag steps where a discrete L^p norm grows.

    ``window`` (an interval-like object supporting ``in``) marks exponents
    outside it as exploratory.
    """
    u = np.asarray(u0).copy()
    if u.shape != (op.size,) or not np.all(np.isfinite(u)):
        raise ValueError("initial data must be a finite vector matching the operator")
    g, m = op.grid, op.m
    p_list = [float(p) for p in config.p_list]
    norms = {p: [discrete_lp_norm(u, g, m, p)] for p in p_list}
    band = np.repeat(g.boundary_band(), m)
    u0_norm = np.linalg.norm(u)
    proxy = 0.0
    boundary = 0.0
    violations = []
    worst = {p: 0.0 for p in p_list}
    for n in range(1, config.steps + 1):
        try:
            u = step(op, u, config.dt, config.scheme, config.tol, config.max_refine)
        except SolverError as exc:
            exc.step = n
            raise
        nu = np.linalg.norm(u)
        if nu > 0:
            boundary = max(boundary, float(np.linalg.norm(u[band]) / nu))
        if u0_norm > 0:
            proxy = max(proxy, n * config.dt * float(np.linalg.norm(op.matrix @ u)) / u0_norm)
        for p in p_list:
            val = discrete_lp_norm(u, g, m, p)
            prev = norms[p][-1]
            norms[p].append(val)
            if prev > 0:
                excess = val / prev - 1.0
                worst[p] = max(worst[p], excess)
                if excess > config.audit_tol:
                    violations.append({"step": n, "p": p, "excess": float(excess)})
    exploratory = [p for p in p_list if window is not None and p not in window]
    times = config.dt * np.arange(config.steps + 1)
    return TrajectoryReport(times, {p: np.array(v) for p, v in norms.items()}, violations,
                            worst, proxy, boundary, exploratory, config.audit_tol)


def write_matrix_market(op: DiscreteOperator, path):
    """Dump the operator in Matrix Market coordinate format."""
    scipy.io.mmwrite(str(path), op.matrix.tocoo(), comment="semigroup-lab discrete operator",
                     field="real", precision=17, symmetry="general")


def write_norm_table(report: TrajectoryReport, path):
    """CSV with columns ``step, t, norm_p=<p>...``."""
    ps = list(report.norms)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "t"] + [f"norm_p={p:g}" for p in ps])
        for n, t in enumerate(report.times):
            w.writerow([n, repr(float(t))] + [repr(float(report.norms[p][n])) for p in ps])
