"""Pointwise linear algebra for strongly coupled block coefficients.

Conventions used throughout the package:

* a block array ``A`` has shape ``(d, d, m, m)`` with ``A[h, k]`` the
  ``m x m`` block coupling ``D_k u`` into the ``h``-th flux;
* a direction set ``theta`` has shape ``(d, m)`` with ``theta[k]`` the
  complex m-vector attached to the k-th derivative;
* the inner product is ``(x, y) = sum_i x_i conj(y_i)``.

The big matrix of a block array is indexed row ``(h, i)``, column ``(k, j)``
(flattened as ``h*m + i``), so that ``block_form(A, t, t) = t^H @ big @ t``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# smallest eigenvalue must exceed this fraction of the largest
PD_RTOL = 1e-10


class NotPositiveDefiniteError(ValueError):
    """A matrix that must be positive definite is not."""

    def __init__(self, what, eigenvalue):
        self.eigenvalue = float(eigenvalue)
        super().__init__(f"{what} is not positive definite "
                         f"(smallest eigenvalue {self.eigenvalue:.6g})")


@dataclass
class CoupledBlockSample:
    """Coefficient data at one spatial point."""

    Q: np.ndarray
    A: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.A = np.asarray(self.A, dtype=float)
        self.V = np.asarray(self.V, dtype=float)
        d = self.Q.shape[0]
        if self.Q.shape != (d, d):
            raise ValueError(f"Q must be square, got shape {self.Q.shape}")
        if self.A.ndim != 4 or self.A.shape[:2] != (d, d) or self.A.shape[2] != self.A.shape[3]:
            raise ValueError(f"A must have shape (d, d, m, m) with d={d}, got {self.A.shape}")
        m = self.A.shape[2]
        if self.V.shape != (m, m):
            raise ValueError(f"V must have shape ({m}, {m}), got {self.V.shape}")
        for name in ("Q", "A", "V"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} has nonfinite entries")

    @property
    def d(self):
        return self.Q.shape[0]

    @property
    def m(self):
        return self.A.shape[2]


@dataclass
class DirectionSet:
    """Complex directions theta^1..theta^d (and optionally eta^1..eta^d)."""

    theta: np.ndarray
    eta: np.ndarray | None = None

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=complex)
        if self.theta.ndim != 2:
            raise ValueError("theta must have shape (d, m)")
        if self.eta is not None:
            self.eta = np.asarray(self.eta, dtype=complex)
            if self.eta.shape != self.theta.shape:
                raise ValueError("theta and eta must have the same shape")


@dataclass
class PointwiseConstants:
    c0: float
    C_re: float
    C_im: float
    scriptC: float
    lambda_min_sym: float
    qs_min_eig: float


def _as_blocks(A):
    A = np.asarray(A)
    if A.ndim != 4 or A.shape[0] != A.shape[1] or A.shape[2] != A.shape[3]:
        raise ValueError(f"block array must have shape (d, d, m, m), got {A.shape}")
    return A


def _directions(theta, d, m):
    if isinstance(theta, DirectionSet):
        theta = theta.theta
    theta = np.asarray(theta, dtype=complex)
    if theta.shape != (d, m):
        raise ValueError(f"direction set must have shape ({d}, {m}), got {theta.shape}")
    return theta


def split_sym_antisym(A):
    """Split blocks into the parts carrying the real and imaginary form values.

    ``A_s[h, k] = (A[h, k] + A[k, h].T) / 2`` and
    ``A_as[h, k] = (A[h, k] - A[k, h].T) / 2``.
    """
    A = _as_blocks(A)
    At = A.transpose(1, 0, 3, 2)
    return (A + At) / 2, (A - At) / 2


def block_form(A, theta, eta=None):
    """Return ``sum_{h,k} (A^{hk} theta^k, eta^h)``; ``eta`` defaults to ``theta``."""
    A = _as_blocks(A)
    d, m = A.shape[0], A.shape[2]
    theta = _directions(theta, d, m)
    eta = theta if eta is None else _directions(eta, d, m)
    return complex(np.einsum("hkij,kj,hi->", A, theta, eta.conj()))


def big_matrix(A):
    """The ``md x md`` matrix with entry ``a^{hk}_{ij}`` at row (h,i), column (k,j)."""
    A = np.asarray(A)
    d, m = A.shape[-4], A.shape[-2]
    return np.swapaxes(A, -3, -2).reshape(A.shape[:-4] + (d * m, d * m))


def scalar_form_matrix(Q, m):
    """Matrix of ``Re sum_i (Q theta_i, theta_i)`` on real parts: ``kron(Q_s, I_m)``."""
    Q = np.asarray(Q, dtype=float)
    Qs = (Q + np.swapaxes(Q, -1, -2)) / 2
    eye = np.eye(m)
    D = Qs[..., :, None, :, None] * eye[None, :, None, :]
    d = Q.shape[-1]
    return D.reshape(Q.shape[:-2] + (d * m, d * m))


def _check_pd(S, what):
    """Batched positive-definiteness check; returns eigenvalues (ascending)."""
    w = np.linalg.eigvalsh(S)
    lo, hi = w[..., 0], w[..., -1]
    bad = ~(lo > PD_RTOL * np.maximum(hi, 0.0)) | ~(hi > 0)
    if np.any(bad):
        idx = np.argmax(bad) if np.ndim(bad) else None
        worst = lo.flat[idx] if idx is not None else lo
        raise NotPositiveDefiniteError(what, worst)
    return w


def _sym_antisym_ratio(S, K):
    """Largest singular value of ``L^{-1} K L^{-T}`` where ``S = L L^T`` (batched).

    This is ``sup |2 a^T K b| / (a^T S a + b^T S b)`` over real ``a, b``.
    """
    L = np.linalg.cholesky(S)
    Linv = np.linalg.inv(L)
    Kt = Linv @ K @ np.swapaxes(Linv, -1, -2)
    return np.linalg.svd(Kt, compute_uv=False)[..., 0]


def c0_batch(Q):
    """Vectorized :func:`c0_pointwise` over a stack of matrices ``(..., d, d)``."""
    Q = np.asarray(Q, dtype=float)
    Qs = (Q + np.swapaxes(Q, -1, -2)) / 2
    Qas = (Q - np.swapaxes(Q, -1, -2)) / 2
    _check_pd(Qs, "symmetric part of Q")
    return _sym_antisym_ratio(Qs, Qas)


def c0_pointwise(Q):
    """Smallest ``c0`` with ``|Im(Q xi, xi)| <= c0 Re(Q xi, xi)`` for all complex ``xi``.

    With ``xi = a + ib`` one has ``Re(Q xi, xi) = a^T Q_s a + b^T Q_s b`` and
    ``Im(Q xi, xi) = 2 a^T Q_as b``; the supremum of the ratio is the largest
    singular value of ``Q_s^{-1/2} Q_as Q_s^{-1/2}``.
    """
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ValueError(f"Q must be a square matrix, got shape {Q.shape}")
    return float(c0_batch(Q))


def scriptC_batch(Q, A):
    """Vectorized :func:`scriptC_pointwise`.

    ``Q`` has shape ``(n, d, d)`` and ``A`` shape ``(n, d, d, m, m)``.  Returns a
    dict of arrays keyed like the fields of :class:`PointwiseConstants`.
    """
    Q = np.asarray(Q, dtype=float)
    A = np.asarray(A, dtype=float)
    m = A.shape[-1]
    Qs = (Q + np.swapaxes(Q, -1, -2)) / 2
    wq = _check_pd(Qs, "symmetric part of Q")
    big = big_matrix(A)
    S = (big + np.swapaxes(big, -1, -2)) / 2
    K = (big - np.swapaxes(big, -1, -2)) / 2
    D = scalar_form_matrix(Q, m)
    L = np.linalg.cholesky(D)
    Linv = np.linalg.inv(L)
    LinvT = np.swapaxes(Linv, -1, -2)
    C_re = np.linalg.eigvalsh(Linv @ S @ LinvT)[..., -1]
    C_im = np.linalg.svd(Linv @ K @ LinvT, compute_uv=False)[..., 0]
    C_re = np.maximum(C_re, 0.0)
    return {
        "c0": _sym_antisym_ratio(Qs, (Q - np.swapaxes(Q, -1, -2)) / 2),
        "C_re": C_re,
        "C_im": C_im,
        "scriptC": np.maximum(C_re, C_im),
        "lambda_min_sym": np.linalg.eigvalsh(S)[..., 0],
        "qs_min_eig": wq[..., 0],
    }


def scriptC_pointwise(sample: CoupledBlockSample) -> PointwiseConstants:
    """Exact taming constants of the coupling blocks at one point.

    ``C_re`` is the top generalized eigenvalue of ``(sym(big), kron(Q_s, I))``
    and ``C_im`` the top singular value of the antisymmetric part reduced by
    the Cholesky factor of ``kron(Q_s, I)``.
    """
    out = scriptC_batch(sample.Q[None], sample.A[None])
    return PointwiseConstants(**{k: float(v[0]) for k, v in out.items()})


def q_form(Q, xi, zeta=None):
    """``(Q xi, zeta) = sum_{h,k} q_hk xi_k conj(zeta_h)`` for complex d-vectors."""
    xi = np.asarray(xi, dtype=complex)
    zeta = xi if zeta is None else np.asarray(zeta, dtype=complex)
    return complex(zeta.conj() @ np.asarray(Q) @ xi)


def scalar_q_form(Q, theta, eta=None):
    """``sum_i (Q theta_i, eta_i)`` with ``theta_i = (theta^1_i, ..., theta^d_i)``."""
    theta = np.asarray(theta, dtype=complex)
    eta = theta if eta is None else np.asarray(eta, dtype=complex)
    return complex(np.einsum("hk,ki,hi->", np.asarray(Q), theta, eta.conj()))


def mixed_cs_margin(A, M, theta, eta, C0, C1=None, tol=1e-12):
    """Right minus left side of the mixed Cauchy-Schwarz inequality.

    With ``C1 is None`` the inequality checked is
    ``|sum (A_as^{hk} theta^k, eta^h)| <= C0 * sqrt(Re M[theta]) * sqrt(Re M[eta])``.
    Given ``C1`` the full blocks ``A`` are used with constant ``C0 + C1``; the
    caller asserts that the real part of the ``A``-form is tamed by ``C1``.
    """
    A = _as_blocks(np.asarray(A, dtype=float))
    M = _as_blocks(np.asarray(M, dtype=float))
    d, m = A.shape[0], A.shape[2]
    theta = _directions(theta, d, m)
    eta = _directions(eta, d, m)
    mt = block_form(M, theta).real
    me = block_form(M, eta).real
    scale = 1.0 + np.abs(M).max() * (np.abs(theta).max() + np.abs(eta).max()) ** 2
    for val, name in ((mt, "theta"), (me, "eta")):
        if val < -tol * scale:
            raise ValueError(f"Re M-form is negative on {name} ({val:.3g}); precondition violated")
    if C1 is None:
        lhs = abs(block_form(split_sym_antisym(A)[1], theta, eta))
        const = C0
    else:
        lhs = abs(block_form(A, theta, eta))
        const = C0 + C1
    return const * np.sqrt(max(mt, 0.0)) * np.sqrt(max(me, 0.0)) - lhs


def random_directions(rng, n, d, m=None):
    """``n`` directions uniform on the complex unit sphere.

    Returns shape ``(n, d)`` when ``m`` is None, else ``(n, d, m)``.
    """
    shape = (n, d) if m is None else (n, d, m)
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    axes = tuple(range(1, len(shape)))
    norm = np.sqrt(np.sum(np.abs(z) ** 2, axis=axes, keepdims=True))
    return z / norm
