"""Objective, gradient and optimality residual of the boxed ML problem.

Coordinates are flat: index ``j*N + n`` is device ``n`` of cell ``j``. The
objective is ``sum_b log|Sigma_b| + tr(Sigma_b^{-1} Sigma_hat_b)``; it omits
the constant ``L*B*log(pi)`` of the exact negative log-likelihood.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import NotPositiveDefinite
from .linalg import relative_frobenius
from .subproblem import SubproblemInstance


@dataclass
class SolverState:
    """Problem data plus the incrementally maintained inverses ``Sigma_b^{-1}``.

    ``signatures`` is ``(L, BN)`` complex, ``gains`` is ``(B, BN)`` with
    ``gains[b, i]`` the gain from coordinate ``i`` to BS ``b``.

    ``resid_covs[b] = Sigma_b(a) - Sigma_hat_b`` is kept next to the
    inverses. Gradient terms are formed as ``v^H (Sigma - Sigma_hat) v`` with
    ``v = Sigma^{-1} s``; the textbook ``s^H v - v^H Sigma_hat v`` loses all
    accuracy when gains span many orders of magnitude.
    """

    signatures: np.ndarray
    gains: np.ndarray
    sample_covs: np.ndarray
    noise_var: float
    a: np.ndarray = None
    inv_covs: np.ndarray = None
    resid_covs: np.ndarray = None
    updates_since_resym: np.ndarray = field(default_factory=lambda: np.zeros(1, dtype=np.intp))

    def __post_init__(self):
        self.signatures = np.ascontiguousarray(self.signatures, dtype=np.complex128)
        self.gains = np.ascontiguousarray(self.gains, dtype=np.float64)
        self.sample_covs = np.ascontiguousarray(self.sample_covs, dtype=np.complex128)
        if self.a is None:
            self.a = np.zeros(self.gains.shape[1])
            self.inv_covs = np.stack([np.eye(self.L, dtype=np.complex128) / self.noise_var] * self.B)
        else:
            self.a = np.array(self.a, dtype=np.float64)
            if self.inv_covs is None:
                self.refresh_inverses()
        self.inv_covs = np.ascontiguousarray(self.inv_covs, dtype=np.complex128)
        # row i = signature of coordinate i, contiguous for the coordinate pass
        self.sig_rows = np.ascontiguousarray(self.signatures.T)
        if self.resid_covs is None:
            self.refresh_residuals()

    @classmethod
    def from_scenario(cls, scn, obs, a=None):
        return cls(scn.flat_signatures(), scn.flat_gains(), obs.sample_covs, scn.noise_var, a=a)

    @property
    def B(self):
        return self.gains.shape[0]

    @property
    def L(self):
        return self.signatures.shape[0]

    @property
    def size(self):
        return self.gains.shape[1]

    def covariance(self, b, a=None):
        a = self.a if a is None else np.asarray(a, dtype=float)
        S = self.signatures
        return (S * (a * self.gains[b])) @ S.conj().T + self.noise_var * np.eye(self.L)

    def refresh_residuals(self):
        """Recompute ``Sigma_b(a) - Sigma_hat_b`` from scratch."""
        self.resid_covs = np.stack([self.covariance(b) - self.sample_covs[b] for b in range(self.B)])

    def refresh_inverses(self):
        self.inv_covs = np.stack([np.linalg.inv(self.covariance(b)) for b in range(self.B)])
        self.updates_since_resym[0] = 0

    def consistency_error(self):
        """Max relative Frobenius gap between maintained and directly computed inverses."""
        return max(relative_frobenius(self.inv_covs[b], np.linalg.inv(self.covariance(b)))
                   for b in range(self.B))

    def copy(self):
        return SolverState(self.signatures, self.gains, self.sample_covs, self.noise_var,
                           a=self.a.copy(), inv_covs=self.inv_covs.copy(),
                           resid_covs=self.resid_covs.copy())


def objective(a, state):
    """Objective at ``a`` from scratch (Cholesky), independent of ``state.inv_covs``."""
    total = 0.0
    for b in range(state.B):
        Sigma = state.covariance(b, a)
        try:
            c, low = cho_factor(Sigma, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite(f"Sigma_{b}: {exc}") from None
        piv = np.diagonal(c).real
        if np.any(piv <= 0):
            raise NotPositiveDefinite(f"Sigma_{b}: non-positive pivot")
        total += 2.0 * np.log(piv).sum()
        total += np.trace(cho_solve((c, low), state.sample_covs[b], check_finite=False)).real
    return float(total)


def gradient(state, inv_covs=None, resid_covs=None):
    """Full gradient from the maintained inverses, batched per BS.

    Entry ``i`` is ``sum_j g[j, i] * (s_i^H Sigma_j^{-1} s_i - s_i^H Sigma_j^{-1} Sigma_hat_j Sigma_j^{-1} s_i)``,
    evaluated as ``sum_j g[j, i] * v^H (Sigma_j - Sigma_hat_j) v`` with ``v = Sigma_j^{-1} s_i``.
    """
    inv_covs = state.inv_covs if inv_covs is None else inv_covs
    resid_covs = state.resid_covs if resid_covs is None else resid_covs
    S = state.signatures
    grad = np.zeros(state.size)
    for j in range(state.B):
        V = inv_covs[j] @ S
        grad += state.gains[j] * np.einsum("li,li->i", V.conj(), resid_covs[j] @ V).real
    return grad


def optimality_residual(a, grad):
    """``||Proj_[0,1](a - grad) - a||_2``; zero exactly at first-order stationary points."""
    a = np.asarray(a, dtype=float)
    return float(np.linalg.norm(np.clip(a - grad, 0.0, 1.0) - a))


@dataclass
class CoordinateStats:
    """``c1 = s^H Sigma^{-1} s``, ``c2 = s^H Sigma^{-1} Sigma_hat Sigma^{-1} s`` per BS.

    ``diff`` is ``c1 - c2`` computed as ``v^H (Sigma - Sigma_hat) v``.
    """

    c1: np.ndarray
    c2: np.ndarray
    g: np.ndarray
    diff: np.ndarray

    def instance(self, a_value):
        return SubproblemInstance(self.g * self.c1, self.g * self.c2, -float(a_value),
                                  1.0 - float(a_value), rho=self.g * self.diff)


def coordinate_stats(i, state):
    """Per-BS statistics of coordinate ``i`` from the maintained inverses, O(B L^2)."""
    s = state.signatures[:, i]
    c1 = np.empty(state.B)
    c2 = np.empty(state.B)
    diff = np.empty(state.B)
    for j in range(state.B):
        v = state.inv_covs[j] @ s
        c1[j] = np.vdot(s, v).real
        c2[j] = np.vdot(v, state.sample_covs[j] @ v).real
        diff[j] = np.vdot(v, state.resid_covs[j] @ v).real
    return CoordinateStats(c1, c2, state.gains[:, i].copy(), diff)
