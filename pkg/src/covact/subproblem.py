"""Exact minimization of the one-dimensional coordinate subproblem.

For a coordinate currently at ``a`` the step ``d`` ranges over
``[-a, 1 - a]`` and the objective change is::

    phi(d) = sum_j log(1 + d*gamma[j]) - d*beta[j] / (1 + d*gamma[j])

Internally the linear term is carried as ``rho = gamma - beta`` (the
coordinate's gradient contribution per BS), which callers can supply
directly when they can compute it without cancellation. Clearing
denominators in ``phi'`` gives a polynomial of degree ``2B - 1``.
All its real roots inside the interval are candidates together with the two
endpoints and ``d = 0``; the global minimizer is the best candidate.
Values within ``1e-12`` times the magnitude of phi's terms count as tied;
ties go to the lower endpoint, then the upper one, then the smallest step.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainViolation, RootFindingFailure

TIE_TOL = 1e-12
IMAG_TOL = 1e-8
DEFLATE_TOL = 1e-300
NEWTON_STEPS = 3


@dataclass
class SubproblemInstance:
    gamma: np.ndarray
    beta: np.ndarray
    lower: float
    upper: float
    rho: np.ndarray = None

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float)
        if self.beta is None:
            self.beta = self.gamma - self.rho
        self.beta = np.asarray(self.beta, dtype=float)
        self.rho = self.gamma - self.beta if self.rho is None else np.asarray(self.rho, dtype=float)

    @classmethod
    def from_stats(cls, gains, c1, c2, a_value):
        gains = np.asarray(gains, dtype=float)
        return cls(gains * np.asarray(c1, dtype=float), gains * np.asarray(c2, dtype=float),
                   -float(a_value), 1.0 - float(a_value))


def subproblem_value(inst, d):
    """phi(d); raises :class:`DomainViolation` outside the log domain."""
    t = d * inst.gamma
    u = 1.0 + t
    if np.any(u <= 0.0):
        raise DomainViolation(f"1 + d*gamma <= 0 at d={d!r}")
    return float(np.sum(np.log1p(t) - t / u + d * inst.rho / u))


def _value_scale(inst, d):
    # size of the summed terms of phi(d), i.e. what its rounding error scales with
    t = d * inst.gamma
    u = 1.0 + t
    return float(np.sum(np.abs(np.log1p(t)) + np.abs(t / u) + np.abs(d * inst.rho / u)))


def subproblem_derivative(inst, d):
    u = 1.0 + d * inst.gamma
    return float(np.sum((inst.rho + d * inst.gamma**2) / (u * u)))


def _second_derivative(inst, d):
    g = inst.gamma
    u = 1.0 + d * g
    return float(np.sum((g * g * u - 2.0 * g * (inst.rho + d * g * g)) / u**3))


def derivative_poly(inst):
    """Coefficients (ascending) of ``P(d) = phi'(d) * prod_j (1 + d*gamma[j])^2``."""
    gamma = inst.gamma
    rho = inst.rho
    B = gamma.shape[0]
    coeffs = np.zeros(2 * B)
    for j in range(B):
        # prod_{i != j} (1 + d gamma_i)^2 by repeated convolution with (1, gamma_i)
        term = np.array([1.0])
        for i in range(B):
            if i != j:
                term = np.convolve(term, [1.0, gamma[i]])
                term = np.convolve(term, [1.0, gamma[i]])
        term = np.convolve(term, [rho[j], gamma[j] * gamma[j]])
        coeffs[: term.shape[0]] += term
    return coeffs


def poly_real_roots(coeffs):
    """Real roots of an ascending-order real polynomial via companion eigenvalues.

    Leading coefficients that are negligible relative to the largest one are
    deflated first. A root is kept as real when
    ``|imag| < 1e-8 * (1 + |real|)``.
    """
    c = np.asarray(coeffs, dtype=float)
    cmax = np.abs(c).max(initial=0.0)
    if cmax == 0.0:
        return np.empty(0)
    n = c.shape[0] - 1
    while n > 0 and abs(c[n]) < DEFLATE_TOL * cmax:
        n -= 1
    if n == 0:
        return np.empty(0)
    if n == 1:
        return np.array([-c[0] / c[1]])
    comp = np.zeros((n, n))
    comp[0, :] = -c[n - 1::-1] / c[n]
    comp[np.arange(1, n), np.arange(n - 1)] = 1.0
    try:
        roots = np.linalg.eigvals(comp)
    except np.linalg.LinAlgError as exc:
        raise RootFindingFailure(str(exc)) from None
    if not np.all(np.isfinite(roots)):
        raise RootFindingFailure("non-finite companion eigenvalues")
    keep = np.abs(roots.imag) < IMAG_TOL * (1.0 + np.abs(roots.real))
    return np.sort(roots.real[keep])


def _polish(inst, r, lower, upper):
    for _ in range(NEWTON_STEPS):
        h = _second_derivative(inst, r)
        if h == 0.0 or not np.isfinite(h):
            break
        r_new = r - subproblem_derivative(inst, r) / h
        if not (lower <= r_new <= upper) or np.any(1.0 + r_new * inst.gamma <= 0.0):
            break
        if abs(subproblem_derivative(inst, r_new)) >= abs(subproblem_derivative(inst, r)):
            break
        r = r_new
    return r


def pick_candidate(candidates, values, lower, upper, scales=None):
    """Argmin with ties broken: lower, upper, then smallest |d|.

    Two values tie when they differ by at most ``1e-12`` times the larger of
    their ``scales`` (absolute ``1e-12`` when no scales are given).
    """
    scales = [1.0] * len(values) if scales is None else scales
    k = min(range(len(values)), key=values.__getitem__)
    best, sb = values[k], scales[k]
    tied = [d for d, v, sc in zip(candidates, values, scales) if v <= best + TIE_TOL * max(sb, sc)]
    if lower in tied:
        return lower
    if upper in tied:
        return upper
    return min(tied, key=abs)


def solve_subproblem(inst, method="roots"):
    """Return ``(d_star, phi(d_star))`` minimizing phi over ``[lower, upper]``.

    ``method="golden"`` runs a golden-section search instead; it assumes
    unimodality and is only meant for cross-checking.
    """
    lower, upper = float(inst.lower), float(inst.upper)
    if method == "golden":
        return _golden(inst, lower, upper)
    if method != "roots":
        raise ValueError(f"unknown method {method!r}")

    candidates = [lower, upper]
    if lower < 0.0 < upper:
        candidates.append(0.0)
    for r in poly_real_roots(derivative_poly(inst)):
        if lower < r < upper and np.all(1.0 + r * inst.gamma > 0.0):
            candidates.append(_polish(inst, float(r), lower, upper))
    candidates = [d for d in candidates if np.all(1.0 + d * inst.gamma > 0.0)]
    values = [subproblem_value(inst, d) for d in candidates]
    # relative tie band: an absolute one would discard real decreases of tiny steps
    scales = [_value_scale(inst, d) for d in candidates]
    d_star = pick_candidate(candidates, values, lower, upper, scales)
    return d_star, values[candidates.index(d_star)]


def _golden(inst, lower, upper, tol=1e-12, max_iter=200):
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    lo, hi = lower, upper
    # stay strictly inside the log domain
    lo_dom = max((-1.0 / g for g in inst.gamma if g > 0), default=-np.inf)
    if lo <= lo_dom:
        lo = lo_dom + 1e-15 * max(1.0, abs(lo_dom))
    x1 = hi - invphi * (hi - lo)
    x2 = lo + invphi * (hi - lo)
    f1, f2 = subproblem_value(inst, x1), subproblem_value(inst, x2)
    for _ in range(max_iter):
        if hi - lo < tol:
            break
        if f1 < f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - invphi * (hi - lo)
            f1 = subproblem_value(inst, x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + invphi * (hi - lo)
            f2 = subproblem_value(inst, x2)
    cands = [c for c in (lower, upper, 0.0, 0.5 * (lo + hi)) if lower <= c <= upper
             and np.all(1.0 + c * inst.gamma > 0.0)]
    vals = [subproblem_value(inst, c) for c in cands]
    d = pick_candidate(cands, vals, lower, upper, [_value_scale(inst, c) for c in cands])
    return d, vals[cands.index(d)]
