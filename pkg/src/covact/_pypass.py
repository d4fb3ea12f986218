"""Pure NumPy coordinate pass (fallback for the compiled kernel)."""

import time

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import RootFindingFailure
from .linalg import SINGULAR_UPDATE_TOL
from .subproblem import SubproblemInstance, solve_subproblem

BACKEND = "python"
REFRESH_TOL = 1e-2


def coordinate_pass(a, inv_covs, resid_covs, sample_covs, sig_rows, gains, coords,
                    update_threshold, resym_every, resym_counter, refresh_tol=REFRESH_TOL):
    """Update each coordinate in ``coords`` once, in order, in place.

    ``resid_covs[j]`` holds ``Sigma_j(a) - Sigma_hat_j`` and is kept current
    alongside ``inv_covs``. A rank-one update whose denominator
    ``1 + coef*c1`` falls below ``refresh_tol`` would amplify rounding by
    ``1/denom``; that inverse is rebuilt from ``resid_covs[j] + sample_covs[j]``
    instead.

    Returns ``(successful, unnecessary, skipped, objective_delta,
    t_stats, t_rootfind, t_rank_one)``. Skipped coordinates (root finding
    failure or a singular update) also count as unnecessary, as do steps
    with ``|d| <= update_threshold``; those are still applied.
    """
    B = gains.shape[0]
    L = sig_rows.shape[1]
    successful = unnecessary = skipped = 0
    delta = 0.0
    t_stats = t_root = t_rank = 0.0
    V = np.empty((B, L), dtype=np.complex128)
    c1 = np.empty(B)
    rho = np.empty(B)
    clock = time.perf_counter
    for i in coords:
        t0 = clock()
        s = sig_rows[i]
        for j in range(B):
            V[j] = inv_covs[j] @ s
            c1[j] = np.vdot(s, V[j]).real
            rho[j] = np.vdot(V[j], resid_covs[j] @ V[j]).real
        g = gains[:, i]
        t1 = clock()
        t_stats += t1 - t0
        gam = g * c1
        inst = SubproblemInstance(gam, None, -a[i], 1.0 - a[i], rho=g * rho)
        try:
            d, val = solve_subproblem(inst)
        except RootFindingFailure:
            d = None
        t2 = clock()
        t_root += t2 - t1
        if d is None:
            skipped += 1
            unnecessary += 1
            continue
        # below the threshold the check counts as unnecessary, but a nonzero
        # step is still taken: stiff coordinates need steps under 1e-12
        minor = abs(d) <= update_threshold
        if d == 0.0:
            unnecessary += 1
            continue
        if d == inst.upper:
            new = 1.0
        elif d == inst.lower:
            new = 0.0
        else:
            new = min(max(a[i] + d, 0.0), 1.0)
        step = new - a[i]
        if step == 0.0:
            unnecessary += 1
            continue
        coef = step * g
        denom = 1.0 + coef * c1
        if np.any(denom <= SINGULAR_UPDATE_TOL):
            skipped += 1
            unnecessary += 1
            t_rank += clock() - t2
            continue
        a[i] = new
        ss = np.outer(s, s.conj())
        for j in range(B):
            resid_covs[j] += coef[j] * ss
            if denom[j] < refresh_tol:
                try:
                    inv_covs[j] = _hermitian_inverse(resid_covs[j] + sample_covs[j])
                    continue
                except np.linalg.LinAlgError:
                    pass
            inv_covs[j] -= (coef[j] / denom[j]) * np.outer(V[j], V[j].conj())
        if minor:
            unnecessary += 1
        else:
            successful += 1
        delta += val
        resym_counter[0] += 1
        if resym_every and resym_counter[0] >= resym_every:
            for j in range(B):
                inv_covs[j] = 0.5 * (inv_covs[j] + inv_covs[j].conj().T)
            resym_counter[0] = 0
        t_rank += clock() - t2
    return successful, unnecessary, skipped, delta, t_stats, t_root, t_rank


def _hermitian_inverse(A):
    c, low = cho_factor(A, lower=True, check_finite=False)
    X = cho_solve((c, low), np.eye(A.shape[0], dtype=A.dtype), check_finite=False)
    return 0.5 * (X + X.conj().T)
