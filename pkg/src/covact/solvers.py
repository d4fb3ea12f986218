"""Random permuted coordinate descent and active-set coordinate descent.

Both detectors start from ``a = 0`` (``Sigma_b^{-1} = I / noise_var``),
update coordinates by exact interval minimization and keep the inverses
current with rank-one updates. They stop when the projected-gradient
residual ``||Proj(a - grad) - a||_2`` drops below ``epsilon``.
"""

import enum
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .mle import gradient, objective, optimality_residual

log = logging.getLogger(__name__)

RESYM_EVERY = 500


class Termination(str, enum.Enum):
    RESIDUAL = "Residual"
    ITER_CAP = "IterCap"


@dataclass(frozen=True)
class DeltaSchedule:
    """Threshold schedule for the active-set selection.

    ``kind="standard"`` uses ``boundary_scale * boundary_decay**-k`` times the
    largest gradient magnitude of each boundary class, and
    ``max(interior_decay**-k, eps / sqrt(interior_fraction * BN))`` for
    interior coordinates. ``kind="custom"`` applies the same formula with
    the given parameters; ``kind="zero"`` selects every violating coordinate.
    """

    kind: str = "standard"
    boundary_scale: float = 1e-2
    boundary_decay: float = 10.0
    interior_decay: float = 5.0
    interior_fraction: float = 0.3

    def __post_init__(self):
        if self.kind not in ("standard", "zero", "custom"):
            raise ValueError(f"unknown delta schedule {self.kind!r}")


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float = 1e-3
    max_outer_iters: int = 500
    update_threshold: float = 1e-12
    seed: int = 0
    delta_schedule: DeltaSchedule = DeltaSchedule()
    backend: str = "auto"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")


@dataclass
class SolverReport:
    algorithm: str
    iterations: int = 0
    final_residual: float = math.nan
    objective_trace: list = field(default_factory=list)
    tracked_objective_trace: list = field(default_factory=list)
    residual_trace: list = field(default_factory=list)
    active_set_sizes: list = field(default_factory=list)
    delta_norms: list = field(default_factory=list)
    delta_limit: float = math.nan
    successful_updates: int = 0
    unnecessary_checks: int = 0
    skipped_updates: int = 0
    wall_time_total: float = 0.0
    cpu_time_total: float = 0.0
    wall_time_breakdown: dict = field(
        default_factory=lambda: {"stats": 0.0, "rootfind": 0.0, "rank_one": 0.0, "gradient": 0.0})
    terminated_by: Termination = Termination.ITER_CAP
    backend: str = ""
    seed: int = 0

    @property
    def subproblems_solved(self):
        return self.successful_updates + self.unnecessary_checks

    @property
    def schedule_monotone(self):
        """True when the recorded threshold norms never increase."""
        d = self.delta_norms
        return all(d[k + 1] <= d[k] * (1 + 1e-12) for k in range(len(d) - 1))

    def counters(self):
        return {"successful_updates": self.successful_updates,
                "unnecessary_checks": self.unnecessary_checks,
                "subproblems_solved": self.subproblems_solved,
                **{f"time_{k}": v for k, v in self.wall_time_breakdown.items()}}

    def trace_dict(self):
        return {"objective": list(map(float, self.objective_trace)),
                "residual": list(map(float, self.residual_trace)),
                "active_set_size": list(map(int, self.active_set_sizes)),
                "delta_norm": list(map(float, self.delta_norms)),
                "terminated_by": self.terminated_by.value,
                "seed": int(self.seed),
                "iterations": self.iterations,
                "successful_updates": self.successful_updates,
                "unnecessary_checks": self.unnecessary_checks,
                "wall_time_s": self.wall_time_total,
                "cpu_time_s": self.cpu_time_total}


# ---------------------------------------------------------------- active set rule

def delta_schedule(k, a, grad, epsilon, B, N, schedule=DeltaSchedule()):
    """Per-coordinate thresholds for outer iteration ``k``.

    An empty boundary class has no maximum; its entries would be unused,
    they are set to 0.
    """
    a = np.asarray(a)
    grad = np.asarray(grad)
    delta = np.zeros(a.shape[0])
    if schedule.kind == "zero":
        return delta
    at0 = a == 0.0
    at1 = a == 1.0
    inner = ~(at0 | at1)
    scale = schedule.boundary_scale * schedule.boundary_decay ** (-k)
    for mask in (at0, at1):
        if mask.any():
            delta[mask] = scale * np.abs(grad[mask]).max()
    delta[inner] = max(schedule.interior_decay ** (-k),
                       epsilon / math.sqrt(schedule.interior_fraction * B * N))
    return delta


def select_active_set(a, grad, delta):
    """Indices violating first-order optimality by more than ``delta`` (strictly)."""
    a = np.asarray(a)
    grad = np.asarray(grad)
    at0 = a == 0.0
    at1 = a == 1.0
    inner = ~(at0 | at1)
    sel = (at0 & (grad < -delta)) | (at1 & (grad > delta)) | (inner & (np.abs(grad) > delta))
    return np.flatnonzero(sel)


def _delta_limit(a, epsilon, B, N, schedule):
    """k -> infinity value of ||delta|| if the 0/1/interior partition of ``a`` froze."""
    if schedule.kind == "zero":
        return 0.0
    n_inner = int(np.count_nonzero((a > 0.0) & (a < 1.0)))
    return epsilon / math.sqrt(schedule.interior_fraction * B * N) * math.sqrt(n_inner)


# ---------------------------------------------------------------- drivers

class _Run:
    """Bookkeeping shared by both drivers."""

    def __init__(self, state, cfg, name):
        self.state = state
        self.cfg = cfg
        self.kernel = _backend.get(cfg.backend)
        self.report = SolverReport(algorithm=name, backend=self.kernel.BACKEND, seed=cfg.seed)
        self.rng = np.random.default_rng(cfg.seed)
        self.tracked = objective(state.a, state)
        self.grad = None

    def evaluate(self):
        t0 = time.perf_counter()
        self.state.refresh_residuals()
        self.grad = gradient(self.state)
        self.report.wall_time_breakdown["gradient"] += time.perf_counter() - t0
        res = optimality_residual(self.state.a, self.grad)
        self.report.residual_trace.append(res)
        self.report.objective_trace.append(objective(self.state.a, self.state))
        self.report.tracked_objective_trace.append(self.tracked)
        return res

    def run_pass(self, coords):
        st = self.state
        out = self.kernel.coordinate_pass(
            st.a, st.inv_covs, st.resid_covs, st.sample_covs, st.sig_rows, st.gains, coords,
            self.cfg.update_threshold, RESYM_EVERY, st.updates_since_resym)
        ok, unnecessary, skipped, delta, t_stats, t_root, t_rank = out
        r = self.report
        r.successful_updates += ok
        r.unnecessary_checks += unnecessary
        r.skipped_updates += skipped
        if skipped:
            log.warning("%s: skipped %d coordinate(s) (root finding or singular update)",
                        r.algorithm, skipped)
        r.wall_time_breakdown["stats"] += t_stats
        r.wall_time_breakdown["rootfind"] += t_root
        r.wall_time_breakdown["rank_one"] += t_rank
        self.tracked += delta
        r.iterations += 1


def random_cd(state, cfg=SolverConfig()):
    """Random permuted coordinate descent; returns ``(a, report)``.

    Each iteration sweeps all coordinates in a fresh random order, then
    checks the residual. ``state`` is updated in place.
    """
    t_wall, t_cpu = time.perf_counter(), time.process_time()
    run = _Run(state, cfg, "random-cd")
    rep = run.report
    run.evaluate()
    n = state.size
    while True:
        if rep.iterations >= cfg.max_outer_iters:
            rep.terminated_by = Termination.ITER_CAP
            break
        rep.active_set_sizes.append(n)
        run.run_pass(run.rng.permutation(n))
        if run.evaluate() < cfg.epsilon:
            rep.terminated_by = Termination.RESIDUAL
            break
    rep.final_residual = rep.residual_trace[-1]
    rep.wall_time_total = time.perf_counter() - t_wall
    rep.cpu_time_total = time.process_time() - t_cpu
    if rep.terminated_by is Termination.ITER_CAP:
        log.warning("random-cd hit the iteration cap (%d), residual %.3e",
                    cfg.max_outer_iters, rep.final_residual)
    return state.a, rep


def active_set_cd(state, cfg=SolverConfig(), B=None, N=None):
    """Active-set coordinate descent; returns ``(a, report)``.

    Iteration ``k`` computes the gradient at ``a^k`` once and uses it for
    the thresholds, the selection and the stopping test. The selected
    coordinates are swept once in random order. ``active_set_sizes[k]`` is
    the size of the set selected at ``a^k``; the last entry belongs to the
    terminating iterate.
    """
    t_wall, t_cpu = time.perf_counter(), time.process_time()
    run = _Run(state, cfg, "active-set-cd")
    rep = run.report
    B = state.B if B is None else B
    N = state.size // B if N is None else N
    res = run.evaluate()
    k = 0
    while True:
        delta = delta_schedule(k, state.a, run.grad, cfg.epsilon, B, N, cfg.delta_schedule)
        active = select_active_set(state.a, run.grad, delta)
        rep.active_set_sizes.append(int(active.size))
        rep.delta_norms.append(float(np.linalg.norm(delta)))
        # repeat ... until: the first sweep always happens
        if k >= 1 and res < cfg.epsilon:
            rep.terminated_by = Termination.RESIDUAL
            break
        if k >= cfg.max_outer_iters:
            rep.terminated_by = Termination.ITER_CAP
            break
        run.run_pass(run.rng.permutation(active))
        k += 1
        res = run.evaluate()
    rep.final_residual = res
    rep.delta_limit = _delta_limit(state.a, cfg.epsilon, B, N, cfg.delta_schedule)
    rep.wall_time_total = time.perf_counter() - t_wall
    rep.cpu_time_total = time.process_time() - t_cpu
    if rep.terminated_by is Termination.ITER_CAP:
        log.warning("active-set-cd hit the iteration cap (%d), residual %.3e",
                    cfg.max_outer_iters, rep.final_residual)
    if cfg.delta_schedule.kind == "standard" and not rep.schedule_monotone:
        d = rep.delta_norms
        k = next(k for k in range(len(d) - 1) if d[k + 1] > d[k] * (1 + 1e-12))
        log.warning("threshold norm increased at iteration %d (%.3e -> %.3e)", k + 1, d[k], d[k + 1])
    return state.a, rep


SOLVERS = {"random-cd": random_cd, "active-set-cd": active_set_cd}
