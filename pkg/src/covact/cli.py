"""``covact`` command line: generate | solve | bench | roc.

Every subcommand takes an optional INI spec file with sections
``[scenario]``, ``[solver]`` and ``[experiment]``; any key can be overridden
with ``--section.key=value``. Progress goes to stderr.
"""

import argparse
import configparser
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import metrics
from .errors import CovactError
from .mle import SolverState
from .scenario import ScenarioConfig, coerce_value, generate, load_scenario, save_scenario
from .solvers import SOLVERS, DeltaSchedule, SolverConfig, Termination

log = logging.getLogger("covact")

RESULT_HEADER = ["experiment", "trial", "algorithm", "N", "K", "L", "M", "threshold", "pm", "pfa",
                 "wall_time_s", "iterations", "successful_updates", "unnecessary_checks",
                 "final_residual"]
BENCH_HEADER = ["experiment", "algorithm", "N", "K", "L", "M", "trials", "mean_time_s",
                "std_time_s", "mean_updates", "mean_checks"]
ALGORITHMS = ("random-cd", "active-set-cd")
SECTIONS = ("scenario", "solver", "experiment")


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: ScenarioConfig = ScenarioConfig()
    solver: SolverConfig = SolverConfig()
    name: str = "run"
    trials: int = 1
    sweep: tuple = ()
    thresholds: tuple = (0.5,)
    output_dir: str = "."
    algorithms: tuple = ALGORITHMS
    traces: bool = False
    scenario_dir: str = ""
    pooled: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise SpecError("experiment.trials must be >= 1")
        for n, k, l in self.sweep:
            if not 0 <= k <= n or l < 1:
                raise SpecError(f"bad sweep point N={n} K={k} L={l}")
        for alg in self.algorithms:
            if alg not in ALGORITHMS:
                raise SpecError(f"unknown algorithm {alg!r}")


# ---------------------------------------------------------------- spec parsing

def derived_seed(master, trial):
    """64-bit seed of ``trial``; independent of how many trials there are."""
    ss = np.random.SeedSequence(int(master), spawn_key=(int(trial),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _parse_list(raw, conv):
    return tuple(conv(x.strip()) for x in raw.replace(";", ",").split(",") if x.strip())


def parse_thresholds(raw):
    """``"0.1, 0.5"`` or ``"start:stop:count"`` (inclusive linspace)."""
    raw = raw.strip()
    if raw.count(":") == 2 and "," not in raw:
        a, b, n = raw.split(":")
        return tuple(float(x) for x in np.linspace(float(a), float(b), int(n)))
    return _parse_list(raw, float)


def parse_sweep(raw):
    """``"100:10:15, 200:20:20"`` -> ((100, 10, 15), (200, 20, 20))."""
    out = []
    for item in _parse_list(raw, str):
        parts = item.split(":")
        if len(parts) != 3:
            raise SpecError(f"sweep entries are N:K:L, got {item!r}")
        out.append(tuple(int(p) for p in parts))
    return tuple(out)


_SCHEDULE_KEYS = ("boundary_scale", "boundary_decay", "interior_decay", "interior_fraction")


def _solver_config(values):
    values = dict(values)
    sched = {"kind": values.pop("delta_schedule", "standard")}
    for key in _SCHEDULE_KEYS:
        if key in values:
            sched[key] = float(values.pop(key))
    kinds = {"epsilon": float, "max_outer_iters": int, "update_threshold": float,
             "seed": int, "backend": str}
    kw = {}
    for key, raw in values.items():
        if key not in kinds:
            raise SpecError(f"unknown solver key {key!r}")
        kw[key] = kinds[key](raw) if kinds[key] is str else coerce_value(raw, kinds[key].__name__)
    return SolverConfig(delta_schedule=DeltaSchedule(**sched), **kw)


def _experiment_kw(values):
    conv = {"name": str, "trials": int, "output_dir": str, "scenario_dir": str,
            "traces": lambda r: coerce_value(r, "bool"), "pooled": lambda r: coerce_value(r, "bool"),
            "sweep": parse_sweep, "thresholds": parse_thresholds,
            "algorithms": lambda r: _parse_list(r, str)}
    kw = {}
    for key, raw in values.items():
        if key not in conv:
            raise SpecError(f"unknown experiment key {key!r}")
        kw[key] = conv[key](raw)
    return kw


def split_overrides(extra):
    """``["--scenario.N=50", "--solver.epsilon", "1e-4"]`` -> {(section, key): value}."""
    out = {}
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--") or "." not in tok.split("=", 1)[0]:
            raise SpecError(f"unrecognized argument {tok!r} (overrides are --section.key=value)")
        name, eq, value = tok[2:].partition("=")
        if not eq:
            value = next(it, None)
            if value is None:
                raise SpecError(f"missing value for --{name}")
        section, _, key = name.partition(".")
        if section not in SECTIONS or not key:
            raise SpecError(f"unknown override --{name}")
        out[(section, key.replace("-", "_"))] = value
    return out


def load_spec(path=None, overrides=None):
    """Read the INI file (if any), apply overrides, build an :class:`ExperimentSpec`."""
    cp = configparser.ConfigParser(delimiters=("=",), interpolation=None)
    cp.optionxform = str
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise OSError(f"cannot read spec file {path}: {exc.strerror or exc}") from exc
        except configparser.Error as exc:
            raise SpecError(f"{path}: {exc}") from exc
    unknown = set(cp.sections()) - set(SECTIONS)
    if unknown:
        raise SpecError(f"unknown spec section(s): {', '.join(sorted(unknown))}")
    vals = {s: dict(cp[s]) if cp.has_section(s) else {} for s in SECTIONS}
    for (section, key), value in (overrides or {}).items():
        vals[section][key] = value
    try:
        scenario = ScenarioConfig.from_mapping(vals["scenario"])
        solver = _solver_config(vals["solver"])
        return ExperimentSpec(scenario=scenario, solver=solver, **_experiment_kw(vals["experiment"]))
    except SpecError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise SpecError(f"invalid spec: {exc}") from exc


# ---------------------------------------------------------------- trials

def worker_count():
    raw = os.environ.get("COVACT_THREADS", "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise SpecError(f"COVACT_THREADS must be an integer, got {raw!r}") from None
        return max(1, n)
    return os.cpu_count() or 1


def parallel_map(fn, items, workers=None):
    """Ordered map over independent items, in worker processes when ``workers > 1``."""
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as ex:
        return list(ex.map(fn, items))


def trial_config(spec, trial, **dims):
    return replace(spec.scenario, seed=derived_seed(spec.scenario.seed, trial), **dims)


def scenario_path(directory, trial):
    return Path(directory) / f"scenario_{trial:04d}.bin"


def _instance(spec, trial, dims):
    if spec.scenario_dir:
        path = scenario_path(spec.scenario_dir, trial)
        if path.exists():
            return load_scenario(path)
    return generate(trial_config(spec, trial, **dims))


@dataclass
class TrialOutcome:
    trial: int
    algorithm: str
    a: np.ndarray = None
    truth: np.ndarray = None
    report: object = None
    error: str = ""
    dims: dict = field(default_factory=dict)

    @property
    def ok(self):
        return not self.error and self.report.terminated_by is Termination.RESIDUAL


def run_trial(job):
    """Solve one (spec, trial, dims) instance with each requested algorithm."""
    spec, trial, dims = job
    try:
        scn, truth, obs = _instance(spec, trial, dims)
    except (CovactError, OSError) as exc:
        return [TrialOutcome(trial, alg, error=str(exc), dims=dims) for alg in spec.algorithms]
    cfg = scn.config
    dims = {"N": cfg.N, "K": cfg.K, "L": cfg.L, "M": cfg.M}
    solver_cfg = replace(spec.solver, seed=derived_seed(spec.solver.seed, trial))
    out = []
    for alg in spec.algorithms:
        try:
            state = SolverState.from_scenario(scn, obs)
            a, rep = SOLVERS[alg](state, solver_cfg)
            out.append(TrialOutcome(trial, alg, a.copy(), truth.active.copy(), rep, dims=dims))
        except CovactError as exc:
            out.append(TrialOutcome(trial, alg, error=f"{type(exc).__name__}: {exc}", dims=dims))
    return out


# ---------------------------------------------------------------- output

def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def write_csv(header, rows, path=None, stream=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(row.get(h)) for h in header])
    text = buf.getvalue()
    if stream is not None:
        stream.write(text)
        stream.flush()
        return
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    log.info("wrote %s", path)


def write_trace(spec, outcome):
    path = Path(spec.output_dir) / "traces" / f"{spec.name}_{outcome.algorithm}_trial{outcome.trial:04d}.json"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(outcome.report.trace_dict()), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _result_row(spec, o, threshold, pm, pfa):
    row = {"experiment": spec.name, "trial": o.trial, "algorithm": o.algorithm,
           "threshold": float(threshold), "pm": pm, "pfa": pfa, **o.dims}
    if o.report is not None:
        r = o.report
        row.update(wall_time_s=r.wall_time_total, iterations=r.iterations,
                   successful_updates=r.successful_updates,
                   unnecessary_checks=r.unnecessary_checks, final_residual=float(r.final_residual))
    return row


def _report_failures(outcomes):
    bad = 0
    for o in outcomes:
        if o.error:
            log.error("trial %d %s failed: %s", o.trial, o.algorithm, o.error)
            bad += 1
        elif not o.ok:
            log.warning("trial %d %s stopped at the iteration cap", o.trial, o.algorithm)
            bad += 1
    return bad


def _output(spec, args, kind):
    return None if args.stdout else Path(spec.output_dir) / f"{spec.name}_{kind}.csv"


# ---------------------------------------------------------------- commands

def cmd_generate(spec, args=None):
    out_dir = Path(spec.scenario_dir or spec.output_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out_dir}: {exc.strerror or exc}") from exc
    paths = []
    for t in range(spec.trials):
        scn, truth, obs = generate(trial_config(spec, t))
        path = scenario_path(out_dir, t)
        save_scenario(path, scn, truth, obs)
        paths.append(path)
        log.info("trial %d -> %s", t, path)
    return 0, paths


def _solve_outcomes(spec):
    jobs = [(spec, t, {}) for t in range(spec.trials)]
    outcomes = [o for group in parallel_map(run_trial, jobs) for o in group]
    log.info("solved %d trial(s)", spec.trials)
    return outcomes


def cmd_solve(spec, args=None):
    args = args or argparse.Namespace(stdout=False)
    outcomes = _solve_outcomes(spec)
    rows = []
    for o in outcomes:
        if o.error:
            rows.extend(_result_row(spec, o, th, None, None) for th in spec.thresholds)
            continue
        for th, pm, pfa in metrics.roc_sweep(o.a, o.truth, sorted(spec.thresholds)):
            rows.append(_result_row(spec, o, th, pm, pfa))
        if spec.traces:
            write_trace(spec, o)
    write_csv(RESULT_HEADER, rows, _output(spec, args, "results"), sys.stdout if args.stdout else None)
    return (1 if _report_failures(outcomes) else 0), rows


def cmd_roc(spec, args=None):
    """Per-threshold (pm, pfa) averaged over trials; ``trial`` is -1 on these rows."""
    args = args or argparse.Namespace(stdout=False)
    outcomes = _solve_outcomes(spec)
    ths = sorted(spec.thresholds)
    rows = []
    for alg in spec.algorithms:
        good = [o for o in outcomes if o.algorithm == alg and not o.error]
        if spec.traces:
            for o in good:
                write_trace(spec, o)
        if not good:
            continue
        sweeps = [metrics.roc_sweep(o.a, o.truth, ths) for o in good]
        agg = metrics.aggregate(sweeps, pooled=spec.pooled, truths=[o.truth for o in good])
        means = {k: float(np.mean([getattr(o.report, a) for o in good]))
                 for k, a in (("wall_time_s", "wall_time_total"), ("iterations", "iterations"),
                              ("successful_updates", "successful_updates"),
                              ("unnecessary_checks", "unnecessary_checks"),
                              ("final_residual", "final_residual"))}
        for th, pm, pfa in agg:
            rows.append({"experiment": spec.name, "trial": -1, "algorithm": alg, "threshold": th,
                         "pm": pm, "pfa": pfa, **good[0].dims, **means})
    write_csv(RESULT_HEADER, rows, _output(spec, args, "roc"), sys.stdout if args.stdout else None)
    return (1 if _report_failures(outcomes) else 0), rows


def cmd_bench(spec, args=None):
    """Timed sweep; trials run one after another in this process."""
    args = args or argparse.Namespace(stdout=False)
    if not spec.sweep:
        raise SpecError("bench needs experiment.sweep (N:K:L, ...)")
    rows = []
    failures = 0
    for n, k, l in spec.sweep:
        dims = {"N": n, "K": k, "L": l}
        outcomes = [o for t in range(spec.trials) for o in run_trial((spec, t, dims))]
        failures += _report_failures(outcomes)
        for alg in spec.algorithms:
            good = [o for o in outcomes if o.algorithm == alg and not o.error]
            if spec.traces:
                for o in good:
                    write_trace(spec, o)
            times = np.array([o.report.wall_time_total for o in good])
            rows.append({"experiment": spec.name, "algorithm": alg, "N": n, "K": k, "L": l,
                         "M": spec.scenario.M, "trials": len(good),
                         "mean_time_s": float(times.mean()) if len(good) else math.nan,
                         "std_time_s": float(times.std(ddof=1)) if len(good) > 1 else 0.0,
                         "mean_updates": float(np.mean([o.report.successful_updates for o in good]))
                         if good else math.nan,
                         "mean_checks": float(np.mean([o.report.unnecessary_checks for o in good]))
                         if good else math.nan})
            log.info("N=%d K=%d L=%d %s: %.3fs mean over %d trial(s)", n, k, l, alg,
                     rows[-1]["mean_time_s"], len(good))
    write_csv(BENCH_HEADER, rows, _output(spec, args, "bench"), sys.stdout if args.stdout else None)
    return (1 if failures else 0), rows


COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "bench": cmd_bench, "roc": cmd_roc}


def build_parser():
    p = argparse.ArgumentParser(
        prog="covact", description="Covariance-based activity detection experiments.",
        epilog="Any spec key can be overridden with --section.key=value, "
               "e.g. --scenario.N=100 --solver.epsilon=1e-4.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("generate", "write scenario files, one per trial"),
                        ("solve", "run the detectors, write per-trial results"),
                        ("bench", "timed sweep over (N, K, L)"),
                        ("roc", "trial-averaged miss / false-alarm curves")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("spec", nargs="?", help="INI spec file")
        sp.add_argument("--algorithm", choices=ALGORITHMS + ("both",),
                        help="restrict to one algorithm (default: experiment.algorithms)")
        sp.add_argument("--stdout", action="store_true", help="write the CSV to standard output")
        sp.add_argument("--traces", action="store_true", help="write per-run JSON traces")
        sp.add_argument("-q", "--quiet", action="store_true", help="only report problems")
    return p


def main(argv=None):
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        spec = load_spec(args.spec, split_overrides(extra))
        if args.algorithm and args.algorithm != "both":
            spec = replace(spec, algorithms=(args.algorithm,))
        if args.traces:
            spec = replace(spec, traces=True)
        code, _ = COMMANDS[args.command](spec, args)
    except SpecError as exc:
        print(f"covact: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"covact: error: {exc}", file=sys.stderr)
        return 1
    except CovactError as exc:
        print(f"covact: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return code


if __name__ == "__main__":
    sys.exit(main())
