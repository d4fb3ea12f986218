import csv
import json
from pathlib import Path

import numpy as np
import pytest

from covact.cli import (BENCH_HEADER, RESULT_HEADER, SpecError, derived_seed, load_spec, main,
                        parse_sweep, parse_thresholds, split_overrides, worker_count)
from covact.scenario import load_scenario

SPECS = Path(__file__).resolve().parent.parent / "specs"

SMALL = ["--scenario.N=20", "--scenario.K=2", "--scenario.L=8", "--scenario.M=32"]


@pytest.fixture(autouse=True)
def _one_worker(monkeypatch):
    monkeypatch.setenv("COVACT_THREADS", "1")


def write_spec(path, text):
    path.write_text(text)
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def test_headers_are_fixed():
    assert ",".join(RESULT_HEADER) == ("experiment,trial,algorithm,N,K,L,M,threshold,pm,pfa,"
                                       "wall_time_s,iterations,successful_updates,"
                                       "unnecessary_checks,final_residual")
    assert ",".join(BENCH_HEADER) == ("experiment,algorithm,N,K,L,M,trials,mean_time_s,"
                                      "std_time_s,mean_updates,mean_checks")


def test_parsers():
    assert parse_thresholds("0:1:5") == (0.0, 0.25, 0.5, 0.75, 1.0)
    assert parse_thresholds("0.1, 0.5") == (0.1, 0.5)
    assert parse_sweep("100:10:15, 200:20:20") == ((100, 10, 15), (200, 20, 20))
    with pytest.raises(SpecError):
        parse_sweep("100:10")


def test_overrides():
    ov = split_overrides(["--scenario.N=50", "--solver.epsilon", "1e-4", "--experiment.trials=2"])
    assert ov == {("scenario", "N"): "50", ("solver", "epsilon"): "1e-4", ("experiment", "trials"): "2"}
    with pytest.raises(SpecError):
        split_overrides(["--bogus.key=1"])
    with pytest.raises(SpecError):
        split_overrides(["positional"])


def test_flags_win_over_file(tmp_path):
    p = write_spec(tmp_path / "s.ini", "[scenario]\nN = 40\nK = 4\n[solver]\nepsilon = 1e-2\n")
    spec = load_spec(p, split_overrides(["--scenario.N=60"]))
    assert spec.scenario.N == 60 and spec.scenario.K == 4 and spec.solver.epsilon == 1e-2


def test_spec_errors(tmp_path):
    with pytest.raises(SpecError):
        load_spec(write_spec(tmp_path / "a.ini", "[nonsense]\nx = 1\n"))
    with pytest.raises(SpecError):
        load_spec(write_spec(tmp_path / "b.ini", "[scenario]\nwidth = 3\n"))
    with pytest.raises(SpecError):
        load_spec(None, {("experiment", "trials"): "0"})
    with pytest.raises(SpecError):
        load_spec(None, {("scenario", "K"): "500", ("scenario", "N"): "10"})


def test_shipped_specs_load():
    for name in ("fig1_bench.ini", "fig2_roc.ini", "fig3_behavior.ini"):
        spec = load_spec(SPECS / name)
        assert spec.scenario.M == 64 and spec.scenario.B == 7
    assert load_spec(SPECS / "fig1_bench.ini").sweep == ((100, 10, 15), (200, 20, 20), (400, 40, 30))


def test_derived_seeds_are_stable():
    seeds = [derived_seed(5, t) for t in range(10)]
    assert len(set(seeds)) == 10
    assert seeds[:3] == [derived_seed(5, t) for t in range(3)]
    assert all(0 <= s < 2**64 for s in seeds)


def test_worker_count(monkeypatch):
    monkeypatch.setenv("COVACT_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.delenv("COVACT_THREADS")
    assert worker_count() >= 1
    monkeypatch.setenv("COVACT_THREADS", "many")
    with pytest.raises(SpecError):
        worker_count()


def test_generate_writes_one_file_per_trial(tmp_path):
    out = tmp_path / "scn"
    args = ["generate", "--experiment.trials=3", f"--experiment.output_dir={out}", "-q", *SMALL]
    assert main(args) == 0
    files = sorted(out.glob("scenario_*.bin"))
    assert [f.name for f in files] == ["scenario_0000.bin", "scenario_0001.bin", "scenario_0002.bin"]
    seeds = {load_scenario(f)[0].config.seed for f in files}
    assert len(seeds) == 3
    first = [f.read_bytes() for f in files]
    assert main(args) == 0
    assert [f.read_bytes() for f in files] == first


def test_generate_unwritable_dir(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    target = blocker / "sub"
    assert main(["generate", f"--experiment.output_dir={target}", "-q", *SMALL]) == 1
    assert str(target) in capsys.readouterr().err


def test_solve_row_accounting_and_traces(tmp_path):
    out = tmp_path / "o"
    code = main(["solve", "--traces", "--experiment.trials=5", "--experiment.thresholds=0.25,0.5,0.75",
                 f"--experiment.output_dir={out}", "--experiment.name=t", "-q", *SMALL])
    assert code == 0
    header, rows = read_csv(out / "t_results.csv")
    assert header == RESULT_HEADER
    for alg in ("random-cd", "active-set-cd"):
        assert sum(r[2] == alg for r in rows) == 5 * 3
    trace = json.loads((out / "traces" / "t_active-set-cd_trial0003.json").read_text())
    for key in ("objective", "residual", "active_set_size", "terminated_by", "seed"):
        assert key in trace
    # strict parser: every field of the numeric columns parses
    for r in rows:
        assert len(r) == len(header)
        float(r[7]), float(r[10]), int(r[11]), float(r[14])


def test_solve_reads_generated_scenarios(tmp_path):
    scn = tmp_path / "scn"
    main(["generate", "--experiment.trials=2", f"--experiment.output_dir={scn}", "-q", *SMALL])
    out = tmp_path / "o"
    assert main(["solve", "--experiment.trials=2", f"--experiment.scenario_dir={scn}",
                 f"--experiment.output_dir={out}", "-q", "--scenario.N=999", "--scenario.K=1"]) == 0
    _, rows = read_csv(out / "run_results.csv")
    assert {r[3] for r in rows} == {"20"}  # dims come from the files, not the overrides


def test_trivial_instance_pm_absent(tmp_path):
    out = tmp_path / "o"
    main(["solve", "--scenario.K=0", "--scenario.N=10", "--scenario.L=6", "--scenario.ideal=true",
          f"--experiment.output_dir={out}", "-q"])
    _, rows = read_csv(out / "run_results.csv")
    for r in rows:
        assert r[8] == "" and float(r[9]) == 0.0 and float(r[7]) == 0.5


def test_both_algorithms_agree_on_one_seed(tmp_path):
    out = tmp_path / "o"
    main(["solve", f"--experiment.output_dir={out}", "-q", "--experiment.thresholds=0:1:21", *SMALL])
    _, rows = read_csv(out / "run_results.csv")
    cd = {r[7]: (r[8], r[9]) for r in rows if r[2] == "random-cd"}
    ase = {r[7]: (r[8], r[9]) for r in rows if r[2] == "active-set-cd"}
    assert cd == ase


def test_roc_rows(tmp_path):
    out = tmp_path / "o"
    assert main(["roc", "--experiment.trials=3", "--experiment.thresholds=0:1:5",
                 f"--experiment.output_dir={out}", "-q", *SMALL]) == 0
    header, rows = read_csv(out / "run_roc.csv")
    assert header == RESULT_HEADER and len(rows) == 2 * 5
    assert all(r[1] == "-1" for r in rows)


def test_bench_single_trial_std_zero(tmp_path, capsys):
    assert main(["bench", "--stdout", "--experiment.sweep=20:2:8", "--scenario.M=32", "-q"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == ",".join(BENCH_HEADER)
    rows = list(csv.reader(lines[1:]))
    assert len(rows) == 2 and all(float(r[8]) == 0.0 for r in rows)


def test_bench_needs_sweep():
    assert main(["bench", "-q"]) == 2


def test_algorithm_flag(tmp_path):
    out = tmp_path / "o"
    main(["solve", "--algorithm", "active-set-cd", f"--experiment.output_dir={out}", "-q", *SMALL])
    _, rows = read_csv(out / "run_results.csv")
    assert {r[2] for r in rows} == {"active-set-cd"}


def test_iteration_cap_exit_code(tmp_path):
    out = tmp_path / "o"
    assert main(["solve", "--solver.max_outer_iters=1", "--solver.epsilon=1e-12",
                 f"--experiment.output_dir={out}", "-q", *SMALL]) == 1


def test_parallel_matches_sequential(tmp_path, monkeypatch):
    outs = []
    for threads in ("1", "2"):
        monkeypatch.setenv("COVACT_THREADS", threads)
        out = tmp_path / threads
        main(["solve", "--experiment.trials=3", f"--experiment.output_dir={out}", "-q", *SMALL])
        _, rows = read_csv(out / "run_results.csv")
        outs.append([[c for k, c in enumerate(r) if k != 10] for r in rows])
    assert outs[0] == outs[1]


def test_module_entry_point():
    import subprocess
    import sys
    r = subprocess.run([sys.executable, "-m", "covact", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "generate" in r.stdout
