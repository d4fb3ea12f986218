"""Compare the compiled and pure-Python coordinate passes.

Each backend gets identical copies of a warm state (a few random-CD passes
in) and sweeps every coordinate once. Prints time per pass, the speedup and
the largest difference between the two resulting iterates.

    python benchmarks/bench_backends.py --N 100 --L 20 --repeats 5
"""

import argparse
import logging
import time

import numpy as np

from covact import ScenarioConfig, SolverConfig, SolverState, generate, random_cd
from covact import _backend
from covact.solvers import RESYM_EVERY


def warm_state(N, K, L, M, seed):
    scn, _, obs = generate(ScenarioConfig(N=N, K=K, L=L, M=M, seed=seed))
    state = SolverState.from_scenario(scn, obs)
    random_cd(state, SolverConfig(max_outer_iters=2, seed=seed, backend="python"))
    return state


def one_pass(kernel, state, coords):
    st = state.copy()
    t0 = time.perf_counter()
    kernel.coordinate_pass(st.a, st.inv_covs, st.resid_covs, st.sample_covs, st.sig_rows,
                           st.gains, coords, 1e-12, RESYM_EVERY, st.updates_since_resym)
    return time.perf_counter() - t0, st.a


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--N", type=int, default=100)
    p.add_argument("--L", type=int, default=20)
    p.add_argument("--M", type=int, default=64)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    logging.getLogger("covact").setLevel(logging.ERROR)

    names = _backend.available()
    print(f"backends available: {', '.join(names)}")
    state = warm_state(args.N, args.N // 10, args.L, args.M, args.seed)
    coords = np.random.default_rng(args.seed).permutation(state.size)

    best, finals = {}, {}
    for name in names:
        kernel = _backend.get(name)
        times = []
        for _ in range(args.repeats):
            dt, a = one_pass(kernel, state, coords)
            times.append(dt)
        best[name], finals[name] = min(times), a
        print(f"{name:>7}: {best[name] * 1e3:9.2f} ms per pass over {state.size} coordinates")

    if len(names) == 2:
        gap = np.abs(finals["cython"] - finals["python"]).max()
        print(f"speedup cython/python: {best['python'] / best['cython']:.1f}x, "
              f"max |a_cython - a_python| = {gap:.2e}")


if __name__ == "__main__":
    main()
