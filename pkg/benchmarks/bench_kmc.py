"""Compare the compiled and pure-Python KMC kernels on the same plan and seed.

    python3 benchmarks/bench_kmc.py [--L 256] [--horizon 500] [--repeat 3]

Both kernels consume the PCG64 stream in the same order, so the final
configuration, currents and proposal counts must agree exactly; the script
exits non-zero if they do not.
"""

import argparse
import sys
import time

import numpy as np

from kpzlattice.kmc import KERNELS, SimulationPlan, simulate
from kpzlattice.lattice import speed_change


def timed(plan, backend, repeat):
    best, rec = float("inf"), None
    for _ in range(repeat):
        start = time.perf_counter()
        rec = simulate(plan, np.random.default_rng(plan.seed), backend=backend)
        best = min(best, time.perf_counter() - start)
    return best, rec


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--L", type=int, default=256)
    p.add_argument("--horizon", type=float, default=500.0)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=1)
    args = p.parse_args(argv)
    if "compiled" not in KERNELS:
        print("compiled kernel not built; run `pip install -e . --no-build-isolation`")
        return 1
    plan = SimulationPlan(speed_change(0.3), L=args.L, horizon=args.horizon, rho=0.4, gamma=0.1,
                          times=tuple(np.linspace(0, args.horizon, 6)), seed=args.seed)
    t_py, rec_py = timed(plan, "python", args.repeat)
    t_c, rec_c = timed(plan, "compiled", args.repeat)
    same = (np.array_equal(rec_py.snapshots, rec_c.snapshots) and np.array_equal(rec_py.currents, rec_c.currents)
            and rec_py.proposals == rec_c.proposals and rec_py.accepted == rec_c.accepted)
    n = rec_c.proposals
    print(f"plan: speed_change(0.3), L={args.L}, horizon={args.horizon}, {n} proposals")
    print(f"python   : {t_py:8.4f} s  ({n / t_py:12.0f} proposals/s)")
    print(f"compiled : {t_c:8.4f} s  ({n / t_c:12.0f} proposals/s)")
    print(f"speed-up : {t_py / t_c:8.1f}x")
    print(f"identical trajectories: {same}")
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
