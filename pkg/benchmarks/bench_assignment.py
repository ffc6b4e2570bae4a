"""Time the assignment solver backends on random dense cost matrices.

    python benchmarks/bench_assignment.py --sizes 32 64 128 256 --repeats 5

Reports the median wall time per solve. scipy's solver is timed as a
reference when it is installed; it is not used by the package.
"""
import argparse
import time

import numpy as np

from countflow import assignment
from countflow.coupling import cost_matrix


def _median_time(fn, cost, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn(cost)
        times.append(time.perf_counter() - start)
    return float(np.median(times))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128, 256])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    solvers = {"python": lambda c: assignment.solve_assignment(c, "python")}
    if assignment.BACKEND == "compiled":
        solvers["compiled"] = lambda c: assignment.solve_assignment(c, "compiled")
    try:
        from scipy.optimize import linear_sum_assignment

        solvers["scipy (reference)"] = linear_sum_assignment
    except ImportError:
        pass

    rng = np.random.default_rng(args.seed)
    print(f"default backend: {assignment.BACKEND}")
    print(f"{'B':>6} " + " ".join(f"{name:>18}" for name in solvers) + "   speedup")
    for n in args.sizes:
        # the workload that training sees: symmetric Poisson costs of count batches
        cost = cost_matrix(rng.integers(0, 100, (n, 2)), rng.integers(0, 100, (n, 2)))
        perms = {name: fn(cost) for name, fn in solvers.items() if "scipy" not in name}
        ref = next(iter(perms.values()))
        assert all(np.array_equal(p, ref) for p in perms.values()), "backends disagree"
        times = {name: _median_time(fn, cost, args.repeats) for name, fn in solvers.items()}
        speedup = times["python"] / times["compiled"] if "compiled" in times else float("nan")
        row = " ".join(f"{1e3 * t:15.2f} ms" for t in times.values())
        print(f"{n:>6} {row}   {speedup:6.1f}x")


if __name__ == "__main__":
    main()
