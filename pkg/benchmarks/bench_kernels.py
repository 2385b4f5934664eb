"""Compare the numba kernels with the pure-numpy fallback.

The backend is fixed at import time, so each backend runs in its own
interpreter.  Usage::

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import json
import os
import subprocess
import sys

WORKLOAD = r"""
import json, sys, time
import numpy as np
from macopt import backend, kernels
from macopt.battery import DischargeModel, UserParams
from macopt.multi_user import MultiUserInstance, hybrid_sum_rate_multi
from macopt.program import sum_rate_program
from macopt.single_user import SingleUserProblem, brute_force_p1

repeat = int(sys.argv[1])
user = UserParams(1.25, 0.5, DischargeModel.quadratic(0.3))
prog, _ = sum_rate_program([user] * 3, 1.0, list(range(1, 8)))
x = prog.interior_start()

def best_of(fn):
    fn()  # warm-up (includes JIT compilation)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)

out = {
    "backend": backend(),
    "grid_p1 (2001x2001)": best_of(lambda: brute_force_p1(SingleUserProblem(user, 1.0), 2000)),
    "perspective_eval x1000": best_of(lambda: [prog.evaluate(x, True) for _ in range(1000)]),
    "hybrid U=3 solve": best_of(lambda: hybrid_sum_rate_multi(MultiUserInstance.identical(3, user))),
}
print(json.dumps(out))
"""


def run(disable: bool, repeat: int) -> dict:
    env = dict(os.environ)
    env.pop("MACOPT_DISABLE_NUMBA", None)
    if disable:
        env["MACOPT_DISABLE_NUMBA"] = "1"
    proc = subprocess.run([sys.executable, "-c", WORKLOAD, str(repeat)], env=env,
                          capture_output=True, text=True, check=True)
    return json.loads(proc.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    fast, plain = run(False, args.repeat), run(True, args.repeat)
    print(f"{'workload':<26}{fast['backend']:>12}{plain['backend']:>12}{'speed-up':>10}")
    for key in fast:
        if key == "backend":
            continue
        print(f"{key:<26}{fast[key]:>11.4f}s{plain[key]:>11.4f}s{plain[key] / fast[key]:>9.1f}x")


if __name__ == "__main__":
    main()
