import json
import os
import subprocess
import sys

import numpy as np
import pytest

from macopt import kernels
from macopt.battery import DischargeModel

SCRIPT = """
import json
from macopt import backend
from macopt.battery import DischargeModel, UserParams
from macopt.multi_user import MultiUserInstance, hybrid_sum_rate_multi
from macopt.single_user import SingleUserProblem, brute_force_p1
u = UserParams(1.25, 0.5, DischargeModel.quadratic(0.3))
h = hybrid_sum_rate_multi(MultiUserInstance.identical(3, u))[0]
b = brute_force_p1(SingleUserProblem(u, 1.0), 400).rate
print(json.dumps({"backend": backend(), "hybrid": h, "grid": b}))
"""


def run(disable):
    env = dict(os.environ)
    env.pop("MACOPT_DISABLE_NUMBA", None)
    if disable:
        env["MACOPT_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True,
                         text=True, check=True).stdout
    return json.loads(out)


def test_numpy_fallback_matches_numba():
    plain, fast = run(True), run(False)
    assert plain["backend"] == "numpy"
    assert fast["backend"] in ("numba", "numpy")
    assert plain["hybrid"] == pytest.approx(fast["hybrid"], abs=1e-9)
    assert plain["grid"] == pytest.approx(fast["grid"], abs=1e-12)


@pytest.mark.parametrize("model", [
    DischargeModel.quadratic(0.4),
    DischargeModel.tabulated([(0, 0), (1, 0.9), (2, 1.5), (3, 1.7)]),
])
def test_grid_kernels_agree(model):
    kind, a, xs, ys = model.kernel_params()
    args = (kind, a, xs, ys, xs.shape[0], 1.3, 0.2, 0.0, 1.0, 301, 0.0, 3.0, 301)
    loop = kernels._grid_p1_loop(*args)
    vec = kernels._grid_p1_numpy(*args)
    assert loop[0] == pytest.approx(vec[0], abs=1e-12)
    assert loop[1:] == pytest.approx(vec[1:], abs=1e-12)


def test_ldp_projection_is_feasible():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(6, 4))
    b = np.abs(rng.normal(size=6))
    y = 3 * rng.normal(size=4)
    x, ok = kernels.project_ldp(A, b, y)
    assert ok and np.all(A @ x <= b + 1e-9)
    # small moves toward y leave the set or do not shorten the distance
    for _ in range(50):
        z = x + 1e-3 * rng.normal(size=4)
        if np.all(A @ z <= b):
            assert np.linalg.norm(z - y) >= np.linalg.norm(x - y) - 1e-9
