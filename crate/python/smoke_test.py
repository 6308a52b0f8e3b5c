"""Smoke test for the Python bindings.

Build first:
    cargo build --release -p slobatch-py --features extension-module
then run:
    python3 python/smoke_test.py
"""

import importlib.util
import json
import math
import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DATA = os.path.join(ROOT, "data")


def load_module():
    lib = os.environ.get("SLOBATCH_PY_LIB")
    if lib is None:
        for name in ("libslobatch_py.so", "libslobatch_py.dylib", "slobatch_py.dll"):
            cand = os.path.join(ROOT, "target", "release", name)
            if os.path.exists(cand):
                lib = cand
                break
    if lib is None:
        sys.exit("extension not built; see the docstring")
    # the interpreter wants the module's own name on the shared object
    tmp = tempfile.mkdtemp()
    ext = ".pyd" if lib.endswith(".dll") else ".so"
    dst = os.path.join(tmp, "slobatch_py" + ext)
    shutil.copy(lib, dst)
    spec = importlib.util.spec_from_file_location("slobatch_py", dst)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def main():
    sb = load_module()
    profile = sb.Profile.load(os.path.join(DATA, "vgg19_profile.json"))

    avg, mx = profile.predict("cpu", 0.5, 1)
    assert abs(avg - (7.5581 * math.exp(-0.5 / 0.7) + 0.3)) < 1e-12
    assert mx >= avg
    avg, mx = profile.predict("gpu", 6, 8)
    assert abs(avg - 4 * 0.31) < 1e-12

    # equal timeouts collapse to the common value
    assert sb.equivalent_timeout([(3.0, 0.4), (7.0, 0.4)]) == 0.4
    # two-slice job on a 4-unit share, worst phase
    assert abs(sb.gpu_slice_completion(0.04, 4, 24, 0.005, 0.02) - 0.24) < 1e-12

    xi1, xi2, _ = sb.fit_gpu([(1, 0.05), (4, 0.125)])
    assert abs(xi1 - 0.025) < 1e-12 and abs(xi2 - 0.025) < 1e-12

    with open(os.path.join(DATA, "table1_workload.json")) as f:
        wl = json.load(f)
    apps = [(a["id"], a["slo_seconds"], a["rate_rps"]) for a in wl["apps"]]
    costs = {}
    for strategy in ("harmony", "mbs+", "batch"):
        plan = json.loads(sb.provision(profile, apps, strategy))
        costs[strategy] = plan["result"]["total_cost"]
    assert costs["harmony"] <= costs["mbs+"] <= costs["batch"], costs

    plan = sb.provision(profile, apps)
    report = json.loads(sb.simulate(profile, plan, duration=300.0, seed=1))
    assert report["totals"]["requests"] > 0
    assert report["totals"]["violations"] == 0

    try:
        sb.provision(profile, [("x", 0.01, 5.0)])
    except RuntimeError as e:
        assert "x" in str(e)
    else:
        raise AssertionError("expected an infeasible workload")

    print("plans:", json.loads(plan)["plans"])
    print("costs:", {k: f"{v:.4e}" for k, v in costs.items()})
    print("python smoke test passed")


if __name__ == "__main__":
    main()
