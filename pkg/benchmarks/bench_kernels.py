#!/usr/bin/env python3
"""Time the hot kernels under numba and under the plain numpy fallback.

Each backend runs in its own interpreter because the switch
(SGPWGAN_DISABLE_NUMBA) is read at import time.  Usage:

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from sgpwgan import _accel
from sgpwgan._kernels import mlp, rk4
from sgpwgan._kernels.eig import eigvals_dense
from sgpwgan.nets import MLPDiscriminator

repeat = int(sys.argv[1])
rng = np.random.default_rng(0)
D = MLPDiscriminator(2, (64, 64, 64))
psi = D.init(1)
x = rng.normal(size=(256, 2))
v = rng.normal(size=(256, 2))
a = rng.normal(size=(120, 120))
x0 = np.array([1.0, 1.0])
prm = np.array([1.0, 1.0])

cases = {
    "mlp_forward_256": lambda: D.value(x, psi),
    "mlp_param_grad_256": lambda: D.grad_psi(x, psi),
    "mlp_mixed_grad_256": lambda: D.mixed_grad(x, psi, v),
    "eig_dense_120": lambda: eigvals_dense(a.copy(), 12000),
    "rk4_dirac_20k_steps": lambda: rk4.rk4_toy(rk4.DIRAC_CONST, prm, x0, 0.01, 200.0, np.zeros(2), 0.0, False, 1e6),
}
out = {"backend": _accel.backend_name(), "seconds": {}}
for name, fn in cases.items():
    t0 = time.perf_counter()
    fn()  # first call includes JIT compilation or cache load
    first = time.perf_counter() - t0
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    out["seconds"][name] = {"first": first, "best": best}
print(json.dumps(out))
"""


def run_backend(disable, repeat):
    env = dict(os.environ, SGPWGAN_DISABLE_NUMBA="1" if disable else "0")
    res = subprocess.run([sys.executable, "-c", WORKER, str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write the raw timings here")
    args = ap.parse_args()

    fast = run_backend(False, args.repeat)
    slow = run_backend(True, args.repeat)
    print(f"{'kernel':<24}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name in fast["seconds"]:
        a = fast["seconds"][name]["best"] * 1e3
        b = slow["seconds"][name]["best"] * 1e3
        print(f"{name:<24}{a:>12.3f}{b:>12.3f}{b / a:>9.1f}x")
    print(f"(backends: {fast['backend']} vs {slow['backend']}; best of {args.repeat}, first call excluded)")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"numba": fast, "numpy": slow}, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
