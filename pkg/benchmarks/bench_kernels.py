"""Time the hot kernels under numba and under the pure-numpy fallback.

Each backend runs in its own interpreter because the choice is made at
import time from ``CRAN2WAY_DISABLE_NUMBA``.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import json
import os
import subprocess
import sys
import time

WORKER = r"""
import json, sys, time
import numpy as np
from cran2way import _kernels
from cran2way.system import SystemConfig, sample_channel
from cran2way.uplink import optimize_uplink
from cran2way.downlink import ido

repeat = int(sys.argv[1])
rng = np.random.default_rng(7)
cfg = SystemConfig(L=2, K=4, snr_db=35, fronthaul=(4, 4))
H = rng.standard_normal((2, 4))
X = rng.uniform(0.5, 2.0, (41, 4))
Ar = np.array([[1.0, 0.0], [0.0, 1.0]])
V = np.array([[1.0, 1.0, 0.0, 0.0], [1.0, 1.0, 1.0, 1.0]])
Xd = rng.standard_normal((9, 4))
Minv = np.linalg.inv(np.diag([256.0, 256.0]) - np.eye(2))
Apsi = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
F = rng.standard_normal((3, 3))
G = F.T @ F

cases = {
    "uplink_batch (41 pts)": lambda: _kernels.uplink_batch(X, H, 790.0, 30.0, Ar, V, V != 0),
    "downlink_batch (9 pts)": lambda: _kernels.downlink_batch(
        Xd, H.T, Ar, Minv, np.array([True, True]), 790.0, Apsi),
    "lll_gram (3x3)": lambda: _kernels.lll_gram(G, np.eye(3, dtype=np.int64), 0.75),
}
out = {"backend": _kernels.BACKEND}
for name, fn in cases.items():
    fn()
    n = repeat
    t = time.perf_counter()
    for _ in range(n):
        fn()
    out[name] = (time.perf_counter() - t) / n

def pipeline(i):
    ch = sample_channel(cfg, 3, i)
    ul = optimize_uplink(cfg, ch.H_ul)
    ido(cfg, ch.H_dl, ul, 3, i)

pipeline(0)
t = time.perf_counter()
for i in range(1, 11):
    pipeline(i)
out["full pipeline (per realization)"] = (time.perf_counter() - t) / 10
print(json.dumps(out))
"""


def run(disable, repeat):
    env = dict(os.environ)
    env["CRAN2WAY_DISABLE_NUMBA"] = "1" if disable else "0"
    res = subprocess.run(
        [sys.executable, "-c", WORKER, str(repeat)],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=2000)
    args = ap.parse_args()
    t0 = time.perf_counter()
    fast = run(False, args.repeat)
    slow = run(True, args.repeat)
    names = [k for k in fast if k != "backend"]
    width = max(len(n) for n in names)
    print(f"{'kernel':<{width}}  {fast['backend']:>12}  {slow['backend']:>12}  speedup")
    for n in names:
        a, b = fast[n], slow[n]
        print(f"{n:<{width}}  {a * 1e6:10.1f}us  {b * 1e6:10.1f}us  {b / a:6.1f}x")
    print(f"(total {time.perf_counter() - t0:.1f} s)")


if __name__ == "__main__":
    main()
