"""Time forward/gradient kernels for both backends.

    python benchmarks/bench_kernels.py [--repeat 3] [--csv out.csv]

Each backend runs in a subprocess because the backend is fixed at import.
"""
import argparse
import csv
import json
import os
import subprocess
import sys

SIZES = [(8192, 1024, 50), (20000, 1024, 50), (65536, 4000, 16)]

CHILD = r"""
import json, sys, time
import numpy as np
from paritylab import kernels
P, m, n, repeat = map(int, sys.argv[1:5])
gen = np.random.default_rng(0)
X = gen.choice([-1.0, 1.0], size=(P, n)) / np.sqrt(n)
y = gen.choice([-1.0, 1.0], size=P)
wt = np.full(P, 1.0 / P)
W = gen.integers(-1, 2, size=(m, n)).astype(np.float64)
b = gen.uniform(0, 6, size=m)
u = gen.normal(size=m)
kernels.forward_batch(X[:8], W, b, u)                # warm-up / JIT
kernels.weighted_gradient(X[:8], y[:8], wt[:8], W, b, u)
best_f = best_g = float("inf")
for _ in range(repeat):
    t = time.perf_counter(); kernels.forward_batch(X, W, b, u); best_f = min(best_f, time.perf_counter() - t)
    t = time.perf_counter(); kernels.weighted_gradient(X, y, wt, W, b, u); best_g = min(best_g, time.perf_counter() - t)
print(json.dumps({"backend": kernels.BACKEND, "forward_s": best_f, "gradient_s": best_g}))
"""


def run(backend, P, m, n, repeat):
    env = dict(os.environ, PARITYLAB_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", CHILD, str(P), str(m), str(n), str(repeat)], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--csv")
    args = ap.parse_args(argv)
    rows = []
    for P, m, n in SIZES:
        for backend in ("numpy", "numba"):
            r = run(backend, P, m, n, args.repeat)
            rows.append({"P": P, "m": m, "n": n, **r})
            print(f"P={P:6d} m={m:5d} n={n:3d} {r['backend']:6s} fwd {r['forward_s']:.3f}s  grad {r['gradient_s']:.3f}s")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
