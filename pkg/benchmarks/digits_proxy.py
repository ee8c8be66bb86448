"""Run the MNIST-parity pipeline on scikit-learn's 8x8 digits as a stand-in.

The 1797 digits are upscaled 3x (24x24), padded to 28x28 and written as IDX
files, then the usual ``run_mnist_parity`` is run.  Only for environments
without the MNIST files; the numbers are not comparable to MNIST.

    python benchmarks/digits_proxy.py --k 1 --out runs/proxy
"""
import argparse
import json
import tempfile
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits

from paritylab.experiments import ExperimentConfig, run_mnist_parity
from paritylab.mnist import FILES, write_idx


def write_proxy(directory, seed=0):
    d = load_digits()
    imgs = np.kron(d.images / 16.0, np.ones((3, 3)))
    imgs = np.pad(imgs, ((0, 0), (2, 2), (2, 2)))
    raw = np.rint(imgs * 255).astype(np.uint8)
    order = np.random.default_rng(seed).permutation(len(raw))
    split = int(0.8 * len(raw))
    for name, idx in (("train", order[:split]), ("test", order[split:])):
        write_idx(Path(directory) / FILES[f"{name}_images"], raw[idx])
        write_idx(Path(directory) / FILES[f"{name}_labels"], d.target[idx].astype(np.uint8))


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--k", type=int, default=1)
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--out", default="runs/proxy")
    args = ap.parse_args(argv)
    with tempfile.TemporaryDirectory() as tmp:
        write_proxy(tmp)
        cfg = ExperimentConfig(kind="mnist", k=args.k, epochs=args.epochs, mnist_dir=tmp, out=args.out)
        s = run_mnist_parity(cfg)
    print(json.dumps(s["models"], indent=2))


if __name__ == "__main__":
    main()
