"""``paritylab`` command line.

Exit codes: 0 success, 1 an asserted check failed, 2 configuration or I/O error.
"""
import argparse
import json
import sys

from . import experiments
from .errors import ConfigError, IdxParseError, InvalidInputError
from .parity import hardness_bound

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _common(p):
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--seed", type=int, action="append", help="repeatable; replaces the seed list")
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--q", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--mode", choices=("exact", "mc"))
    p.add_argument("--mc-samples", type=int, dest="mc_samples")
    p.add_argument("--sigma-prime", choices=("relu6", "positive"), dest="sigma_prime")
    p.add_argument("--out")


def build_parser():
    ap = argparse.ArgumentParser(prog="paritylab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthetic", help="ReLU6 network vs fixed-feature baselines on sparse parity")
    _common(p)
    p.add_argument("--features", type=int)

    p = sub.add_parser("mnist", help="MNIST-parity strips, four models")
    _common(p)
    p.add_argument("--mnist-dir", dest="mnist_dir")
    p.add_argument("--epochs", type=int)
    p.add_argument("--train-strips", type=int, dest="train_strips")
    p.add_argument("--test-strips", type=int, dest="test_strips")

    p = sub.add_parser("verify", help="run the theory checks")
    _common(p)
    p.add_argument("--only", action="append", help="run just this check (repeatable)")
    p.add_argument("--fast", action="store_true", help="smaller pinned sizes for a quick pass")

    p = sub.add_parser("bound", help="evaluate 1/2 - sqrt(N) B / (2^k sqrt 2)")
    p.add_argument("--N", type=int, required=True, dest="N")
    p.add_argument("--B", type=float, required=True, dest="B")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n", type=int, help="ambient dimension; warns when k > n/16")
    return ap


_OVERRIDE_KEYS = ("n", "k", "q", "steps", "mode", "mc_samples", "sigma_prime", "out", "features", "mnist_dir", "epochs", "train_strips", "test_strips")


def _config(args, kind):
    overrides = {key: getattr(args, key, None) for key in _OVERRIDE_KEYS}
    if args.seed:
        overrides["seeds"] = tuple(args.seed)
    return experiments.load_config(args.config, overrides, kind=kind)


def main(argv=None):
    args = build_parser().parse_args(argv)
    log = lambda msg: print(msg, file=sys.stderr)
    try:
        if args.command == "bound":
            value = hardness_bound(args.N, args.B, args.k, n=args.n)
            print(json.dumps({"N": args.N, "B": args.B, "k": args.k, "bound": value}))
            return EXIT_OK
        cfg = _config(args, "verify" if args.command == "verify" else args.command)
        if args.command == "synthetic":
            summary = experiments.run_synthetic_separation(cfg, log=log)
            print(cfg.run_dir())
            print(json.dumps({"gap": summary["gap"]}))
            return EXIT_OK
        if args.command == "mnist":
            summary = experiments.run_mnist_parity(cfg, log=log)
            print(cfg.run_dir())
            return EXIT_OK
        report, code = experiments.run_theory_suite(cfg, log=log, fast=args.fast, only=args.only)
        print(cfg.run_dir())
        if report["failed"]:
            log("failed: " + ", ".join(report["failed"]))
        return code
    except (ConfigError, InvalidInputError, IdxParseError, OSError) as exc:
        log(f"error: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
