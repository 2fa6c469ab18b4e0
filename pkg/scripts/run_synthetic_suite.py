"""Exact-oracle checks on the synthetic task: MADE accuracy and duality residuals."""
import argparse
import json

from dualsl.harness.suite import SuiteConfig, run_synthetic_suite


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dim", type=int, default=6)
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--lam", type=float, default=0.1)
    parser.add_argument("--epochs", type=int, default=3)
    parser.add_argument("--out", help="write the result as JSON here")
    args = parser.parse_args()
    cfg = SuiteConfig(D=args.dim, seeds=tuple(args.seeds), lam=args.lam, epochs=args.epochs)
    result = run_synthetic_suite(cfg, log=print)
    summary = result.to_dict()
    print(json.dumps(summary, indent=2))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(summary, f, indent=2)


if __name__ == "__main__":
    main()
