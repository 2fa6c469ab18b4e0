"""Write a small templated corpus in E2E CSV format, plus a matching quick config.

The sentences are generated from templates; they only exercise the pipeline.
"""
import argparse
from pathlib import Path

from dualsl.harness.config import dump_config, load_config
from dualsl.harness.toy import TOY_OVERRIDES, write_toy_dataset


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_dir", type=Path)
    parser.add_argument("--n-train", type=int, default=200)
    parser.add_argument("--n-test", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    data = args.out_dir / "data"
    data.mkdir(parents=True, exist_ok=True)
    write_toy_dataset(data, args.n_train, args.n_test, args.seed)
    cfg = load_config(overrides=dict(TOY_OVERRIDES, **{
        "data.data_dir": str(data), "experiment.out_dir": str(args.out_dir / "runs")}))
    dump_config(cfg, args.out_dir / "toy.ini")
    print(f"wrote {data}/trainset.csv, {data}/testset_w_refs.csv and {args.out_dir / 'toy.ini'}")


if __name__ == "__main__":
    main()
