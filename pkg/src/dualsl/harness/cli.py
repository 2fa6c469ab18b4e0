"""Command-line entry point: ``dualsl <subcommand> [flags]``."""
import argparse
import json
import logging
import sys
from pathlib import Path

from dualsl.errors import DualSLError
from dualsl.harness import experiment as ex
from dualsl.harness.checkpoint import load_checkpoint, save_checkpoint
from dualsl.harness.config import iter_keys, load_config
from dualsl.harness.report import cell_label
from dualsl.harness.suite import SuiteConfig, run_synthetic_suite

log = logging.getLogger("dualsl")

SCHEME_NAMES = {"baseline": "baseline", "dsl": "dsl", "dsl-no-made": "dsl_without_made"}

# Named global flags and the config keys they set.
GLOBAL_FLAGS = {
    "--data-dir": "data.data_dir",
    "--out-dir": "experiment.out_dir",
    "--runs": "experiment.runs",
    "--subset-size": "data.subset_size",
}


def _common_parser():
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS defaults let flags appear before or after the subcommand.
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help="INI file with [section] key = value entries")
    for flag, key in GLOBAL_FLAGS.items():
        common.add_argument(flag, dest=f"cfg:{key}", default=argparse.SUPPRESS,
                            metavar=flag[2:].replace("-", "_").upper())
    common.add_argument("--show-paper-reference", dest="cfg:experiment.show_paper_reference",
                        action="store_const", const="true", default=argparse.SUPPRESS)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    keys = common.add_argument_group("config keys (override the file)")
    for key, default in iter_keys():
        keys.add_argument(f"--{key}", dest=f"cfg:{key}", default=argparse.SUPPRESS,
                          metavar=type(default).__name__.upper())
    return common


def build_parser():
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="dualsl", parents=[common],
                                     description="Dual supervised learning for NLU/NLG.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("prepare-data", parents=[common], help="ingest and preprocess the corpus")
    sub.add_parser("train-lm", parents=[common], help="pretrain the sentence language model")
    sub.add_parser("train-made", parents=[common], help="pretrain the frame MADE ensemble")
    for name in ("train", "evaluate"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--scheme", choices=sorted(SCHEME_NAMES), default="baseline")
        p.add_argument("--lambda", dest="lam", type=float, default=0.1)
        p.add_argument("--seed", type=int, default=0)
    sub.add_parser("reproduce-table1", parents=[common], help="run the full scheme sweep")
    syn = sub.add_parser("synthetic-suite", parents=[common], help="exact-oracle checks")
    syn.add_argument("--dim", type=int, default=6)
    return parser


def config_from_args(args):
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg:")}
    return load_config(getattr(args, "config", None), overrides)


def _run_dir(cfg, scheme, lam, seed):
    return Path(cfg.experiment.out_dir) / "runs" / cell_label(scheme, lam) / f"seed{seed}"


def cmd_prepare_data(cfg):
    cfg.validate()
    prepared = ex.prepare_data(cfg.data)
    ex.save_prepared(prepared, cfg.experiment.out_dir)
    stats = prepared.stats
    print(json.dumps(stats, indent=2))
    full = stats["n_labels_full_train"]
    if full != ex.EXPECTED_LABELS:
        log.warning("label index on the full training split has %d labels (expected %d); "
                    "values are matched case-insensitively after trimming", full,
                    ex.EXPECTED_LABELS)
    return 0


def cmd_train_lm(cfg):
    cfg.validate()
    prepared = ex.prepare_data(cfg.data)
    model = ex.pretrain_lm(cfg, prepared, cfg.experiment.out_dir)
    print(f"saved {Path(cfg.experiment.out_dir) / 'marginals' / 'lm.ckpt'} "
          f"({len(model.parameters())} parameter tensors)")
    return 0


def cmd_train_made(cfg):
    cfg.validate()
    prepared = ex.prepare_data(cfg.data)
    ens, _ = ex.pretrain_made(cfg, prepared, cfg.experiment.out_dir)
    print(f"saved {Path(cfg.experiment.out_dir) / 'marginals' / 'made.ckpt'} "
          f"({len(ens)} members)")
    return 0


def cmd_train(cfg, scheme, lam, seed):
    cfg.validate()
    prepared = ex.prepare_data(cfg.data)
    lm, ens, independent = ex.load_marginals(cfg.experiment.out_dir)
    scores = ex.marginal_scores(prepared, lm, ens, independent)
    pair, history = ex.train_cell(cfg, prepared, scores, scheme, lam, seed)
    run_dir = _run_dir(cfg, scheme, lam, seed)
    run_dir.mkdir(parents=True, exist_ok=True)
    history.write_jsonl(run_dir / "train_log.jsonl")
    save_checkpoint(pair.nlg, run_dir / "nlg.ckpt", seed=seed)
    save_checkpoint(pair.nlu, run_dir / "nlu.ckpt", seed=seed)
    print(f"saved models to {run_dir}")
    return 0


def cmd_evaluate(cfg, scheme, lam, seed):
    cfg.validate()
    prepared = ex.prepare_data(cfg.data)
    run_dir = _run_dir(cfg, scheme, lam, seed)
    nlg = load_checkpoint(run_dir / "nlg.ckpt", expect="nlg")
    nlu = load_checkpoint(run_dir / "nlu.ckpt", expect="nlu")
    report, hyps = ex.evaluate_pair(nlg, nlu, prepared, cfg.model,
                                     cfg.experiment.rouge_l_beta)
    (run_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True),
                                         encoding="utf-8")
    print(json.dumps(report.scores(), indent=2))
    return 0


def cmd_reproduce(cfg):
    result = ex.run_experiment(cfg)
    print(result.table, end="")
    if result.errors:
        print(f"{len(result.errors)} run(s) failed; see {result.out_dir / 'errors.json'}")
        return 1
    return 0


def cmd_synthetic(dim):
    result = run_synthetic_suite(SuiteConfig(D=dim), log=print)
    print(json.dumps(result.to_dict(), indent=2))
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
        if args.command == "prepare-data":
            return cmd_prepare_data(cfg)
        if args.command == "train-lm":
            return cmd_train_lm(cfg)
        if args.command == "train-made":
            return cmd_train_made(cfg)
        if args.command == "train":
            return cmd_train(cfg, SCHEME_NAMES[args.scheme], args.lam, args.seed)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, SCHEME_NAMES[args.scheme], args.lam, args.seed)
        if args.command == "reproduce-table1":
            return cmd_reproduce(cfg)
        if args.command == "synthetic-suite":
            return cmd_synthetic(args.dim)
    except DualSLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 1


if __name__ == "__main__":
    sys.exit(main())
