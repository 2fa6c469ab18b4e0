"""End-to-end experiment pipeline on an E2E-format corpus.

ingest -> pretrain LM -> pretrain MADE ensemble -> for each scheme x lambda x
seed: train, decode the test set, score -> aggregate -> Table-1 summary.
"""
import json
import logging
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from dualsl import lm as lm_mod
from dualsl import made as made_mod
from dualsl.harness.checkpoint import load_checkpoint, save_checkpoint
from dualsl.harness.config import dump_config
from dualsl.harness.report import aggregate_runs, cell_label, write_report
from dualsl.metrics import ROUGE_L_BETA, EvalReport, evaluate_nlg, micro_f1
from dualsl.models import NlgModel, NluModel, generate_batch, nlu_predict_batch
from dualsl.text import (
    PREPROCESS_ORDER, LabelIndex, Vocabulary, build_label_index, build_vocabulary,
    decode_utterance, encode_utterance, frame_to_label_vector, group_multi_references,
    load_corpus, parse_semantic_frame, preprocess_utterance,
)
from dualsl.trainer import (
    DualPair, TrainingConfig, TrainingData, train_baseline, train_dsl,
)

log = logging.getLogger(__name__)

EXPECTED_LABELS = 79


@dataclass
class PreparedData:
    index: LabelIndex
    vocab: Vocabulary
    train_frames: np.ndarray
    train_utterances: list
    test_frames: np.ndarray
    test_utterances: list
    test_groups: list = field(default_factory=list)  # (frame vector, [reference tokens])
    stats: dict = field(default_factory=dict)


def _ingest(path, split, lemmatize):
    frames, tokens = [], []
    for mr, ref in load_corpus(path, split):
        frames.append(parse_semantic_frame(mr))
        tokens.append(preprocess_utterance(ref, lemmatize))
    return frames, tokens


def prepare_data(data_cfg):
    root = Path(data_cfg.data_dir)
    train_frames, train_tokens = _ingest(root / data_cfg.train_file, "train", data_cfg.lemmatize)
    full_index = build_label_index(train_frames)
    if data_cfg.subset_size and data_cfg.subset_size > 0:
        train_frames = train_frames[:data_cfg.subset_size]
        train_tokens = train_tokens[:data_cfg.subset_size]
    test_frames, test_tokens = _ingest(root / data_cfg.test_file, "test", data_cfg.lemmatize)
    return prepare_from_records(train_frames, train_tokens, test_frames, test_tokens,
                                data_cfg, full_index_size=full_index.size)


def prepare_from_records(train_frames, train_tokens, test_frames, test_tokens, data_cfg,
                         full_index_size=None):
    index = build_label_index(train_frames)
    vocab = build_vocabulary(train_tokens, data_cfg.min_count)
    X = np.array([frame_to_label_vector(f, index, data_cfg.unseen_policy) for f in train_frames])
    utts = [encode_utterance(t, vocab) for t in train_tokens]
    dropped = sum(1 for f in test_frames for p in f if p not in index.positions)
    X_test = np.array([frame_to_label_vector(f, index, data_cfg.unseen_policy)
                       for f in test_frames]).reshape(len(test_frames), index.size)
    test_utts = [encode_utterance(t, vocab) for t in test_tokens]
    grouped = group_multi_references(
        [(f, " ".join(t)) for f, t in zip(test_frames, test_tokens)])
    first = {}
    for f in test_frames:
        first.setdefault(f.key(), f)
    groups = [(frame_to_label_vector(first[k], index, "drop"), [r.split() for r in refs])
              for k, refs in grouped.items()]
    stats = {"n_labels": index.size, "n_labels_full_train": full_index_size,
             "expected_labels": EXPECTED_LABELS, "vocab_size": len(vocab),
             "n_train": len(utts), "n_test": len(test_utts), "n_test_groups": len(groups),
             "dropped_test_pairs": dropped}
    return PreparedData(index, vocab, X, utts, X_test, test_utts, groups, stats)


def save_prepared(prepared, out_dir):
    out = Path(out_dir) / "prepared"
    out.mkdir(parents=True, exist_ok=True)
    (out / "labels.json").write_text(json.dumps(prepared.index.to_json()), encoding="utf-8")
    (out / "vocab.json").write_text(json.dumps(prepared.vocab.to_json()), encoding="utf-8")
    (out / "stats.json").write_text(json.dumps(prepared.stats, indent=2), encoding="utf-8")


# -- marginal estimators ----------------------------------------------------------

def pretrain_lm(cfg, prepared, out_dir):
    model, history = lm_mod.train_language_model(
        prepared.train_utterances, len(prepared.vocab), cfg.lm, seed=cfg.experiment.base_seed)
    out = Path(out_dir) / "marginals"
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out / "lm.ckpt", seed=cfg.experiment.base_seed)
    _write_jsonl(out / "lm_log.jsonl",
                 [{"epoch": i + 1, "loss": v} for i, v in enumerate(history)])
    return model


def pretrain_made(cfg, prepared, out_dir):
    seed = cfg.experiment.base_seed
    ens = made_mod.MadeEnsemble.create(prepared.index.size, cfg.made, seed=seed)
    histories = made_mod.train_made(ens, prepared.train_frames, cfg.made, seed=seed)
    independent = made_mod.independent_marginal_estimator(prepared.train_frames)
    out = Path(out_dir) / "marginals"
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(ens, out / "made.ckpt", seed=seed)
    (out / "independent.json").write_text(json.dumps(independent.probs.tolist()),
                                          encoding="utf-8")
    _write_jsonl(out / "made_log.jsonl",
                 [{"member": k, "epoch": i + 1, "nll": v}
                  for k, h in enumerate(histories) for i, v in enumerate(h)])
    return ens, independent


def load_marginals(out_dir):
    out = Path(out_dir) / "marginals"
    lm = load_checkpoint(out / "lm.ckpt", expect="lm")
    ens = load_checkpoint(out / "made.ckpt", expect="made_ensemble")
    probs = json.loads((out / "independent.json").read_text(encoding="utf-8"))
    return lm, ens, made_mod.IndependentMarginal(probs)


def marginal_scores(prepared, lm, ens, independent):
    """Frozen log P^(y), log P^(x) (MADE) and log P^(x) (independent) per example."""
    return {"log_py": lm_mod.score_corpus(lm, prepared.train_utterances),
            "log_px_made": made_mod.ensemble_log_probability(ens, prepared.train_frames),
            "log_px_independent": independent(prepared.train_frames)}


# -- one training cell ------------------------------------------------------------

def init_pair(prepared, model_cfg, seed):
    nlg_seed, nlu_seed = (s.generate_state(1)[0] for s in np.random.SeedSequence(seed).spawn(2))
    D, V = prepared.index.size, len(prepared.vocab)
    return DualPair(NlgModel(D, V, model_cfg.embedding_dim, model_cfg.hidden_size, nlg_seed),
                    NluModel(D, V, model_cfg.embedding_dim, model_cfg.hidden_size, nlu_seed))


def training_config(cfg, scheme, lam, seed):
    t = cfg.train
    lam = 0.0 if scheme == "baseline" else lam
    return TrainingConfig(scheme=scheme, lambda_xy=lam, lambda_yx=lam, epochs=t.epochs,
                          batch_size=t.batch_size, seed=seed, learning_rate=t.learning_rate,
                          beta1=t.beta1, beta2=t.beta2, epsilon=t.epsilon,
                          clip_norm=t.clip_norm)


def train_cell(cfg, prepared, scores, scheme, lam, seed):
    tcfg = training_config(cfg, scheme, lam, seed)
    log_px = scores["log_px_independent" if scheme == "dsl_without_made" else "log_px_made"]
    data = TrainingData(prepared.train_frames, prepared.train_utterances, log_px,
                        scores["log_py"])
    pair = init_pair(prepared, cfg.model, seed)
    if scheme == "baseline":
        pair, history = train_baseline(data, pair, tcfg)
    else:
        pair, history = train_dsl(data, pair, tcfg)
    return pair, history


def evaluate_pair(nlg, nlu, prepared, model_cfg, beta=ROUGE_L_BETA):
    predicted = nlu_predict_batch(nlu, prepared.test_utterances, model_cfg.threshold)
    pred_sets = [set(np.flatnonzero(p)) for p in predicted]
    gold_sets = [set(np.flatnonzero(g)) for g in prepared.test_frames]
    frames = np.array([g[0] for g in prepared.test_groups])
    refs = [g[1] for g in prepared.test_groups]
    outputs = generate_batch(nlg, frames, model_cfg.decode, model_cfg.beam_width,
                             model_cfg.max_len)
    hyps = [decode_utterance(o, prepared.vocab) for o in outputs]
    nlg_scores = evaluate_nlg(hyps, refs, beta)
    report = EvalReport(nlu_micro_f1=micro_f1(pred_sets, gold_sets), **nlg_scores,
                        counts={"nlu_instances": len(gold_sets), "nlg_groups": len(hyps)})
    return report, hyps


# -- orchestration ----------------------------------------------------------------

def experiment_cells(cfg):
    cells = []
    for scheme in cfg.experiment.schemes:
        if scheme == "baseline":
            cells.append(("baseline", 0.0))
        elif scheme == "dsl":
            cells.extend(("dsl", lam) for lam in cfg.experiment.lambdas)
        else:
            cells.append(("dsl_without_made", cfg.experiment.lambda_without_made))
    return cells


def run_manifest(cfg, prepared):
    return {"config": cfg.to_dict(),
            "preprocessing_order": list(PREPROCESS_ORDER),
            "lemmatizer": "bundled rule lemmatizer" if cfg.data.lemmatize else "off",
            "metric_variants": {"bleu": "corpus BLEU-4, no smoothing, closest reference length",
                                "rouge_n": "recall, max over references, instance mean",
                                "rouge_l": f"LCS F-measure beta={cfg.experiment.rouge_l_beta}, "
                                           "max over references, instance mean",
                                "f1": "micro-F1 over the training label space",
                                "tokenization": "same preprocessing as training"},
            "decode": {"strategy": cfg.model.decode, "beam_width": cfg.model.beam_width,
                       "max_len": cfg.model.max_len},
            "seeds": cfg.seeds(),
            "data": prepared.stats,
            "label_count_deviation": (None if prepared.stats.get("n_labels_full_train") is None
                                      else prepared.stats["n_labels_full_train"] - EXPECTED_LABELS)}


def run_experiment(cfg, prepared=None, out_dir=None):
    """Run every (scheme, lambda, seed) cell and write all artifacts under ``out_dir``."""
    out = Path(out_dir or cfg.experiment.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if prepared is None:
        cfg.validate()
        prepared = prepare_data(cfg.data)
    save_prepared(prepared, out)
    dump_config(cfg, out / "config.ini")
    (out / "manifest.json").write_text(json.dumps(run_manifest(cfg, prepared), indent=2,
                                                  sort_keys=True, default=str), encoding="utf-8")
    lm = pretrain_lm(cfg, prepared, out)
    ens, independent = pretrain_made(cfg, prepared, out)
    scores = marginal_scores(prepared, lm, ens, independent)

    reports, errors = {}, []
    for scheme, lam in experiment_cells(cfg):
        label = cell_label(scheme, lam)
        for seed in cfg.seeds():
            run_dir = out / "runs" / label / f"seed{seed}"
            run_dir.mkdir(parents=True, exist_ok=True)
            try:
                pair, history = train_cell(cfg, prepared, scores, scheme, lam, seed)
                history.write_jsonl(run_dir / "train_log.jsonl")
                save_checkpoint(pair.nlg, run_dir / "nlg.ckpt", seed=seed)
                save_checkpoint(pair.nlu, run_dir / "nlu.ckpt", seed=seed)
                report, hyps = evaluate_pair(pair.nlg, pair.nlu, prepared, cfg.model,
                                              cfg.experiment.rouge_l_beta)
            except Exception as exc:  # one failed cell must not abort the sweep
                log.exception("run %s seed %d failed", label, seed)
                errors.append({"cell": label, "seed": seed, "error": repr(exc),
                               "traceback": traceback.format_exc()})
                continue
            (run_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2,
                                                            sort_keys=True), encoding="utf-8")
            (run_dir / "hypotheses.txt").write_text("\n".join(" ".join(h) for h in hyps) + "\n",
                                                    encoding="utf-8")
            reports.setdefault(label, []).append(report)
    if errors:
        (out / "errors.json").write_text(json.dumps(errors, indent=2), encoding="utf-8")
    aggregates = {label: aggregate_runs(r) for label, r in reports.items()}
    text, _ = write_report(aggregates, out, cfg.experiment.show_paper_reference)
    return ExperimentResult(out, reports, aggregates, errors, text)


@dataclass
class ExperimentResult:
    out_dir: Path
    reports: dict
    aggregates: dict
    errors: list
    table: str


def _write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")
