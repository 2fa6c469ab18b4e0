"""Synthetic-task oracle suite: MADE accuracy and duality residual, baseline vs DSL."""
from dataclasses import asdict, dataclass, field

import numpy as np

from dualsl.harness.synthetic import (
    brute_force_joint_oracle, oracle_duality_residual, synthetic_task_generate,
)
from dualsl.lm import LMConfig, score_corpus, train_language_model
from dualsl.made import MadeConfig, MadeEnsemble, ensemble_log_probability, train_made
from dualsl.models import NlgModel, NluModel
from dualsl.trainer import DualPair, TrainingConfig, TrainingData, train_baseline, train_dsl


@dataclass
class SuiteConfig:
    D: int = 6
    task_seed: int = 0
    n_examples: int = 10000
    seeds: tuple = (0, 1, 2)
    lam: float = 0.1
    epochs: int = 3
    embedding_dim: int = 16
    hidden_size: int = 32
    made: MadeConfig = field(default_factory=lambda: MadeConfig(hidden_sizes=(64, 64), epochs=20))
    lm: LMConfig = field(default_factory=lambda: LMConfig(embedding_dim=16, hidden_size=32,
                                                          epochs=10))


@dataclass
class SuiteResult:
    made_mae: float
    lm_mae: float
    baseline_residuals: list
    dsl_residuals: list

    @property
    def baseline_mean(self):
        return float(np.mean(self.baseline_residuals))

    @property
    def dsl_mean(self):
        return float(np.mean(self.dsl_residuals))

    def to_dict(self):
        d = asdict(self)
        d.update(baseline_mean=self.baseline_mean, dsl_mean=self.dsl_mean)
        return d


def run_synthetic_suite(cfg=None, log=None):
    cfg = cfg or SuiteConfig()
    say = log or (lambda *_: None)
    task = synthetic_task_generate(cfg.D, seed=cfg.task_seed)
    oracle = brute_force_joint_oracle(task)
    xs, ys = task.dataset(cfg.n_examples)

    ens = MadeEnsemble.create(cfg.D, cfg.made, seed=cfg.task_seed)
    train_made(ens, xs, cfg.made, seed=cfg.task_seed)
    made_mae = float(np.mean(np.abs(ensemble_log_probability(ens, task.frames) - oracle.log_px)))
    say(f"MADE mean |log P^(x) - log P(x)| = {made_mae:.4f} nat")

    lm, _ = train_language_model(ys, len(task.vocab), cfg.lm, seed=cfg.task_seed)
    support_utts = [task.utterance(x) for x in task.frames]
    lm_mae = float(np.mean(np.abs(score_corpus(lm, support_utts)
                                  - np.array([oracle.log_py_of(u) for u in support_utts]))))
    say(f"LM mean |log P^(y) - log P(y)| = {lm_mae:.4f} nat")

    data = TrainingData(xs, ys, ensemble_log_probability(ens, xs), score_corpus(lm, ys))
    residuals = {"baseline": [], "dsl": []}
    V = len(task.vocab)
    for scheme in residuals:
        for seed in cfg.seeds:
            tcfg = TrainingConfig(scheme=scheme, lambda_xy=cfg.lam, lambda_yx=cfg.lam,
                                  epochs=cfg.epochs, seed=seed)
            pair = DualPair(NlgModel(cfg.D, V, cfg.embedding_dim, cfg.hidden_size, seed=seed),
                            NluModel(cfg.D, V, cfg.embedding_dim, cfg.hidden_size,
                                     seed=seed + 1000))
            if scheme == "baseline":
                train_baseline(data, pair, tcfg)
            else:
                train_dsl(data, pair, tcfg)
            r = oracle_duality_residual(task, oracle, pair.nlg, pair.nlu)
            residuals[scheme].append(r)
            say(f"{scheme} seed {seed}: oracle duality residual {r:.4f}")
    return SuiteResult(made_mae, lm_mae, residuals["baseline"], residuals["dsl"])
