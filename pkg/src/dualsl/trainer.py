"""Baseline and duality-regularized joint training of the NLG/NLU pair.

For a batch, with frozen marginal estimates log P^(x) and log P^(y):

    gap_i = log P^(x_i) + log P(y_i|x_i) - log P^(y_i) - log P(x_i|y_i)
    r     = mean_i gap_i ** 2

NLG minimizes ``l1 + lambda_xy * r`` over its own parameters and NLU minimizes
``l2 + lambda_yx * r`` over its own. Both are realized by one backward pass on
a surrogate where each residual copy sees the other model's term detached.
"""
import json
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from dualsl.autodiff import Adam, AdamConfig, backward, recording
from dualsl.autodiff import tensor as T
from dualsl.errors import ConfigurationError, ContractError

log = logging.getLogger(__name__)

SCHEMES = ("baseline", "dsl", "dsl_without_made")


@dataclass(frozen=True)
class DualityRecord:
    log_px: float
    log_y_given_x: float
    log_py: float
    log_x_given_y: float
    residual: float

    @property
    def gap(self):
        return self.log_px + self.log_y_given_x - self.log_py - self.log_x_given_y


def duality_residual(log_px, log_y_given_x, log_py, log_x_given_y):
    values = (log_px, log_y_given_x, log_py, log_x_given_y)
    if not all(math.isfinite(v) for v in values):
        raise ContractError(f"duality terms must be finite, got {values}")
    gap = log_px + log_y_given_x - log_py - log_x_given_y
    return DualityRecord(*values, residual=gap * gap)


@dataclass
class TrainingConfig:
    scheme: str = "baseline"
    lambda_xy: float = 0.1
    lambda_yx: float = 0.1
    epochs: int = 10
    batch_size: int = 64
    seed: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    clip_norm: float = 5.0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        if self.lambda_xy < 0 or self.lambda_yx < 0:
            raise ConfigurationError("Lagrange weights must be non-negative")

    def adam(self):
        return AdamConfig(self.learning_rate, self.beta1, self.beta2, self.epsilon,
                          self.clip_norm)


@dataclass
class Marginals:
    """Frozen marginal scorers: callables from a batch to log-probability arrays.

    ``frame`` maps an [N, D] array of frames to log P^(x); ``sentence`` maps a
    list of utterances to log P^(y). Scores may be cached per training example.
    """

    frame: object
    sentence: object


@dataclass
class DualPair:
    nlg: object
    nlu: object
    nlg_opt: Adam = None
    nlu_opt: Adam = None

    def attach_optimizers(self, adam_config):
        self.nlg_opt = Adam(self.nlg.parameters(), adam_config)
        self.nlu_opt = Adam(self.nlu.parameters(), adam_config)
        return self


@dataclass
class StepResult:
    nlg_loss: float
    nlu_loss: float
    residual: float


@dataclass
class DualObjective:
    """Taped pieces of one batch objective.

    ``surrogate`` has the NLG gradient of ``l1 + lambda_xy * r`` and the NLU
    gradient of ``l2 + lambda_yx * r``; ``nlg_objective`` / ``nlu_objective``
    are those two losses with nothing detached.
    """

    surrogate: object
    nlg_loss: object
    nlu_loss: object
    nlg_objective: object
    nlu_objective: object
    log_y_given_x: object
    log_x_given_y: object


def dual_objective(pair, xs, ys, log_px=None, log_py=None, lambda_xy=0.0, lambda_yx=0.0,
                   regularized=True):
    n = len(xs)
    lp_y_x = pair.nlg.log_likelihood(xs, ys)
    lp_x_y = pair.nlu.log_likelihood(ys, xs)
    nlg_loss = -lp_y_x.sum() * (1.0 / n)
    nlu_loss = -lp_x_y.sum() * (1.0 / n)
    surrogate = nlg_loss + nlu_loss
    nlg_obj, nlu_obj = nlg_loss, nlu_loss
    if regularized:
        offset = np.asarray(log_px) - np.asarray(log_py)
        # Each residual copy sees the other model's likelihood as a constant.
        gap_xy = lp_y_x - T.detach(lp_x_y) + offset
        gap_yx = T.detach(lp_y_x) - lp_x_y + offset
        r_xy = (gap_xy * gap_xy).sum() * (1.0 / n)
        r_yx = (gap_yx * gap_yx).sum() * (1.0 / n)
        surrogate = surrogate + r_xy * lambda_xy + r_yx * lambda_yx
        gap = lp_y_x - lp_x_y + offset
        r = (gap * gap).sum() * (1.0 / n)
        nlg_obj, nlu_obj = nlg_loss + r * lambda_xy, nlu_loss + r * lambda_yx
    return DualObjective(surrogate, nlg_loss, nlu_loss, nlg_obj, nlu_obj, lp_y_x, lp_x_y)


def dsl_step(batch, pair, cfg, log_px=None, log_py=None):
    """One synchronous update of both models on ``batch`` = (frames, utterances).

    ``log_px`` / ``log_py`` are the frozen marginal scores for the batch; the
    baseline scheme ignores them for the update but still reports the mean
    residual when they are given.
    """
    xs, ys = batch
    xs = np.asarray(xs, dtype=float)
    if len(xs) == 0:
        raise ContractError("empty batch")
    regularized = cfg.scheme != "baseline"
    if regularized and (log_px is None or log_py is None):
        raise ContractError(f"scheme {cfg.scheme!r} needs marginal scores for the batch")
    with recording() as tape:
        obj = dual_objective(pair, xs, ys, log_px, log_py, cfg.lambda_xy, cfg.lambda_yx,
                             regularized)
        backward(obj.surrogate, tape)
    pair.nlg_opt.step()
    pair.nlu_opt.step()
    residual = float("nan")
    if log_px is not None and log_py is not None:
        gap = (np.asarray(log_px) + obj.log_y_given_x.values - np.asarray(log_py)
               - obj.log_x_given_y.values)
        residual = float(np.mean(gap * gap))
    return StepResult(obj.nlg_loss.item(), obj.nlu_loss.item(), residual)


@dataclass
class TrainingLog:
    epochs: list = field(default_factory=list)

    def append(self, **row):
        self.epochs.append(row)

    def write_jsonl(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for row in self.epochs:
                f.write(json.dumps(row) + "\n")


@dataclass
class TrainingData:
    """Aligned training arrays; marginal scores are precomputed once since the
    estimators are frozen."""

    frames: np.ndarray
    utterances: list
    log_px: np.ndarray = None
    log_py: np.ndarray = None

    def __len__(self):
        return len(self.utterances)


def score_marginals(data, marginals):
    log_px = np.asarray(marginals.frame(data.frames), dtype=float).reshape(-1)
    log_py = np.asarray(marginals.sentence(data.utterances), dtype=float).reshape(-1)
    return TrainingData(data.frames, data.utterances, log_px, log_py)


def _run(data, pair, cfg, on_epoch=None):
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7]))
    history = TrainingLog()
    has_marginals = data.log_px is not None and data.log_py is not None
    for epoch in range(cfg.epochs):
        started = time.perf_counter()
        order = rng.permutation(len(data))
        sums = np.zeros(3)
        count = 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch = (data.frames[idx], [data.utterances[i] for i in idx])
            lpx = data.log_px[idx] if has_marginals else None
            lpy = data.log_py[idx] if has_marginals else None
            res = dsl_step(batch, pair, cfg, lpx, lpy)
            sums += np.array([res.nlg_loss, res.nlu_loss, res.residual]) * len(idx)
            count += len(idx)
        row = {"epoch": epoch + 1,
               "nlg_loss": sums[0] / count,
               "nlu_loss": sums[1] / count,
               "duality_residual_mean": (sums[2] / count) if has_marginals else None,
               "wallclock_s": time.perf_counter() - started}
        history.append(**row)
        log.info("%s epoch %d: nlg %.4f nlu %.4f residual %s", cfg.scheme, epoch + 1,
                 row["nlg_loss"], row["nlu_loss"], row["duality_residual_mean"])
        if on_epoch is not None:
            on_epoch(row)
    return history


def train_baseline(data, pair, cfg, on_epoch=None):
    """Independent NLG and NLU training; no coupling between the models."""
    if cfg.scheme != "baseline":
        raise ContractError(f"train_baseline called with scheme {cfg.scheme!r}")
    if pair.nlg_opt is None:
        pair.attach_optimizers(cfg.adam())
    return pair, _run(data, pair, cfg, on_epoch)


def train_dsl(data, pair, cfg, marginals=None, on_epoch=None):
    """Duality-regularized training; ``data`` may already carry marginal scores."""
    if cfg.scheme not in ("dsl", "dsl_without_made"):
        raise ContractError(f"train_dsl called with scheme {cfg.scheme!r}")
    if data.log_px is None or data.log_py is None:
        if marginals is None:
            raise ConfigurationError("dual training needs frozen marginal estimators")
        data = score_marginals(data, marginals)
    if pair.nlg_opt is None:
        pair.attach_optimizers(cfg.adam())
    return pair, _run(data, pair, cfg, on_epoch)
