"""A small frame/sentence task whose joint distribution is known exactly.

Frames follow a pairwise-coupled Bernoulli model over D <= 10 labels, so the
2**D frame probabilities can be enumerated. Each frame is realized by a fixed
injective template, which makes P(y) the pushforward of P(x).
"""
import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from dualsl.autodiff import no_grad
from dualsl.errors import ValidationError
from dualsl.text import Utterance, Vocabulary, encode_utterance


def all_frames(D):
    return np.array(list(itertools.product([0.0, 1.0], repeat=D)))


@dataclass
class SyntheticTask:
    D: int
    fields: np.ndarray
    couplings: np.ndarray
    frames: np.ndarray
    log_px: np.ndarray
    vocab: Vocabulary

    def words(self, x):
        active = [f"slot{d}" for d in np.flatnonzero(np.asarray(x) > 0.5)]
        return ["we", "have"] + (active or ["nothing"])

    def utterance(self, x):
        return encode_utterance(self.words(x), self.vocab)

    def frame_index(self, x):
        bits = (np.asarray(x) > 0.5).astype(int)
        return int("".join(map(str, bits)), 2)

    def dataset(self, n_total):
        """All frames with multiplicity round(n_total * P(x)), in enumeration order."""
        counts = np.rint(n_total * np.exp(self.log_px)).astype(int)
        xs = np.repeat(self.frames, counts, axis=0)
        ys = [self.utterance(x) for x in xs]
        return xs, ys

    def sample(self, n, seed=0):
        rng = np.random.default_rng(seed)
        idx = rng.choice(len(self.frames), size=n, p=np.exp(self.log_px))
        xs = self.frames[idx]
        return xs, [self.utterance(x) for x in xs]


def synthetic_task_generate(D, seed=0, probs=None, coupling_scale=1.0, field_scale=1.0):
    """Build a task; ``probs`` gives independent label marginals instead of a random field."""
    if not 2 <= D <= 10:
        raise ValidationError(f"synthetic tasks need 2 <= D <= 10, got {D}")
    rng = np.random.default_rng(seed)
    if probs is not None:
        probs = np.asarray(probs, dtype=float)
        if probs.shape != (D,):
            raise ValidationError("probs must have length D")
        fields = np.log(probs) - np.log1p(-probs)
        couplings = np.zeros((D, D))
    else:
        fields = rng.uniform(-field_scale, field_scale, size=D)
        couplings = np.triu(rng.uniform(-coupling_scale, coupling_scale, size=(D, D)), 1)
    frames = all_frames(D)
    energy = frames @ fields + np.einsum("nd,de,ne->n", frames, couplings, frames)
    log_px = energy - logsumexp(energy)
    vocab = Vocabulary(["we", "have", "nothing"] + [f"slot{d}" for d in range(D)])
    return SyntheticTask(D, fields, couplings, frames, log_px, vocab)


@dataclass
class JointOracle:
    log_px: np.ndarray
    log_py: dict
    log_pxy: dict

    def log_px_of(self, task, x):
        return float(self.log_px[task.frame_index(x)])

    def log_py_of(self, y):
        tokens = tuple(y.tokens) if isinstance(y, Utterance) else tuple(y)
        return self.log_py.get(tokens, -np.inf)


def brute_force_joint_oracle(task):
    """Exact log P(x), log P(y) and log P(x, y) by summing over the support."""
    log_py_terms = {}
    log_pxy = {}
    for k, x in enumerate(task.frames):
        y = tuple(task.utterance(x).tokens)
        log_pxy[(k, y)] = task.log_px[k]
        log_py_terms.setdefault(y, []).append(task.log_px[k])
    log_py = {y: float(logsumexp(v)) for y, v in log_py_terms.items()}
    return JointOracle(task.log_px.copy(), log_py, log_pxy)


def oracle_duality_residual(task, oracle, nlg, nlu):
    """Joint-weighted mean of the squared duality gap under exact marginals."""
    xs = task.frames
    ys = [task.utterance(x) for x in xs]
    with no_grad():
        lp_y_x = nlg.log_likelihood(xs, ys).values
        lp_x_y = nlu.log_likelihood(ys, xs).values
    log_py = np.array([oracle.log_py_of(y) for y in ys])
    gap = oracle.log_px + lp_y_x - log_py - lp_x_y
    return float(np.sum(np.exp(oracle.log_px) * gap * gap))
