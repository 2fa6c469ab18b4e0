"""Frame-to-sentence (NLG) and sentence-to-frame (NLU) conditional models."""
from dataclasses import dataclass

import numpy as np

from dualsl.autodiff import (
    Embedding, GRUCell, Linear, Module, no_grad, pad_batch, sequence_token_log_probs,
)
from dualsl.autodiff import tensor as T
from dualsl.errors import ContractError
from dualsl.text import BOS, EOS


@dataclass
class ModelConfig:
    embedding_dim: int = 50
    hidden_size: int = 200
    max_len: int = 60
    decode: str = "greedy"
    beam_width: int = 4
    threshold: float = 0.5


def _ids(y):
    return list(y.tokens) if hasattr(y, "tokens") else list(y)


def _check_frames(x, D):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != D:
        raise ContractError(f"frame vector has dimension {x.shape[1]}, model expects {D}")
    return x


def _check_sequences(ys, vocab_size):
    seqs = [_ids(y) for y in ys]
    for s in seqs:
        if len(s) < 2 or s[0] != BOS or s[-1] != EOS:
            raise ContractError("utterance must be framed by BOS ... EOS")
        if max(s) >= vocab_size:
            raise ContractError("token id outside the vocabulary")
    return seqs


class NlgModel(Module):
    """GRU decoder whose initial state is a projection of the frame vector."""

    def __init__(self, n_labels, vocab_size, embedding_dim=50, hidden_size=200, seed=0):
        rng = np.random.default_rng(seed)
        self.n_labels = n_labels
        self.vocab_size = vocab_size
        self.hidden_size = hidden_size
        self.frame_proj = Linear(n_labels, hidden_size, rng, "nlg.frame_proj")
        self.embedding = Embedding(vocab_size, embedding_dim, rng, "nlg.embedding")
        self.cell = GRUCell(embedding_dim, hidden_size, rng, "nlg.gru")
        self.output = Linear(hidden_size, vocab_size, rng, "nlg.output")

    def config(self):
        return {"n_labels": self.n_labels, "vocab_size": self.vocab_size,
                "embedding_dim": self.embedding.table.shape[1],
                "hidden_size": self.hidden_size}

    def initial_state(self, x):
        return T.tanh(self.frame_proj(T.Tensor(x)))

    def log_likelihood(self, xs, ys):
        """Per-example log P(y|x) Tensor of shape [batch]."""
        xs = _check_frames(xs, self.n_labels)
        seqs = _check_sequences(ys, self.vocab_size)
        if len(seqs) != len(xs):
            raise ContractError("frames and utterances differ in count")
        ids, mask = pad_batch(seqs)
        return sequence_token_log_probs(self.cell, self.embedding, self.output, ids, mask,
                                        self.initial_state(xs))

    def step_log_probs(self, token_ids, h):
        h = self.cell(self.embedding(token_ids), h)
        return T.log_softmax(self.output(h), axis=-1), h


class NluModel(Module):
    """GRU encoder whose final state is projected to per-label Bernoulli logits."""

    def __init__(self, n_labels, vocab_size, embedding_dim=50, hidden_size=200, seed=0):
        rng = np.random.default_rng(seed)
        self.n_labels = n_labels
        self.vocab_size = vocab_size
        self.hidden_size = hidden_size
        self.embedding = Embedding(vocab_size, embedding_dim, rng, "nlu.embedding")
        self.cell = GRUCell(embedding_dim, hidden_size, rng, "nlu.gru")
        self.label_proj = Linear(hidden_size, n_labels, rng, "nlu.label_proj")

    def config(self):
        return {"n_labels": self.n_labels, "vocab_size": self.vocab_size,
                "embedding_dim": self.embedding.table.shape[1],
                "hidden_size": self.hidden_size}

    def logits(self, ys):
        seqs = _check_sequences(ys, self.vocab_size)
        ids, mask = pad_batch(seqs)
        h = T.Tensor(np.zeros((len(seqs), self.hidden_size)))
        for t in range(ids.shape[1]):
            h_new = self.cell(self.embedding(ids[:, t]), h)
            # Padded steps carry the previous state forward unchanged.
            m = mask[:, t:t + 1]
            if m.all():
                h = h_new
            else:
                h = h_new * m + h * (1.0 - m)
        return self.label_proj(h)

    def log_likelihood(self, ys, xs):
        """Per-example factorized Bernoulli log P(x|y), shape [batch]."""
        xs = _check_frames(xs, self.n_labels)
        logits = self.logits(ys)
        if logits.shape[0] != len(xs):
            raise ContractError("frames and utterances differ in count")
        return T.bernoulli_log_prob(logits, xs).sum(axis=1)


def nlg_conditional_log_likelihood(m, x, y):
    with no_grad():
        return float(m.log_likelihood([x], [y]).values[0])


def nlu_conditional_log_likelihood(m, y, x):
    with no_grad():
        return float(m.log_likelihood([y], [x]).values[0])


def nlu_probabilities(m, ys):
    with no_grad():
        return T._sigmoid(m.logits(ys).values)


def nlu_predict(m, y, threshold=0.5):
    """Binary label vector with label d on iff its probability exceeds ``threshold``."""
    return (nlu_probabilities(m, [y])[0] > threshold).astype(float)


def nlu_predict_batch(m, ys, threshold=0.5, batch_size=256):
    out = []
    for start in range(0, len(ys), batch_size):
        out.append(nlu_probabilities(m, ys[start:start + batch_size]) > threshold)
    return np.concatenate(out).astype(float) if out else np.zeros((0, m.n_labels))


def greedy_decode_batch(m, xs, max_len=60):
    """Greedy decoding for a batch of frames; each result starts with BOS."""
    xs = _check_frames(xs, m.n_labels)
    n = len(xs)
    out = [[BOS] for _ in range(n)]
    done = np.zeros(n, dtype=bool)
    with no_grad():
        h = m.initial_state(xs)
        tokens = np.full(n, BOS)
        for _ in range(max_len):
            logp, h = m.step_log_probs(tokens, h)
            tokens = np.argmax(logp.values, axis=1)
            for i in np.flatnonzero(~done):
                out[i].append(int(tokens[i]))
                if tokens[i] == EOS:
                    done[i] = True
            if done.all():
                break
    return out


def beam_decode(m, x, beam_width=4, max_len=60, length_norm=False):
    """Beam search over one frame.

    Returns the finished hypothesis with the highest accumulated log-probability
    (optionally divided by its length), or the best unfinished one when nothing
    reaches EOS within ``max_len`` steps.
    """
    xs = _check_frames(x, m.n_labels)

    def rank(seq, score):
        return score / (len(seq) - 1) if length_norm else score

    with no_grad():
        beams = [([BOS], 0.0, m.initial_state(xs).values[0])]
        finished = []
        for _ in range(max_len):
            tokens = np.array([b[0][-1] for b in beams])
            logp, h_next = m.step_log_probs(tokens, T.Tensor(np.stack([b[2] for b in beams])))
            candidates = []
            for i, (_, score, _) in enumerate(beams):
                row = logp.values[i]
                for tok in np.argsort(-row, kind="stable")[:beam_width]:
                    candidates.append((score + row[tok], i, int(tok)))
            candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
            alive = []
            for score, i, tok in candidates:
                seq = beams[i][0] + [tok]
                if tok == EOS:
                    finished.append((seq, score))
                else:
                    alive.append((seq, score, h_next.values[i]))
                    if len(alive) == beam_width:
                        break
            beams = alive
            if not beams:
                break
            # Without length normalization scores only fall, so a finished
            # hypothesis at least as good as every live one is final.
            if finished and not length_norm and max(f[1] for f in finished) >= beams[0][1]:
                break
    if finished:
        best = max(range(len(finished)), key=lambda k: (rank(*finished[k]), -k))
        return finished[best][0]
    return beams[0][0]


def nlg_generate(m, x, strategy="greedy", beam_width=4, max_len=60):
    if strategy == "greedy":
        return greedy_decode_batch(m, [x], max_len)[0]
    if strategy == "beam":
        return beam_decode(m, x, beam_width, max_len)
    raise ValueError(f"unknown decoding strategy {strategy!r}")


def generate_batch(m, xs, strategy="greedy", beam_width=4, max_len=60, batch_size=256):
    if strategy == "greedy":
        out = []
        for start in range(0, len(xs), batch_size):
            out.extend(greedy_decode_batch(m, xs[start:start + batch_size], max_len))
        return out
    return [beam_decode(m, x, beam_width, max_len) for x in xs]
