"""GRU language model used as the sentence marginal log P(y)."""
import logging
from dataclasses import dataclass

import numpy as np

from dualsl.autodiff import (
    Adam, AdamConfig, Embedding, GRUCell, Linear, Module, backward, no_grad,
    pad_batch, recording, sequence_token_log_probs,
)
from dualsl.autodiff import tensor as T
from dualsl.errors import ContractError, ValidationError
from dualsl.text import BOS, EOS

log = logging.getLogger(__name__)


@dataclass
class LMConfig:
    embedding_dim: int = 50
    hidden_size: int = 200
    epochs: int = 10
    batch_size: int = 64
    learning_rate: float = 1e-3
    clip_norm: float = 5.0


class LanguageModel(Module):
    def __init__(self, vocab_size, embedding_dim=50, hidden_size=200, seed=0):
        rng = np.random.default_rng(seed)
        self.vocab_size = vocab_size
        self.hidden_size = hidden_size
        self.embedding = Embedding(vocab_size, embedding_dim, rng, "lm.embedding")
        self.cell = GRUCell(embedding_dim, hidden_size, rng, "lm.gru")
        self.output = Linear(hidden_size, vocab_size, rng, "lm.output")

    def config(self):
        return {"vocab_size": self.vocab_size,
                "embedding_dim": self.embedding.table.shape[1],
                "hidden_size": self.hidden_size}

    def batch_log_probs(self, sequences):
        """Per-sequence log-probability Tensor of shape [batch]."""
        ids, mask = pad_batch(sequences)
        h0 = T.Tensor(np.zeros((len(sequences), self.hidden_size)))
        return sequence_token_log_probs(self.cell, self.embedding, self.output, ids, mask, h0)


def _check_utterance(tokens, vocab_size):
    if len(tokens) < 2 or tokens[0] != BOS or tokens[-1] != EOS:
        raise ContractError("utterance must be framed by BOS ... EOS")
    if max(tokens) >= vocab_size or min(tokens) < 0:
        raise ContractError("token id outside the vocabulary")


def _token_ids(u):
    return list(u.tokens) if hasattr(u, "tokens") else list(u)


def sentence_log_probability(model, y):
    """log P(y) in nats, scoring every token after BOS up to and including EOS."""
    tokens = _token_ids(y)
    _check_utterance(tokens, model.vocab_size)
    with no_grad():
        return float(model.batch_log_probs([tokens]).values[0])


def score_corpus(model, corpus, batch_size=256):
    """Vector of log P(y) for every utterance, batched."""
    seqs = [_token_ids(u) for u in corpus]
    for s in seqs:
        _check_utterance(s, model.vocab_size)
    out = np.empty(len(seqs))
    with no_grad():
        for start in range(0, len(seqs), batch_size):
            chunk = seqs[start:start + batch_size]
            out[start:start + len(chunk)] = model.batch_log_probs(chunk).values
    return out


def perplexity(model, corpus):
    seqs = [_token_ids(u) for u in corpus]
    if not seqs:
        raise ValidationError("perplexity of an empty corpus")
    total = score_corpus(model, seqs).sum()
    n_tokens = sum(len(s) - 1 for s in seqs)
    return float(np.exp(-total / n_tokens))


def train_language_model(corpus, vocab_size, config=None, seed=0, on_epoch=None):
    """Fit a LanguageModel by teacher-forced next-token cross-entropy.

    Returns the model and the list of epoch-averaged per-token losses.
    """
    config = config or LMConfig()
    seqs = [_token_ids(u) for u in corpus]
    if not seqs:
        raise ValidationError("cannot train a language model on an empty corpus")
    init_seed, order_seed = np.random.SeedSequence(seed).spawn(2)
    model = LanguageModel(vocab_size, config.embedding_dim, config.hidden_size,
                          seed=init_seed.generate_state(1)[0])
    opt = Adam(model.parameters(), AdamConfig(learning_rate=config.learning_rate,
                                              clip_norm=config.clip_norm))
    rng = np.random.default_rng(order_seed)
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(seqs))
        total, count = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = [seqs[i] for i in order[start:start + config.batch_size]]
            n_tok = sum(len(s) - 1 for s in batch)
            with recording() as tape:
                loss = -model.batch_log_probs(batch).sum() * (1.0 / n_tok)
                backward(loss, tape)
            opt.step()
            total += loss.item() * n_tok
            count += n_tok
        history.append(total / count)
        log.info("lm epoch %d loss %.4f", epoch + 1, history[-1])
        if on_epoch is not None:
            on_epoch(epoch, history[-1])
    return model, history
