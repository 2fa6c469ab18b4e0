"""Masked autoencoder density estimation over binary label vectors.

Connectivity follows the degree rule: a hidden unit with degree m may see
inputs of degree <= m, and an output of degree d may see hidden units of
degree < d. Each output therefore depends only on inputs that precede it in
the sampled ordering, which makes the product of Bernoulli outputs a
normalized distribution over {0, 1}^D.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from dualsl.autodiff import Adam, AdamConfig, Module, Parameter, backward, no_grad, recording
from dualsl.autodiff import tensor as T
from dualsl.errors import ValidationError

log = logging.getLogger(__name__)


@dataclass
class MadeConfig:
    hidden_sizes: tuple = (200, 200)
    ensemble_size: int = 10
    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 1e-3
    clip_norm: float = 5.0
    activation: str = "relu"


@dataclass
class MaskedLayerSet:
    """Degrees per layer (input first, output last) and the masks they imply."""

    input_degrees: np.ndarray
    hidden_degrees: list
    masks: list = field(default_factory=list)

    def __post_init__(self):
        if not self.masks:
            self.masks = build_masks(self.input_degrees, self.hidden_degrees)

    @property
    def n_inputs(self):
        return len(self.input_degrees)

    def connectivity(self):
        """Boolean [output, input] reachability through the masked layers."""
        reach = self.masks[0].astype(bool)
        for m in self.masks[1:]:
            reach = (m.astype(np.int64) @ reach.astype(np.int64)) > 0
        return reach


def build_masks(input_degrees, hidden_degrees):
    """Masks laid out [out, in] per layer, output degrees equal to input degrees."""
    masks = []
    prev = np.asarray(input_degrees)
    for deg in hidden_degrees:
        deg = np.asarray(deg)
        masks.append((deg[:, None] >= prev[None, :]).astype(np.uint8))
        prev = deg
    out = np.asarray(input_degrees)
    masks.append((out[:, None] > prev[None, :]).astype(np.uint8))
    return masks


def sample_ordering_and_masks(D, hidden_widths, seed):
    if D < 2:
        raise ValidationError("MADE needs at least two input dimensions")
    if any(w < 1 for w in hidden_widths):
        raise ValidationError("hidden widths must be positive")
    rng = np.random.default_rng(seed)
    input_degrees = rng.permutation(D) + 1
    hidden = [rng.integers(1, D, size=w) for w in hidden_widths]
    return MaskedLayerSet(input_degrees, hidden)


class MadeNetwork(Module):
    def __init__(self, layer_set, seed=0, activation="relu", name="made"):
        rng = np.random.default_rng(seed)
        self.layer_set = layer_set
        self.activation = activation
        self.weights = []
        self.biases = []
        last = len(layer_set.masks) - 1
        for i, mask in enumerate(layer_set.masks):
            n_out, n_in = mask.shape
            # Scale by the unmasked fan-in of each unit; degree-1 units see a single
            # input and would otherwise start with a vanishing signal.
            fan_in = np.maximum(mask.sum(axis=1, keepdims=True), 1)
            gain = 6.0 if i < last else 3.0
            weight = rng.uniform(-1.0, 1.0, size=(n_out, n_in)) * np.sqrt(gain / fan_in)
            self.weights.append(Parameter(f"{name}.layer{i}.weight", weight))
            # A small positive hidden bias keeps ReLU units alive on all-zero inputs.
            bias = np.full(n_out, 0.1 if i < last else 0.0)
            self.biases.append(Parameter(f"{name}.layer{i}.bias", bias))

    @property
    def D(self):
        return self.layer_set.n_inputs

    def logits(self, x):
        x = np.asarray(x, dtype=float)
        if not np.all((x == 0) | (x == 1)):
            raise ValidationError("MADE inputs must be binary")
        h = T.Tensor(np.atleast_2d(x))
        last = len(self.weights) - 1
        for i, (w, b, m) in enumerate(zip(self.weights, self.biases, self.layer_set.masks)):
            h = T.masked_linear(h, w, m, b)
            if i < last:
                h = T.apply_activation(self.activation, h)
        return h

    def log_prob_tensor(self, x):
        """Per-row log p(x) as a Tensor of shape [batch]."""
        x2 = np.atleast_2d(np.asarray(x, dtype=float))
        return T.bernoulli_log_prob(self.logits(x2), x2).sum(axis=1)


def made_forward(net, x):
    """Bernoulli probabilities p(x_d = 1 | preceding inputs)."""
    with no_grad():
        z = net.logits(x).values
    p = T._sigmoid(z)
    return p[0] if np.ndim(x) == 1 else p


def frame_log_probability(net, x):
    with no_grad():
        out = net.log_prob_tensor(x).values
    return float(out[0]) if np.ndim(x) == 1 else out


class MadeEnsemble:
    def __init__(self, members):
        self.members = list(members)

    def __len__(self):
        return len(self.members)

    @classmethod
    def create(cls, D, config=None, seed=0):
        config = config or MadeConfig()
        seeds = np.random.SeedSequence(seed).spawn(config.ensemble_size)
        members = []
        for k, ss in enumerate(seeds):
            mask_seed, init_seed = ss.generate_state(2)
            layer_set = sample_ordering_and_masks(D, list(config.hidden_sizes), mask_seed)
            members.append(MadeNetwork(layer_set, seed=init_seed,
                                       activation=config.activation, name=f"made{k}"))
        return cls(members)

    def parameters(self):
        return [p for m in self.members for p in m.parameters()]


def ensemble_log_probability(ens, x):
    """log of the mean member probability."""
    per_member = np.stack([np.atleast_1d(frame_log_probability(m, x)) for m in ens.members])
    out = logsumexp(per_member, axis=0) - np.log(len(ens.members))
    return float(out[0]) if np.ndim(x) == 1 else out


def train_made(ens, frames, config=None, seed=0, on_epoch=None):
    """Maximum-likelihood training of each member on the same data.

    Returns per-member lists of epoch-averaged negative log-likelihoods.
    """
    config = config or MadeConfig()
    data = np.asarray(frames, dtype=float)
    if data.ndim != 2 or len(data) == 0:
        raise ValidationError("train_made needs a non-empty [N, D] array of frames")
    histories = []
    for k, (member, ss) in enumerate(zip(ens.members,
                                         np.random.SeedSequence(seed).spawn(len(ens)))):
        rng = np.random.default_rng(ss)
        opt = Adam(member.parameters(), AdamConfig(learning_rate=config.learning_rate,
                                                   clip_norm=config.clip_norm))
        history = []
        for epoch in range(config.epochs):
            order = rng.permutation(len(data))
            total = 0.0
            for start in range(0, len(order), config.batch_size):
                batch = data[order[start:start + config.batch_size]]
                with recording() as tape:
                    loss = -member.log_prob_tensor(batch).mean()
                    backward(loss, tape)
                opt.step()
                total += loss.item() * len(batch)
            history.append(total / len(data))
            if on_epoch is not None:
                on_epoch(k, epoch, history[-1])
        log.info("made member %d final nll %.4f", k, history[-1])
        histories.append(history)
    return histories


class IndependentMarginal:
    """Product of per-label Bernoullis with add-one smoothed frequencies."""

    def __init__(self, probs):
        self.probs = np.asarray(probs, dtype=float)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = (x * np.log(self.probs) + (1.0 - x) * np.log1p(-self.probs)).sum(axis=-1)
        return float(out) if x.ndim == 1 else out


def independent_marginal_estimator(frames):
    data = np.asarray(frames, dtype=float)
    if data.ndim != 2 or len(data) == 0:
        raise ValidationError("independent estimator needs a non-empty [N, D] array")
    return IndependentMarginal((data.sum(axis=0) + 1.0) / (len(data) + 2.0))


class EnsembleScorer:
    """Callable wrapper so MADE and the independent estimator share one interface."""

    def __init__(self, ens):
        self.ensemble = ens

    def __call__(self, x):
        return ensemble_log_probability(self.ensemble, x)
