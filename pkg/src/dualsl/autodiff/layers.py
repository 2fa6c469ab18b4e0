"""Parameter containers and the recurrent building blocks shared by all models."""
import numpy as np

from dualsl.autodiff import tensor as T
from dualsl.autodiff.tensor import Parameter


class Module:
    """Collects Parameters from attributes, sub-modules and lists of sub-modules."""

    def parameters(self):
        return list(self._walk())

    def named_parameters(self):
        return {p.name: p for p in self._walk()}

    def _walk(self):
        for value in vars(self).values():
            if isinstance(value, Parameter):
                yield value
            elif isinstance(value, Module):
                yield from value._walk()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Parameter):
                        yield item
                    elif isinstance(item, Module):
                        yield from item._walk()

    def state_arrays(self):
        return {name: p.values for name, p in self.named_parameters().items()}

    def load_state_arrays(self, arrays):
        for name, p in self.named_parameters().items():
            p.values[...] = arrays[name]


def uniform_init(rng, shape, scale):
    return rng.uniform(-scale, scale, size=shape)


class Linear(Module):
    def __init__(self, n_in, n_out, rng, name):
        scale = 1.0 / np.sqrt(n_in)
        self.weight = Parameter(f"{name}.weight", uniform_init(rng, (n_in, n_out), scale))
        self.bias = Parameter(f"{name}.bias", np.zeros(n_out))

    def __call__(self, x):
        return x @ self.weight + self.bias


class Embedding(Module):
    def __init__(self, n_tokens, dim, rng, name):
        self.table = Parameter(f"{name}.table", rng.normal(0.0, 0.1, size=(n_tokens, dim)))

    def __call__(self, ids):
        return self.table[np.asarray(ids)]


class GRUCell(Module):
    """Gated recurrent unit; gate blocks are laid out [reset | update | candidate]."""

    def __init__(self, n_in, n_hidden, rng, name):
        scale = 1.0 / np.sqrt(n_hidden)
        self.n_hidden = n_hidden
        self.w_in = Parameter(f"{name}.w_in", uniform_init(rng, (n_in, 3 * n_hidden), scale))
        self.w_hid = Parameter(f"{name}.w_hid",
                               uniform_init(rng, (n_hidden, 3 * n_hidden), scale))
        self.b_in = Parameter(f"{name}.b_in", uniform_init(rng, (3 * n_hidden,), scale))
        self.b_hid = Parameter(f"{name}.b_hid", uniform_init(rng, (3 * n_hidden,), scale))

    def __call__(self, x, h):
        H = self.n_hidden
        gx = x @ self.w_in + self.b_in
        gh = h @ self.w_hid + self.b_hid
        r = T.sigmoid(gx[:, :H] + gh[:, :H])
        z = T.sigmoid(gx[:, H:2 * H] + gh[:, H:2 * H])
        n = T.tanh(gx[:, 2 * H:] + r * gh[:, 2 * H:])
        return n + z * (h - n)


def pad_batch(sequences, pad_id=0):
    """Right-pad id sequences into a [batch, max_len] array plus a 0/1 mask."""
    width = max(len(s) for s in sequences)
    ids = np.full((len(sequences), width), pad_id, dtype=np.int64)
    mask = np.zeros((len(sequences), width))
    for i, s in enumerate(sequences):
        ids[i, :len(s)] = s
        mask[i, :len(s)] = 1.0
    return ids, mask


def sequence_token_log_probs(cell, embedding, output, ids, mask, h0):
    """Teacher-forced per-sequence log-likelihood of ids[:, 1:] given ids[:, :-1].

    Returns a Tensor of shape [batch] with padded positions excluded.
    """
    batch, width = ids.shape
    h = h0
    states = []
    for t in range(width - 1):
        h = cell(embedding(ids[:, t]), h)
        states.append(h)
    hs = T.stack(states, axis=0).reshape((width - 1) * batch, cell.n_hidden)
    logp = T.log_softmax(output(hs), axis=-1)
    targets = ids[:, 1:].T.reshape(-1)
    picked = logp[np.arange(targets.size), targets].reshape(width - 1, batch)
    return (picked * mask[:, 1:].T).sum(axis=0)
