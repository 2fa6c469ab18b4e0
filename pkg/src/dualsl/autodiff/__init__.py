from dualsl.autodiff.tensor import (
    DTYPE, Parameter, Tape, Tensor, add, apply_activation, as_tensor, backward,
    bernoulli_log_prob, concat, current_tape, detach, exp, getitem, log,
    log_softmax, masked_linear, matmul, mean, mul, no_grad, power, recording,
    relu, reshape, sigmoid, softmax, stack, sub, tanh, transpose, tsum,
)
from dualsl.autodiff.optim import Adam, AdamConfig, adam_update, clip_grad_norm, zero_grad
from dualsl.autodiff.gradcheck import GradCheckReport, finite_difference_check
from dualsl.autodiff.layers import (
    Embedding, GRUCell, Linear, Module, pad_batch, sequence_token_log_probs,
)
