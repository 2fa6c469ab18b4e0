import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dualsl.autodiff import finite_difference_check, no_grad
from dualsl.errors import ConfigurationError, ContractError
from dualsl.harness.synthetic import (
    brute_force_joint_oracle, oracle_duality_residual, synthetic_task_generate,
)
from dualsl.lm import LanguageModel, score_corpus
from dualsl.made import MadeConfig, MadeEnsemble, ensemble_log_probability
from dualsl.metrics import micro_f1
from dualsl.models import NlgModel, NluModel, generate_batch, nlu_predict_batch
from dualsl.trainer import (
    DualPair, Marginals, TrainingConfig, TrainingData, dsl_step, dual_objective,
    duality_residual, train_baseline, train_dsl,
)


def _task(D=3, seed=0):
    task = synthetic_task_generate(D, seed=seed)
    return task, brute_force_joint_oracle(task)


def _pair(task, seed=0, emb=8, hidden=16):
    V = len(task.vocab)
    return DualPair(NlgModel(task.D, V, emb, hidden, seed=seed),
                    NluModel(task.D, V, emb, hidden, seed=seed + 100))


def _exact_data(task, oracle, xs, ys):
    log_px = np.array([oracle.log_px_of(task, x) for x in xs])
    log_py = np.array([oracle.log_py_of(y) for y in ys])
    return TrainingData(np.asarray(xs), list(ys), log_px, log_py)


def _all_values(pair):
    return [p.values.copy() for p in pair.nlg.parameters() + pair.nlu.parameters()]


# -- residual --------------------------------------------------------------------

def test_residual_examples():
    assert duality_residual(-3, -10, -5, -8).residual == 0
    rec = duality_residual(-3, -10, -5, -10)
    assert rec.residual == 4 and rec.gap == 2


def test_residual_rejects_non_finite():
    with pytest.raises(ContractError):
        duality_residual(-np.inf, -1, -1, -1)
    with pytest.raises(ContractError):
        duality_residual(np.nan, -1, -1, -1)


@settings(max_examples=200, deadline=None)
@given(*[st.floats(-50, 0) for _ in range(4)])
def test_residual_non_negative_and_zero_iff_balanced(a, b, c, d):
    rec = duality_residual(a, b, c, d)
    assert rec.residual >= 0
    assert rec.residual == pytest.approx((a + b - c - d) ** 2)
    assert duality_residual(a, b, c, a + b - c).residual == pytest.approx(0, abs=1e-20)


# -- gradients of the full objective -------------------------------------------------

@pytest.mark.parametrize("n_examples", [1, 2])
def test_full_dsl_loss_gradient(n_examples):
    task, oracle = _task(3)
    xs = task.frames[[5, 2]][:n_examples]
    ys = [task.utterance(x) for x in xs]
    data = _exact_data(task, oracle, xs, ys)
    pair = _pair(task, seed=1, emb=3, hidden=4)

    def build():
        return dual_objective(pair, xs, ys, data.log_px, data.log_py, 0.1, 0.3)

    for params, numeric in ((pair.nlg.parameters(), lambda: build().nlg_objective),
                            (pair.nlu.parameters(), lambda: build().nlu_objective)):
        rep = finite_difference_check(lambda: build().surrogate, params, tolerance=1e-4,
                                      numeric_loss=numeric)
        assert rep.passed, rep.flagged[:3]


# -- dsl_step ----------------------------------------------------------------------

def test_zero_lambda_step_is_bit_identical_to_baseline():
    task, oracle = _task(4)
    xs, ys = task.sample(16, seed=3)
    data = _exact_data(task, oracle, xs, ys)
    results = []
    for scheme in ("baseline", "dsl", "dsl_without_made"):
        cfg = TrainingConfig(scheme=scheme, lambda_xy=0.0, lambda_yx=0.0)
        pair = _pair(task, seed=2).attach_optimizers(cfg.adam())
        for _ in range(3):
            dsl_step((data.frames, data.utterances), pair, cfg, data.log_px, data.log_py)
        results.append(_all_values(pair))
    for other in results[1:]:
        assert all(np.array_equal(a, b) for a, b in zip(results[0], other))


def test_step_decreases_objective_at_small_learning_rate():
    task, oracle = _task(4)
    xs, ys = task.sample(8, seed=4)
    data = _exact_data(task, oracle, xs, ys)
    cfg = TrainingConfig(scheme="dsl", lambda_xy=0.1, lambda_yx=0.1, learning_rate=1e-4)
    pair = _pair(task, seed=3).attach_optimizers(cfg.adam())

    def objectives():
        with no_grad():
            o = dual_objective(pair, xs, ys, data.log_px, data.log_py, 0.1, 0.1)
            return o.nlg_objective.item(), o.nlu_objective.item()

    before = objectives()
    dsl_step((xs, ys), pair, cfg, data.log_px, data.log_py)
    after = objectives()
    assert after[0] < before[0] and after[1] < before[1]


def test_scheme_and_marginal_contracts():
    task, oracle = _task(3)
    xs, ys = task.sample(4)
    pair = _pair(task).attach_optimizers(TrainingConfig().adam())
    with pytest.raises(ContractError):
        dsl_step((xs, ys), pair, TrainingConfig(scheme="dsl"))
    with pytest.raises(ContractError):
        dsl_step((xs[:0], []), pair, TrainingConfig())
    with pytest.raises(ConfigurationError):
        TrainingConfig(scheme="alternating")
    with pytest.raises(ConfigurationError):
        TrainingConfig(lambda_xy=-1.0)
    data = TrainingData(xs, ys)
    with pytest.raises(ContractError):
        train_baseline(data, pair, TrainingConfig(scheme="dsl"))
    with pytest.raises(ContractError):
        train_dsl(data, pair, TrainingConfig(scheme="baseline"))
    with pytest.raises(ConfigurationError):
        train_dsl(data, pair, TrainingConfig(scheme="dsl"))


# -- full training runs ---------------------------------------------------------------

def test_zero_lambda_training_equals_baseline_training():
    task, oracle = _task(4)
    xs, ys = task.sample(100, seed=1)
    data = _exact_data(task, oracle, xs, ys)
    base_pair, base_log = train_baseline(data, _pair(task, 5),
                                         TrainingConfig(scheme="baseline", epochs=2, seed=9))
    dsl_pair, dsl_log = train_dsl(data, _pair(task, 5),
                                  TrainingConfig(scheme="dsl", lambda_xy=0, lambda_yx=0,
                                                 epochs=2, seed=9))
    assert all(np.array_equal(a, b) for a, b in zip(_all_values(base_pair),
                                                    _all_values(dsl_pair)))
    strip = lambda log: [{k: v for k, v in r.items() if k != "wallclock_s"}
                         for r in log.epochs]
    assert strip(base_log) == strip(dsl_log)


def test_baseline_nlg_independent_of_nlu_side():
    task, oracle = _task(3)
    xs, ys = task.sample(40, seed=2)
    data = _exact_data(task, oracle, xs, ys)
    cfg = TrainingConfig(scheme="baseline", epochs=2)
    a, _ = train_baseline(data, _pair(task, 0), cfg)
    other = _pair(task, 0)
    other.nlu = NluModel(task.D, len(task.vocab), 8, 16, seed=777)  # different NLU init
    b, _ = train_baseline(data, other, cfg)
    assert all(np.array_equal(p.values, q.values)
               for p, q in zip(a.nlg.parameters(), b.nlg.parameters()))


class _Spy:
    def __init__(self, fn):
        self.fn, self.calls = fn, []

    def __call__(self, arg):
        self.calls.append(arg)
        return self.fn(arg)


def test_made_and_independent_schemes_differ_only_in_frame_scorer():
    task, oracle = _task(4)
    xs, ys = task.sample(64, seed=5)
    exact = _exact_data(task, oracle, xs, ys)
    frame_scores = lambda X: np.array([oracle.log_px_of(task, x) for x in X])
    sentence_scores = lambda Y: np.array([oracle.log_py_of(y) for y in Y])
    pairs, spies = [], []
    for scheme in ("dsl", "dsl_without_made"):
        spy = _Spy(frame_scores)
        cfg = TrainingConfig(scheme=scheme, epochs=2, seed=3)
        pair, log = train_dsl(TrainingData(xs, ys), _pair(task, 6), cfg,
                              Marginals(spy, _Spy(sentence_scores)))
        pairs.append(_all_values(pair))
        spies.append(spy)
    assert all(len(s.calls) == 1 and np.array_equal(s.calls[0], xs) for s in spies)
    assert all(np.array_equal(a, b) for a, b in zip(*pairs))
    # Swapping only the frame scorer changes the result.
    cfg = TrainingConfig(scheme="dsl_without_made", epochs=2, seed=3)
    shifted, _ = train_dsl(TrainingData(xs, ys), _pair(task, 6), cfg,
                           Marginals(lambda X: frame_scores(X) - 0.5, sentence_scores))
    assert not all(np.array_equal(a, b) for a, b in zip(pairs[0], _all_values(shifted)))
    assert np.array_equal(exact.log_px, frame_scores(xs))


def test_frozen_marginals_untouched_and_log_schema(tmp_path):
    task, _ = _task(4)
    xs, ys = task.sample(48, seed=6)
    lm = LanguageModel(len(task.vocab), 4, 8, seed=0)
    ens = MadeEnsemble.create(4, MadeConfig(hidden_sizes=(8,), ensemble_size=2), seed=0)
    frozen_before = [p.values.copy() for p in lm.parameters() + ens.parameters()]
    marginals = Marginals(lambda X: ensemble_log_probability(ens, X),
                          lambda Y: score_corpus(lm, Y))
    cfg = TrainingConfig(scheme="dsl", epochs=2)
    _, log = train_dsl(TrainingData(xs, ys), _pair(task), cfg, marginals)
    frozen_after = [p.values for p in lm.parameters() + ens.parameters()]
    assert all(np.array_equal(a, b) for a, b in zip(frozen_before, frozen_after))
    assert all(p.grad is None for p in lm.parameters() + ens.parameters())
    log.write_jsonl(tmp_path / "log.jsonl")
    rows = [json.loads(l) for l in (tmp_path / "log.jsonl").read_text().splitlines()]
    assert [r["epoch"] for r in rows] == [1, 2]
    for r in rows:
        assert set(r) == {"epoch", "nlg_loss", "nlu_loss", "duality_residual_mean",
                          "wallclock_s"}
        assert r["duality_residual_mean"] >= 0


def test_memorizable_task_residual_lower_with_dsl():
    task, oracle = _task(3)
    xs, ys = task.frames, [task.utterance(x) for x in task.frames]  # 8 examples
    data = _exact_data(task, oracle, xs, ys)
    residuals = {}
    for scheme in ("baseline", "dsl"):
        cfg = TrainingConfig(scheme=scheme, lambda_xy=0.1, lambda_yx=0.1, epochs=200,
                             batch_size=8, seed=0)
        trainer = train_baseline if scheme == "baseline" else train_dsl
        pair, _ = trainer(data, _pair(task, 0), cfg)
        residuals[scheme] = oracle_duality_residual(task, oracle, pair.nlg, pair.nlu)
    assert residuals["dsl"] < residuals["baseline"]


def _exact_match_and_f1(pair, task):
    X = task.frames
    gold = [list(task.utterance(x).tokens) for x in X]
    hyps = generate_batch(pair.nlg, X, max_len=15)
    em = np.mean([h == g for h, g in zip(hyps, gold)])
    pred = nlu_predict_batch(pair.nlu, [task.utterance(x) for x in X])
    f1 = micro_f1([set(np.flatnonzero(p)) for p in pred], [set(np.flatnonzero(g)) for g in X])
    return em, f1


@pytest.mark.parametrize("epochs", [10, 40])
def test_toy_task_capacity(epochs):
    """Baseline NLU memorizes in 10 epochs; with 40 both schemes memorize fully."""
    task, oracle = _task(3)
    xs = np.repeat(task.frames, 16, axis=0)
    ys = [task.utterance(x) for x in xs]
    data = _exact_data(task, oracle, xs, ys)
    scores = {"baseline": [], "dsl": []}
    for seed in range(3):
        for scheme in scores:
            cfg = TrainingConfig(scheme=scheme, epochs=epochs, batch_size=16, seed=seed,
                                 learning_rate=1e-2)
            trainer = train_baseline if scheme == "baseline" else train_dsl
            pair, _ = trainer(data, _pair(task, seed), cfg)
            scores[scheme].append(_exact_match_and_f1(pair, task))
    base, dsl = np.mean(scores["baseline"], axis=0), np.mean(scores["dsl"], axis=0)
    assert base[1] == pytest.approx(100.0)
    if epochs >= 40:
        assert dsl[0] >= base[0] and dsl[1] >= base[1]
