"""Corpus BLEU-4, ROUGE-1/2/L and micro-F1. All scores are percentages."""
import math
from collections import Counter
from dataclasses import asdict, dataclass, field

from dualsl.errors import ContractError, ValidationError

ROUGE_L_BETA = math.inf


def ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def clipped_matches(hypothesis, references, n):
    """(clipped n-gram matches, total hypothesis n-grams) against the reference set."""
    hyp = ngrams(hypothesis, n)
    max_ref = Counter()
    for ref in references:
        for gram, c in ngrams(ref, n).items():
            if c > max_ref[gram]:
                max_ref[gram] = c
    matched = sum(min(c, max_ref[g]) for g, c in hyp.items())
    return matched, max(len(hypothesis) - n + 1, 0)


def closest_ref_length(hyp_len, references):
    return min((abs(len(r) - hyp_len), len(r)) for r in references)[1]


def corpus_bleu(hypotheses, reference_sets, max_n=4):
    """Corpus-level BLEU without smoothing; brevity uses the closest reference length."""
    if not hypotheses:
        raise ValidationError("BLEU of an empty hypothesis list")
    if len(hypotheses) != len(reference_sets):
        raise ContractError("one reference set per hypothesis is required")
    matched = [0] * max_n
    total = [0] * max_n
    hyp_len = ref_len = 0
    for hyp, refs in zip(hypotheses, reference_sets):
        if not refs:
            raise ValidationError("empty reference set")
        hyp_len += len(hyp)
        ref_len += closest_ref_length(len(hyp), refs)
        for n in range(1, max_n + 1):
            m, t = clipped_matches(hyp, refs, n)
            matched[n - 1] += m
            total[n - 1] += t
    if min(matched) == 0 or hyp_len == 0:
        return 0.0
    log_precision = sum(math.log(m / t) for m, t in zip(matched, total)) / max_n
    brevity = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * brevity * math.exp(log_precision)


def rouge_n_instance(hypothesis, references, n):
    """Best n-gram recall over the references, as a fraction."""
    best = 0.0
    hyp = ngrams(hypothesis, n)
    for ref in references:
        ref_grams = ngrams(ref, n)
        denom = sum(ref_grams.values())
        if denom == 0:
            continue
        overlap = sum(min(c, hyp[g]) for g, c in ref_grams.items())
        best = max(best, overlap / denom)
    return best


def rouge_n(hypotheses, reference_sets, n):
    """Instance-mean ROUGE-N recall."""
    hypotheses, reference_sets = _as_corpus(hypotheses, reference_sets)
    scores = [rouge_n_instance(h, r, n) for h, r in zip(hypotheses, reference_sets)]
    return 100.0 * math.fsum(scores) / len(scores)


def lcs_length(a, b):
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l_instance(hypothesis, references, beta=ROUGE_L_BETA):
    best = 0.0
    for ref in references:
        lcs = lcs_length(hypothesis, ref)
        if lcs == 0:
            continue
        recall = lcs / len(ref)
        precision = lcs / len(hypothesis)
        if math.isinf(beta):
            f = recall
        else:
            f = (1 + beta ** 2) * recall * precision / (recall + beta ** 2 * precision)
        best = max(best, f)
    return best


def rouge_l(hypotheses, reference_sets, beta=ROUGE_L_BETA):
    hypotheses, reference_sets = _as_corpus(hypotheses, reference_sets)
    scores = [rouge_l_instance(h, r, beta) for h, r in zip(hypotheses, reference_sets)]
    return 100.0 * math.fsum(scores) / len(scores)


def _as_corpus(hypotheses, reference_sets):
    if not hypotheses:
        raise ValidationError("ROUGE of an empty corpus")
    if len(hypotheses) != len(reference_sets):
        raise ContractError("one reference set per hypothesis is required")
    return hypotheses, reference_sets


def micro_f1(predicted, gold):
    """Pooled-count F1 over label sets."""
    if len(predicted) != len(gold):
        raise ContractError(f"{len(predicted)} predictions for {len(gold)} gold instances")
    tp = fp = fn = 0
    for p, g in zip(predicted, gold):
        p, g = set(p), set(g)
        tp += len(p & g)
        fp += len(p - g)
        fn += len(g - p)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0:
        return 0.0
    return 100.0 * 2 * precision * recall / (precision + recall)


METRIC_NAMES = ("nlu_micro_f1", "bleu", "rouge_1", "rouge_2", "rouge_l")


@dataclass
class EvalReport:
    nlu_micro_f1: float
    bleu: float
    rouge_1: float
    rouge_2: float
    rouge_l: float
    counts: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in METRIC_NAMES:
            v = getattr(self, name)
            if not 0.0 <= v <= 100.0 + 1e-9:
                raise ValidationError(f"{name}={v} outside [0, 100]")

    def scores(self):
        return {name: getattr(self, name) for name in METRIC_NAMES}

    def to_dict(self):
        return asdict(self)


def evaluate_nlg(hypotheses, reference_sets, beta=ROUGE_L_BETA):
    return {"bleu": corpus_bleu(hypotheses, reference_sets),
            "rouge_1": rouge_n(hypotheses, reference_sets, 1),
            "rouge_2": rouge_n(hypotheses, reference_sets, 2),
            "rouge_l": rouge_l(hypotheses, reference_sets, beta)}
