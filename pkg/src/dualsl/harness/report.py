"""Multi-run aggregation and the Table-1 style summary."""
import json
from dataclasses import dataclass

import numpy as np

from dualsl.errors import ValidationError
from dualsl.metrics import METRIC_NAMES, EvalReport

# Published numbers (micro-F1, BLEU, ROUGE-1, ROUGE-2, ROUGE-L), for side-by-side display.
PUBLISHED_ROWS = {
    "baseline": ("(a)", "Baseline: Iterative training", (71.14, 55.05, 55.37, 27.95, 39.90)),
    "dsl_lambda0.1": ("(b)", "Dual supervised learning, lambda = 0.1",
                      (72.32, 57.16, 56.37, 29.19, 40.44)),
    "dsl_lambda0.01": ("(c)", "Dual supervised learning, lambda = 0.01",
                       (72.08, 55.07, 55.56, 28.42, 40.04)),
    "dsl_lambda0.001": ("(d)", "Dual supervised learning, lambda = 0.001",
                        (71.71, 56.17, 55.90, 28.44, 40.08)),
    "dsl_without_made_lambda0.1": ("(e)", "Dual supervised learning w/o MADE",
                                   (70.97, 55.96, 55.99, 28.74, 39.98)),
}
ROW_ORDER = list(PUBLISHED_ROWS)
COLUMNS = ("F1", "BLEU", "ROUGE-1", "ROUGE-2", "ROUGE-L")


def cell_label(scheme, lam=None):
    if scheme == "baseline":
        return "baseline"
    return f"{scheme}_lambda{lam:g}"


@dataclass
class Aggregate:
    mean: EvalReport
    sd: dict
    runs: list

    def to_dict(self):
        return {"mean": self.mean.scores(), "sd": self.sd,
                "runs": [r.to_dict() for r in self.runs]}


def aggregate_runs(reports):
    """Arithmetic mean and sample standard deviation per metric."""
    reports = list(reports)
    if not reports:
        raise ValidationError("cannot aggregate zero reports")
    table = np.array([[getattr(r, m) for m in METRIC_NAMES] for r in reports])
    # Sum in a canonical order so the mean does not depend on run order.
    table = np.sort(table, axis=0)
    mean = table.mean(axis=0)
    sd = table.std(axis=0, ddof=1) if len(reports) > 1 else np.zeros(len(METRIC_NAMES))
    return Aggregate(EvalReport(*mean.tolist(), counts={"runs": len(reports)}),
                     dict(zip(METRIC_NAMES, sd.tolist())), reports)


def _ordered(labels):
    known = [l for l in ROW_ORDER if l in labels]
    return known + sorted(l for l in labels if l not in ROW_ORDER)


def emit_report(aggregates, show_paper_reference=False):
    """Return (plain-text table, JSON-ready dict) for ``{label: Aggregate}``."""
    name_width = 44
    header = f"{'Learning Scheme':<{name_width}} | " + " | ".join(f"{c:>8}" for c in COLUMNS)
    lines = [header, "-" * len(header)]
    for label in _ordered(aggregates):
        agg = aggregates[label]
        tag = PUBLISHED_ROWS.get(label, ("", label, None))[0]
        name = f"{tag} {label}".strip()
        cells = " | ".join(f"{agg.mean.scores()[m]:8.2f}" for m in METRIC_NAMES)
        lines.append(f"{name:<{name_width}} | {cells}")
        if show_paper_reference and label in PUBLISHED_ROWS:
            ref = PUBLISHED_ROWS[label][2]
            lines.append(f"{'  published':<{name_width}} | "
                         + " | ".join(f"{v:8.2f}" for v in ref))
    payload = {"columns": list(METRIC_NAMES), "rows": {}}
    for label in _ordered(aggregates):
        payload["rows"][label] = aggregates[label].to_dict()
        if show_paper_reference and label in PUBLISHED_ROWS:
            payload["rows"][label]["published"] = dict(zip(METRIC_NAMES,
                                                           PUBLISHED_ROWS[label][2]))
    return "\n".join(lines) + "\n", payload


def write_report(aggregates, out_dir, show_paper_reference=False):
    text, payload = emit_report(aggregates, show_paper_reference)
    (out_dir / "table1.txt").write_text(text, encoding="utf-8")
    (out_dir / "table1.json").write_text(json.dumps(payload, indent=2, sort_keys=True),
                                         encoding="utf-8")
    return text, payload
