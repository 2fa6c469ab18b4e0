"""Central finite-difference verification of tape gradients."""
from dataclasses import dataclass, field

import numpy as np

from dualsl.autodiff.tensor import backward, no_grad, recording


@dataclass
class GradCheckReport:
    max_rel_error: dict
    flagged: list = field(default_factory=list)
    tolerance: float = 1e-4

    @property
    def passed(self):
        return not self.flagged

    @property
    def worst(self):
        return max(self.max_rel_error.values(), default=0.0)


def relative_error(analytic, numeric, floor=1e-5):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def finite_difference_check(model_loss, params, step=1e-5, tolerance=1e-4,
                            max_coords=None, seed=0, floor=1e-5, numeric_loss=None):
    """Compare tape gradients of ``model_loss()`` against central differences.

    ``model_loss`` is a zero-argument callable returning a scalar Tensor built
    from the current parameter values. With ``max_coords`` set, that many
    coordinates per parameter are sampled instead of checking all of them.
    Gradients smaller than ``floor`` are compared in absolute terms: central
    differences at step 1e-5 carry roughly 1e-10 * |loss| of roundoff.
    ``numeric_loss`` is differenced instead of ``model_loss`` when the taped
    loss is a surrogate whose gradient (for ``params``) should match it.
    """
    numeric_loss = model_loss if numeric_loss is None else numeric_loss
    for p in params:
        p.grad = None
    with recording() as tape:
        loss = model_loss()
        backward(loss, tape)
    analytic = {p.name: (np.zeros_like(p.values) if p.grad is None else p.grad.copy())
                for p in params}
    for p in params:
        p.grad = None

    rng = np.random.default_rng(seed)
    report = GradCheckReport(max_rel_error={}, tolerance=tolerance)
    for p in params:
        flat = p.values.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        worst = 0.0
        for i in coords:
            original = flat[i]
            with no_grad():
                flat[i] = original + step
                up = numeric_loss().item()
                flat[i] = original - step
                down = numeric_loss().item()
            flat[i] = original
            numeric = (up - down) / (2.0 * step)
            a = analytic[p.name].reshape(-1)[i]
            err = relative_error(a, numeric, floor)
            worst = max(worst, err)
            if err > tolerance:
                report.flagged.append((p.name, int(i), float(a), float(numeric), err))
        report.max_rel_error[p.name] = worst
    return report
