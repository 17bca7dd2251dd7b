"""Quality of a pseudo-label selection against ground truth."""
import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional

import numpy as np

from .arraystore import IGNORE_INDEX


@dataclass
class QualityReport:
    soft_sampling_rate: float
    hard_sampling_rate: float
    accuracy_hard: Optional[float]
    accuracy_soft: Optional[float]
    recall: Dict[int, float]
    mean_recall: Optional[float]
    n_pixels: int
    n_ignored: int
    per_class: Dict[int, dict] = field(default_factory=dict)

    def as_dict(self):
        d = asdict(self)
        d["recall"] = {str(k): v for k, v in self.recall.items()}
        d["per_class"] = {str(k): v for k, v in self.per_class.items()}
        return d

    def to_json(self, **kw):
        return json.dumps(self.as_dict(), sort_keys=True, **kw)


def _ratio(num, den):
    return float(num) / float(den) if den > 0 else None


def score(selection, pred_labels, gt, ignore_index=IGNORE_INDEX, hard_mask=None):
    """Score a selection.

    ``selection`` is a ``SelectionOutcome`` or a bare weight map; for a bare
    map the hard set is ``weights == 1`` unless ``hard_mask`` is passed.
    Pixels whose ground truth equals ``ignore_index`` are left out of every
    count. Accuracies over an empty selection are ``None``.
    """
    weights = np.asarray(getattr(selection, "weights", selection), dtype=np.float64)
    if hard_mask is None:
        hard_mask = getattr(selection, "hard_mask", None)
    hard = weights == 1.0 if hard_mask is None else np.asarray(hard_mask, dtype=bool)
    pred = np.asarray(pred_labels)
    gt = np.asarray(gt)
    if not (weights.shape == hard.shape == pred.shape == gt.shape):
        raise ValueError(f"shape mismatch: weights {weights.shape}, pred {pred.shape}, gt {gt.shape}")
    if np.any((weights < 0) | (weights > 1)) or not np.all(np.isfinite(weights)):
        raise ValueError("weights must lie in [0, 1]")

    valid = gt != ignore_index
    w = weights[valid]
    h = hard[valid]
    g = gt[valid]
    p = pred[valid]
    correct = p == g
    n = int(valid.sum())

    recall = {}
    per_class = {}
    for c in np.unique(g).tolist():
        in_c = g == c
        recall[c] = float(np.sum(h & correct & in_c)) / float(in_c.sum())
        pred_c = h & (p == c)
        per_class[c] = {
            "pixels": int(in_c.sum()),
            "sampling": float(h[in_c].mean()),
            "accuracy": _ratio(np.sum(pred_c & correct), pred_c.sum()),
            "recall": recall[c],
        }
    return QualityReport(
        soft_sampling_rate=float(w.mean()) if n else 0.0,
        hard_sampling_rate=float(h.mean()) if n else 0.0,
        accuracy_hard=_ratio(np.sum(h & correct), h.sum()),
        accuracy_soft=_ratio(np.sum(w * correct), w.sum()),
        recall=recall,
        mean_recall=float(np.mean(list(recall.values()))) if recall else None,
        n_pixels=n,
        n_ignored=int(gt.size - n),
        per_class=per_class,
    )


DELTA_FIELDS = ("accuracy_hard", "accuracy_soft", "hard_sampling_rate", "soft_sampling_rate", "mean_recall")


def compare(methods, pred_labels, gt, ignore_index=IGNORE_INDEX):
    """Score each ``(name, selection)`` and list pairwise differences.

    Rows are ordered by name; each delta is ``second - first`` for the pair in
    that order.
    """
    methods = sorted(methods, key=lambda m: m[0])
    if not methods:
        raise ValueError("need at least one method")
    names = [m[0] for m in methods]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate method names: {names}")
    reports = [(name, score(sel, pred_labels, gt, ignore_index)) for name, sel in methods]
    deltas = []
    for (na, ra), (nb, rb) in itertools.combinations(reports, 2):
        row = {"first": na, "second": nb}
        for f in DELTA_FIELDS:
            va, vb = getattr(ra, f), getattr(rb, f)
            row[f] = None if va is None or vb is None else vb - va
        deltas.append(row)
    return {
        "methods": [dict(name=n, **r.as_dict()) for n, r in reports],
        "deltas": deltas,
    }


def _fmt(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.4f}"
    return str(v)


def format_table(table):
    """Aligned plain-text rendering of a :func:`compare` result."""
    cols = ("name", "hard_sampling_rate", "soft_sampling_rate", "accuracy_hard", "accuracy_soft", "mean_recall")
    rows = [[_fmt(m.get(c)) for c in cols] for m in table["methods"]]
    lines = [_align([list(cols)] + rows)]
    if table["deltas"]:
        dcols = ("first", "second") + DELTA_FIELDS
        drows = [[_fmt(d.get(c)) for c in dcols] for d in table["deltas"]]
        lines.append(_align([list(dcols)] + drows))
    return "\n\n".join(lines)


def format_report(report):
    d = report.as_dict()
    keys = ("hard_sampling_rate", "soft_sampling_rate", "accuracy_hard", "accuracy_soft", "mean_recall", "n_pixels", "n_ignored")
    return _align([[k, _fmt(d[k])] for k in keys])


def _align(rows):
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(cell.ljust(wd) for cell, wd in zip(r, widths)).rstrip() for r in rows)
