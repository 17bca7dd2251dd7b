"""Cross-entropy loss quantities for supervised, weighted and masked branches."""
from dataclasses import dataclass

import numpy as np

from .arraystore import IGNORE_INDEX, validate_labels
from .features import LOG_FLOOR, as_probability_map

NORMS = ("all_pixels", "selected_mass")
DEFAULT_LAMBDAS = (0.5, 0.5)


def weighted_ce(pred, target, weights, norm="all_pixels", ignore_index=IGNORE_INDEX):
    """Mean of ``weights * -log pred[target]`` over the non-ignored pixels.

    ``norm='all_pixels'`` divides by the number of non-ignored pixels,
    ``'selected_mass'`` by the total weight (floored at 1). An empty valid set
    gives 0.
    """
    if norm not in NORMS:
        raise ValueError(f"norm must be one of {NORMS}, got {norm!r}")
    p = as_probability_map(pred)
    K, spatial = p.shape[0], p.shape[1:]
    t = validate_labels(target, K, ignore_index)
    w = np.asarray(weights, dtype=np.float64)
    if t.shape != spatial or w.shape != spatial:
        raise ValueError(f"shape mismatch: pred {p.shape}, target {t.shape}, weights {w.shape}")
    valid = t != ignore_index
    if not valid.any():
        return 0.0
    p2 = p.reshape(K, -1)
    tv = t.reshape(-1)[valid.reshape(-1)]
    picked = p2[tv, np.flatnonzero(valid.reshape(-1))]
    wv = w[valid]
    num = float(np.sum(wv * -np.log(np.maximum(picked, LOG_FLOOR))))
    den = float(valid.sum()) if norm == "all_pixels" else max(float(wv.sum()), 1.0)
    return num / den


def supervised_ce(pred, target, ignore_index=IGNORE_INDEX):
    p = np.asarray(pred)
    return weighted_ce(p, target, np.ones(p.shape[1:]), "all_pixels", ignore_index)


def combined_unsupervised(l_a, l_m, lambda1=DEFAULT_LAMBDAS[0], lambda2=DEFAULT_LAMBDAS[1]):
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError("loss weights must be non-negative")
    return lambda1 * l_a + lambda2 * l_m


@dataclass(frozen=True)
class LossBreakdown:
    l_sup: float
    l_u_a: float
    l_u_m: float
    l_u: float
    lambda1: float
    lambda2: float
    pixel_norm: str

    def as_dict(self):
        return dict(self.__dict__)


def loss_breakdown(
    pseudo_labels,
    weights,
    pred_strong,
    pred_masked=None,
    pred_labeled=None,
    labels=None,
    lambda1=DEFAULT_LAMBDAS[0],
    lambda2=DEFAULT_LAMBDAS[1],
    norm="all_pixels",
    ignore_index=IGNORE_INDEX,
):
    """All loss terms for one image.

    The masked-branch loss is the same weighted CE evaluated on predictions
    for the perturbed image (``pred_masked``); without it the term reuses
    ``pred_strong``. The supervised term is 0 unless a labeled prediction and
    its labels are supplied.
    """
    l_a = weighted_ce(pred_strong, pseudo_labels, weights, norm, ignore_index)
    l_m = l_a if pred_masked is None else weighted_ce(pred_masked, pseudo_labels, weights, norm, ignore_index)
    l_sup = 0.0
    if pred_labeled is not None and labels is not None:
        l_sup = supervised_ce(pred_labeled, labels, ignore_index)
    return LossBreakdown(
        l_sup=l_sup,
        l_u_a=l_a,
        l_u_m=l_m,
        l_u=combined_unsupervised(l_a, l_m, lambda1, lambda2),
        lambda1=float(lambda1),
        lambda2=float(lambda2),
        pixel_norm=norm,
    )
