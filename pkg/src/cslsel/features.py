"""Per-pixel reliability features.

Probability maps are ``(K, H, W)`` (or ``(K, N)``) arrays; everything is
computed in float64.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels

PROB_TOL = 1e-5
LOG_FLOOR = 1e-12
STD_FLOOR = 1e-12

METRICS = ("residual_dispersion", "entropy", "residual_entropy", "margin")


def as_probability_map(probs, tol=PROB_TOL):
    """Validate and upcast a probability map (class axis first)."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim < 2:
        raise ValueError(f"probability map needs a leading class axis plus pixels, got shape {p.shape}")
    if p.shape[0] < 2:
        raise ValueError(f"need at least 2 classes, got K={p.shape[0]}")
    if not np.all(p >= 0.0):
        raise ValueError("probabilities must be non-negative and finite")
    s = p.sum(axis=0)
    if not np.all(np.abs(s - 1.0) <= tol):
        worst = float(np.max(np.abs(s - 1.0)))
        raise ValueError(f"per-pixel probabilities must sum to 1 within {tol:g} (worst deviation {worst:.3g})")
    return p


def _flat(p):
    return p.reshape(p.shape[0], -1)


def max_confidence(probs):
    """Per-pixel maximum probability and its class (lowest index on ties)."""
    p = as_probability_map(probs)
    pmax, argmax, _ = kernels.pixel_stats(_flat(p))
    return pmax.reshape(p.shape[1:]), argmax.reshape(p.shape[1:])


def residual_dispersion(probs):
    """Negative mean squared deviation of the non-maximum probabilities.

    ``v = -(1/(K-1)) * sum_{k != k'} (p_k - mu_res)**2`` with ``mu_res`` the mean
    of the non-maximum entries. Always <= 0, and exactly 0 when the residual
    mass is spread evenly (in particular for K = 2).
    """
    p = as_probability_map(probs)
    _, _, disp = kernels.pixel_stats(_flat(p))
    return disp.reshape(p.shape[1:])


def _residual_mask(p2):
    idx = np.argmax(p2, axis=0)
    mask = np.ones(p2.shape, dtype=bool)
    mask[idx, np.arange(p2.shape[1])] = False
    return mask


def alternative_metric(probs, kind):
    """Entropy, residual entropy or top-two margin per pixel.

    Values use their natural orientation (entropies are >= 0, higher means
    less certain); :func:`build_feature_matrix` flips the entropies.
    """
    kind = normalize_metric(kind)
    p = as_probability_map(probs)
    p2 = _flat(p)
    if kind == "residual_dispersion":
        out = kernels.pixel_stats(p2)[2]
    elif kind == "margin":
        top2 = np.partition(p2, p2.shape[0] - 2, axis=0)[-2:]
        out = top2[1] - top2[0]
    else:
        terms = -p2 * np.log(np.maximum(p2, LOG_FLOOR))
        if kind == "residual_entropy":
            terms = np.where(_residual_mask(p2), terms, 0.0)
        out = terms.sum(axis=0)
    return out.reshape(p.shape[1:])


def normalize_metric(kind):
    k = str(kind).strip().lower().replace("-", "_")
    if k not in METRICS:
        raise ValueError(f"unknown metric {kind!r}; choose from {', '.join(METRICS)}")
    return k


@dataclass(frozen=True)
class FeatureMatrix:
    """``values[0]`` is max confidence, ``values[1]`` the dispersion metric.

    Both rows are oriented so that larger means more reliable.
    """

    values: np.ndarray  # (2, N) float64
    argmax: np.ndarray  # (N,) int32
    shape: tuple  # spatial shape the N pixels came from
    metric: str = "residual_dispersion"
    normalized: bool = False

    @property
    def n_pixels(self):
        return self.values.shape[1]


def zscore_rows(values):
    mean = values.mean(axis=1, keepdims=True)
    std = np.maximum(values.std(axis=1, keepdims=True), STD_FLOOR)
    return (values - mean) / std


def build_feature_matrix(probs, metric="residual_dispersion", normalize=False):
    metric = normalize_metric(metric)
    p = as_probability_map(probs)
    p2 = _flat(p)
    pmax, argmax, disp = kernels.pixel_stats(p2)
    if metric == "residual_dispersion":
        second = disp
    else:
        second = alternative_metric(p2, metric).reshape(-1)
        if metric in ("entropy", "residual_entropy"):
            second = -second
    values = np.stack([pmax, second])
    if normalize:
        values = zscore_rows(values)
    return FeatureMatrix(values=values, argmax=argmax, shape=p.shape[1:], metric=metric, normalized=normalize)


def taylor_approximation_error(p_vector, epsilon):
    """Cross-entropy against a smoothed one-hot target vs. its 2nd-order expansion.

    The target puts ``1 - (K-1)*epsilon`` on the arg-max class and ``epsilon``
    elsewhere. The approximation expands each ``log p_k`` around the residual
    mean, which leaves

        -q_max*log p_max - eps*(K-1)*log mu_res - eps*(K-1)**3 * v / (2*(1-p_max)**2)

    Returns ``(exact_ce, approx_ce, abs_error)``. ``abs_error`` is evaluated as
    the difference of the residual terms only (the shared ``q_max*log p_max``
    term cancels analytically, and ``log p_k - log mu_res`` goes through
    ``log1p``), so it stays accurate when the remainder is far below the size
    of the cross-entropy itself.
    """
    p = np.asarray(p_vector, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError("expected a single probability vector")
    as_probability_map(p[:, None])
    K = p.size
    if not 0.0 < epsilon < 1.0 / (K - 1):
        raise ValueError(f"epsilon must lie in (0, 1/(K-1)) = (0, {1.0 / (K - 1):g})")
    pmax_arr, _, v_arr = kernels.pixel_stats(p[:, None])
    pmax, v = float(pmax_arr[0]), float(v_arr[0])
    if pmax >= 1.0:
        raise ZeroDivisionError("max confidence is exactly 1: the dispersion coefficient is singular")
    res = np.sort(p)[:-1]
    mu = res.sum() / (K - 1)
    if mu <= 0.0:
        raise ZeroDivisionError("residual mass is zero: expansion point log(0)")
    q_max = 1.0 - (K - 1) * epsilon
    coef = epsilon * (K - 1) ** 3 / (2.0 * (1.0 - pmax) ** 2)
    log_res = np.log(np.maximum(res, LOG_FLOOR))
    head = -q_max * np.log(pmax)
    exact = head - epsilon * log_res.sum()
    approx = head - epsilon * (K - 1) * np.log(mu) - coef * v
    shift = np.log1p((np.maximum(res, LOG_FLOOR) - mu) / mu)
    err = abs(-epsilon * shift.sum() + coef * v)
    return float(exact), float(approx), float(err)
