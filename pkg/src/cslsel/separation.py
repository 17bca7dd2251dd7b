"""Reliable/unreliable pixel separation.

The feature matrix ``phi`` (2 x N) is split in two by the eigenvectors of the
N x N kernel ``phi.T @ phi``: pixel ``n`` goes to the side whose unit
eigenvector has the larger magnitude at ``n``. Those eigenvectors are never
formed densely; they are ``phi.T @ w_i / sigma_i`` where ``(sigma_i**2, w_i)``
are the eigenpairs of the 2 x 2 Gram matrix ``phi @ phi.T``.
"""
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import kernels
from .features import FeatureMatrix, build_feature_matrix, normalize_metric, zscore_rows

RANK_TOL = 1e-12
VAR_FLOOR = 1e-12
BRUTE_FORCE_MAX_N = 20


@dataclass(frozen=True)
class SeparationConfig:
    alpha: float = 8.0
    hard_rule: str = "and"
    metric: str = "residual_dispersion"
    normalize: bool = False
    class_specific: bool = False
    min_class_pixels: int = 8

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        rule = str(self.hard_rule).lower()
        if rule not in ("and", "or"):
            raise ValueError(f"hard_rule must be 'and' or 'or', got {self.hard_rule!r}")
        object.__setattr__(self, "hard_rule", rule)
        object.__setattr__(self, "metric", normalize_metric(self.metric))
        if self.min_class_pixels < 1:
            raise ValueError("min_class_pixels must be >= 1")


@dataclass
class SelectionOutcome:
    """Result of a selection.

    ``assignment`` holds the raw two-way split (0/1). For class-specific runs
    it is relabelled so that 1 always marks the reliable side, and ``mu`` /
    ``sigma`` are ``(K, 2)`` with NaN rows for classes that were not present.
    """

    assignment: np.ndarray
    reliable_class: int
    mu: np.ndarray
    sigma: np.ndarray
    weights: np.ndarray
    hard_mask: np.ndarray
    fallback_used: bool = False
    labels: Optional[np.ndarray] = None
    notes: list = field(default_factory=list)

    @property
    def shape(self):
        return self.weights.shape


class Partition(NamedTuple):
    assignment: np.ndarray
    fallback_used: bool


def _values(phi):
    if isinstance(phi, FeatureMatrix):
        return phi.values
    phi = np.asarray(phi, dtype=np.float64)
    if phi.ndim != 2 or phi.shape[0] != 2:
        raise ValueError(f"feature matrix must be 2 x N, got shape {phi.shape}")
    return phi


def gram_eigenpairs(a, b, d):
    """Closed-form eigenpairs of the symmetric matrix ``[[a, b], [b, d]]``.

    Returns ``(lam1, lam2, w1, w2)`` with ``lam1 >= lam2`` and orthonormal
    ``w1``, ``w2``.
    """
    half_tr = 0.5 * (a + d)
    disc = math.hypot(0.5 * (a - d), b)
    lam1 = half_tr + disc
    # det / lam1 avoids the cancellation in half_tr - disc when nearly rank 1
    lam2 = (a * d - b * b) / lam1 if lam1 > 0 else half_tr - disc
    lam2 = min(lam2, lam1)
    if b == 0.0:
        w1 = np.array([1.0, 0.0]) if a >= d else np.array([0.0, 1.0])
    elif a >= d:
        w1 = np.array([lam1 - d, b])
    else:
        w1 = np.array([b, lam1 - a])
    w1 = w1 / math.hypot(w1[0], w1[1])
    w2 = np.array([-w1[1], w1[0]])
    return lam1, lam2, w1, w2


def spectral_partition(phi):
    """Two-way split from the top-2 eigenvectors of ``phi.T @ phi``.

    ``assignment[n] = argmax_i |u_i(n)|`` (ties go to 0). When the two
    feature rows are (numerically) collinear, ``det(G) / (G00 * G11) < 1e-12``,
    the second eigenvector carries no information and the split falls back to
    thresholding the first feature at its mean; ``fallback_used`` reports that.
    The test is scale-free on purpose: raw dispersion values can be ~1e-8
    while max confidence is ~1, which is badly scaled but not degenerate.
    """
    x = _values(phi)
    if x.shape[1] < 2:
        raise ValueError("need at least 2 pixels to partition")
    a, b, d = kernels.gram2(x)
    lam1, lam2, w1, w2 = gram_eigenpairs(a, b, d)
    if not (a > 0.0 and d > 0.0 and (a * d - b * b) / (a * d) >= RANK_TOL and lam2 > 0.0):
        return Partition((x[0] > x[0].mean()).astype(np.uint8), True)
    assign = kernels.spectral_assign(x, w1, math.sqrt(lam1), w2, math.sqrt(lam2))
    return Partition(assign, False)


def within_class_ss(phi, assignment):
    """Sum over both classes of squared distances to the class mean."""
    x = _values(phi)
    a = np.asarray(assignment).astype(bool)
    total = 0.0
    for side in (~a, a):
        if side.any():
            sub = x[:, side]
            total += float(((sub - sub.mean(axis=1, keepdims=True)) ** 2).sum())
    return total


def brute_force_partition(phi):
    """Exhaustive minimiser of the within-class sum of squares.

    Enumerates every non-trivial binary assignment; among equal objectives the
    lexicographically smallest assignment wins (so ``assignment[0] == 0``).
    Refuses ``N > 20``.
    """
    x = _values(phi)
    N = x.shape[1]
    if N > BRUTE_FORCE_MAX_N:
        raise ValueError(f"brute force limited to N <= {BRUTE_FORCE_MAX_N} (2**N assignments), got N={N}")
    if N < 2:
        raise ValueError("need at least 2 points")
    mask, _ = kernels.brute_force_search(x.T)
    assignment = ((mask >> (N - 1 - np.arange(N))) & 1).astype(np.uint8)
    return assignment, within_class_ss(x, assignment)


def _stats(x):
    return x.mean(axis=1), x.std(axis=1)


def _outcome_from_stats(x, mu, sigma, cfg):
    var = np.maximum(sigma**2, VAR_FLOOR)
    return kernels.gaussian_weights(x, mu, var, cfg.alpha, cfg.hard_rule == "and")


def _fallback(x, cfg):
    mu, sigma = _stats(x)
    w, _ = _outcome_from_stats(x, mu, sigma, cfg)
    hard = x[0] > mu[0]
    w[hard] = 1.0
    return w, hard, mu, sigma


def gaussian_weights(phi, assignment, cfg=None, reliable_class=None, fallback_used=False):
    """Gaussian soft weights around the reliable side plus the hard indicator.

    The reliable side is the one with the larger mean of feature row 0 unless
    ``reliable_class`` is given. ``weights[n] = prod_c exp(-(h_n(c) - mu_c)**2
    / (alpha * sigma_c**2))`` with per-feature mean and (population) standard
    deviation over the reliable pixels; pixels above ``mu`` on both features
    (``hard_rule='and'``) or on either (``'or'``) get weight 1.
    """
    cfg = cfg or SeparationConfig()
    x = _values(phi)
    a = np.asarray(assignment).astype(np.uint8).reshape(-1)
    if a.size != x.shape[1]:
        raise ValueError("assignment length does not match the feature matrix")
    if reliable_class is None:
        means = [x[0, a == c].mean() if np.any(a == c) else -np.inf for c in (0, 1)]
        reliable_class = int(means[1] > means[0])
    side = a == reliable_class
    if side.sum() < cfg.min_class_pixels:
        w, hard, mu, sigma = _fallback(x, cfg)
        fallback_used = True
    else:
        mu, sigma = _stats(x[:, side])
        w, hard = _outcome_from_stats(x, mu, sigma, cfg)
    return SelectionOutcome(
        assignment=a,
        reliable_class=int(reliable_class),
        mu=mu,
        sigma=sigma,
        weights=w,
        hard_mask=hard,
        fallback_used=bool(fallback_used),
    )


def _separate(values, cfg):
    part = spectral_partition(values)
    return gaussian_weights(values, part.assignment, cfg, fallback_used=part.fallback_used)


def select(probs, cfg=None):
    """Full selection on a ``(K, H, W)`` probability map."""
    cfg = cfg or SeparationConfig()
    probs = np.asarray(probs)
    fm = build_feature_matrix(probs, cfg.metric, normalize=cfg.normalize and not cfg.class_specific)
    spatial = fm.shape
    if cfg.class_specific:
        out = _select_per_class(fm, probs.shape[0], cfg)
    elif fm.n_pixels < 2:
        mu, sigma = _stats(fm.values)
        out = SelectionOutcome(
            assignment=np.zeros(fm.n_pixels, np.uint8), reliable_class=0, mu=mu, sigma=sigma,
            weights=np.ones(fm.n_pixels), hard_mask=np.ones(fm.n_pixels, bool), fallback_used=True,
        )
    else:
        out = _separate(fm.values, cfg)
    out.assignment = out.assignment.reshape(spatial)
    out.weights = out.weights.reshape(spatial)
    out.hard_mask = out.hard_mask.reshape(spatial)
    out.labels = fm.argmax.reshape(spatial)
    return out


def _select_per_class(fm, K, cfg):
    N = fm.n_pixels
    weights = np.zeros(N)
    hard = np.zeros(N, dtype=bool)
    reliable = np.zeros(N, dtype=np.uint8)
    mu = np.full((K, 2), np.nan)
    sigma = np.full((K, 2), np.nan)
    fallback = False
    notes = []
    for k in range(K):
        idx = np.flatnonzero(fm.argmax == k)
        if idx.size == 0:
            continue
        x = fm.values[:, idx]
        if cfg.normalize:
            x = zscore_rows(x)
        if idx.size < cfg.min_class_pixels:
            w, h, m, s = _fallback(x, cfg)
            res = SelectionOutcome(h.astype(np.uint8), 1, m, s, w, h, True)
            notes.append(f"class {k}: {idx.size} pixels < min_class_pixels, mean-confidence fallback")
        else:
            res = _separate(x, cfg)
            res.assignment = (res.assignment == res.reliable_class).astype(np.uint8)
            if res.fallback_used:
                notes.append(f"class {k}: degenerate features, fallback")
        weights[idx] = res.weights
        hard[idx] = res.hard_mask
        reliable[idx] = res.assignment
        mu[k], sigma[k] = res.mu, res.sigma
        fallback |= res.fallback_used
    return SelectionOutcome(reliable, 1, mu, sigma, weights, hard, fallback, notes=notes)


def threshold_baseline(probs, tau=0.95):
    """Binary weights ``p_max > tau``."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must be in (0, 1), got {tau}")
    fm = build_feature_matrix(probs)
    pmax = fm.values[0]
    hard = pmax > tau
    spatial = fm.shape
    return SelectionOutcome(
        assignment=hard.astype(np.uint8).reshape(spatial),
        reliable_class=1,
        mu=np.array([tau, np.nan]),
        sigma=np.array([np.nan, np.nan]),
        weights=hard.astype(np.float64).reshape(spatial),
        hard_mask=hard.reshape(spatial),
        labels=fm.argmax.reshape(spatial),
    )
