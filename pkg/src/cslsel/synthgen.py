"""Synthetic label maps and miscalibrated predictions with known correctness.

The generative model is made up for testing: Voronoi ground truth, a planted
fraction of wrong predictions, sharpened (overconfident) softmax outputs, and
wrong pixels that push most of their residual mass onto the true class. That
last piece gives wrong pixels lopsided residuals while their max confidence
stays as high as that of correct pixels.
"""
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class SynthConfig:
    height: int = 64
    width: int = 64
    classes: int = 8
    error_rate: float = 0.2
    temperature: float = 0.25
    confusion_mass: float = 0.6
    region_seeds: int = 16
    seed: int = 0
    noise_std: float = 0.1
    gain_low: float = 2.0
    gain_high: float = 4.0

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("height and width must be >= 1")
        if self.classes < 2:
            raise ValueError("need at least 2 classes")
        if not 0.0 <= self.error_rate <= 1.0:
            raise ValueError("error_rate must be in [0, 1]")
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")
        if not 0.0 <= self.confusion_mass <= 1.0:
            raise ValueError("confusion_mass must be in [0, 1]")
        if self.region_seeds < 1:
            raise ValueError("region_seeds must be >= 1")

    def as_dict(self):
        return asdict(self)


def voronoi_labels(height, width, classes, n_seeds, rng):
    """Label each pixel with the class of its nearest random seed point."""
    pts = rng.uniform(0.0, 1.0, size=(n_seeds, 2)) * np.array([height, width])
    cls = rng.integers(0, classes, size=n_seeds)
    yy = np.arange(height)[:, None] + 0.5
    xx = np.arange(width)[None, :] + 0.5
    best = np.full((height, width), np.inf)
    lab = np.zeros((height, width), dtype=np.int32)
    for (py, px), c in zip(pts, cls):
        d = (yy - py) ** 2 + (xx - px) ** 2
        closer = d < best
        best[closer] = d[closer]
        lab[closer] = c
    return lab


def generate(cfg):
    """Return ``(probs (K,H,W) float64, gt (H,W) int32, correct (H,W) bool)``."""
    rng = np.random.default_rng(cfg.seed)
    K, H, W = cfg.classes, cfg.height, cfg.width
    N = H * W
    gt = voronoi_labels(H, W, K, cfg.region_seeds, rng).reshape(-1)

    wrong = rng.random(N) < cfg.error_rate
    shift = rng.integers(1, K, size=N)
    pred = np.where(wrong, (gt + shift) % K, gt)

    gain = rng.uniform(cfg.gain_low, cfg.gain_high, size=N)
    logits = rng.normal(0.0, cfg.noise_std, size=(K, N))
    cols = np.arange(N)
    logits[pred, cols] += gain

    z = logits / cfg.temperature
    z -= z.max(axis=0)
    p = np.exp(z)
    p /= p.sum(axis=0)

    idx = np.flatnonzero(wrong)
    if idx.size and cfg.confusion_mass > 0:
        sub = p[:, idx]
        top = sub[pred[idx], np.arange(idx.size)]
        resid = 1.0 - top
        sub *= 1.0 - cfg.confusion_mass
        sub[pred[idx], np.arange(idx.size)] = top
        sub[gt[idx], np.arange(idx.size)] += cfg.confusion_mass * resid
        p[:, idx] = sub

    correct = np.argmax(p, axis=0) == gt
    return p.reshape(K, H, W), gt.reshape(H, W), correct.reshape(H, W)
