"""Trusted mask perturbation: zero out random patches of reliable pixels.

A ``ceil(H/s) x ceil(W/s)`` grid of uniform draws decides which patches are
masked (draw < ratio, so ``ratio`` is the masked fraction); only pixels in
the hard-selected reliable set are ever zeroed. Unreliable content is always
kept intact.

Draws come from numpy's PCG64 bit generator seeded with ``seed``; each
uniform is ``(raw64 >> 11) * 2**-53`` taken row-major over the grid, which
keeps the stream independent of numpy's distribution code.
"""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PerturbationMask:
    zero_out: np.ndarray  # (H, W) bool
    patch_size: int
    ratio: float
    seed: int

    @property
    def shape(self):
        return self.zero_out.shape


def uniform_grid(rows, cols, seed):
    """Row-major ``rows x cols`` grid of U[0, 1) doubles from PCG64(seed)."""
    bits = np.random.PCG64(seed).random_raw(rows * cols)
    return ((bits >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)).reshape(rows, cols)


def make_mask(reliable, patch_size=32, ratio=0.7, seed=0):
    """Patch mask over the reliable pixels.

    ``reliable`` is a boolean ``(H, W)`` map or anything with a ``hard_mask``
    attribute (e.g. a ``SelectionOutcome``).
    """
    hard = np.asarray(getattr(reliable, "hard_mask", reliable), dtype=bool)
    if hard.ndim != 2:
        raise ValueError(f"reliable mask must be H x W, got shape {hard.shape}")
    s = int(patch_size)
    if s < 1:
        raise ValueError("patch_size must be >= 1")
    if not 0.0 <= ratio <= 1.0:
        raise ValueError("ratio must be in [0, 1]")
    H, W = hard.shape
    gh, gw = -(-H // s), -(-W // s)
    cover = uniform_grid(gh, gw, seed) < ratio
    cover = np.repeat(np.repeat(cover, s, axis=0), s, axis=1)[:H, :W]
    return PerturbationMask(zero_out=cover & hard, patch_size=s, ratio=float(ratio), seed=int(seed))


def apply_mask(image, mask):
    """Copy of a ``(C, H, W)`` image with masked pixels set to 0 in every channel."""
    img = np.asarray(image)
    zero = mask.zero_out if isinstance(mask, PerturbationMask) else np.asarray(mask, dtype=bool)
    if img.ndim != 3 or img.shape[1:] != zero.shape:
        raise ValueError(f"image shape {img.shape} does not match mask {zero.shape} (expected C x H x W)")
    out = img.copy()
    out[:, zero] = 0
    return out
