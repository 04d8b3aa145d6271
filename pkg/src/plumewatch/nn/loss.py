"""Concentration-weighted pixelwise binary cross-entropy.

Positive pixels are upweighted by the methane column: w = 1 + alpha * dCH4,
negatives keep w = 1, and the loss is the weighted mean over all pixels.
Logs are epsilon-clamped; the gradient through the clamp is zero, so a
saturated perfect prediction really has zero gradient.
"""

from __future__ import annotations

import numpy as np

from .layers import sigmoid

LOSS_EPS = 1e-7


def pixel_weights(mask: np.ndarray, delta_ch4: np.ndarray, alpha: float) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    w = np.ones(mask.shape, dtype=np.float64)
    w[mask] += alpha * np.asarray(delta_ch4, dtype=np.float64)[mask]
    return w


def weighted_bce_loss(prob, mask, delta_ch4=None, alpha: float = 10.0, eps: float = LOSS_EPS) -> float:
    """Loss value from probabilities (not logits); matches the training loss."""
    prob = np.asarray(prob, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if delta_ch4 is None:
        delta_ch4 = np.zeros(mask.shape)
    w = pixel_weights(mask, delta_ch4, alpha)
    p = np.clip(prob, eps, 1.0 - eps)
    y = mask.astype(np.float64)
    bce = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    return float((w * bce).mean())


def weighted_bce_from_logits(logits, mask, delta_ch4, alpha: float, eps: float = LOSS_EPS):
    """Returns (loss, dloss/dlogits). Gradient is w*(p - y)/M off the clamp,
    exactly zero where the probability was clamped."""
    z = np.asarray(logits, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    y = mask.astype(np.float64)
    w = pixel_weights(mask, delta_ch4, alpha)
    p = sigmoid(z)
    clamped_lo = p < eps
    clamped_hi = p > 1.0 - eps
    pc = np.clip(p, eps, 1.0 - eps)
    bce = -(y * np.log(pc) + (1.0 - y) * np.log1p(-pc))
    m = z.size
    loss = float((w * bce).sum() / m)
    dz = w * (p - y) / m
    dz[clamped_lo | clamped_hi] = 0.0
    return loss, dz.astype(z.dtype)
