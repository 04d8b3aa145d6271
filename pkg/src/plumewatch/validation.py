"""Input validation helpers, in the spirit of sklearn's ``check_*`` utilities.

These raise early with readable messages instead of letting shape or range
errors surface deep inside numpy broadcasting.
"""

from __future__ import annotations

import numpy as np


def check_plane(arr, name: str = "plane") -> np.ndarray:
    """Require a finite 2-D float array."""
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    return arr


def check_same_shape(*arrays, names=None) -> None:
    shapes = [np.asarray(a).shape for a in arrays]
    if len(set(shapes)) > 1:
        labels = names or [f"array{i}" for i in range(len(arrays))]
        detail = ", ".join(f"{n}={s}" for n, s in zip(labels, shapes))
        raise ValueError(f"shape mismatch: {detail}")


def check_probability_map(prob, name: str = "probability map") -> np.ndarray:
    prob = check_plane(prob, name)
    if not np.all(np.isfinite(prob)):
        raise ValueError(f"{name} contains non-finite values")
    if prob.min() < 0.0 or prob.max() > 1.0:
        raise ValueError(f"{name} values must lie in [0, 1]")
    return prob


def check_binary_mask(mask, name: str = "mask") -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {mask.shape}")
    if mask.dtype != bool:
        vals = np.unique(mask)
        if not np.all(np.isin(vals, (0, 1))):
            raise ValueError(f"{name} must be binary")
        mask = mask.astype(bool)
    return mask


def check_input_stack(stack, n_channels: int = 16, divisor: int = 1) -> np.ndarray:
    """Validate a (C, H, W) model input stack."""
    stack = np.asarray(stack)
    if stack.ndim != 3 or stack.shape[0] != n_channels:
        raise ValueError(
            f"input stack must be ({n_channels}, H, W), got shape {stack.shape}"
        )
    h, w = stack.shape[1:]
    if divisor > 1 and (h % divisor or w % divisor):
        raise ValueError(f"spatial dims {h}x{w} must be divisible by {divisor}")
    if not np.all(np.isfinite(stack)):
        raise ValueError("input stack contains non-finite values")
    return stack
