"""Assembly of the 16-channel detector input stack.

Channel order (fixed; stored in the model file together with the
standardization statistics):

    0-5   target bands   blue, green, red, nir, swir1, swir2
    6-11  reference bands, same order
    12    cloud channel: 0 = clear, 1 = cloud/shadow/missing
    13    retrieval ratio plane (NaN replaced by the neutral value 1.0)
    14    wind u, broadcast constant (m/s before standardization)
    15    wind v, broadcast constant
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import BAND_NAMES, CLEAR, SceneImage
from .validation import check_same_shape

N_CHANNELS = 16

CHANNEL_NAMES = (
    tuple(f"target_{b}" for b in BAND_NAMES)
    + tuple(f"reference_{b}" for b in BAND_NAMES)
    + ("cloud", "ratio", "wind_u", "wind_v")
)


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel standardization statistics (mean, std), std floored."""

    mean: np.ndarray  # (16,)
    std: np.ndarray  # (16,)

    def __post_init__(self):
        if self.mean.shape != (N_CHANNELS,) or self.std.shape != (N_CHANNELS,):
            raise ValueError("stats must have one entry per channel")

    def apply(self, stack: np.ndarray) -> np.ndarray:
        std = np.maximum(self.std, 1e-6)
        return (stack - self.mean[:, None, None]) / std[:, None, None]

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "ChannelStats":
        return ChannelStats(np.asarray(d["mean"], dtype=np.float64),
                            np.asarray(d["std"], dtype=np.float64))


def assemble_input(
    scene: SceneImage,
    reference: SceneImage,
    retrieval,
    stats: ChannelStats | None = None,
) -> np.ndarray:
    """Build the (16, H, W) float32 stack; standardized when stats are given."""
    check_same_shape(
        scene.bands[0], reference.bands[0], retrieval.ratio,
        names=["scene", "reference", "retrieval"],
    )
    h, w = scene.cloud_mask.shape
    ratio = np.nan_to_num(retrieval.ratio, nan=1.0, posinf=1.0, neginf=1.0)
    planes = np.empty((N_CHANNELS, h, w), dtype=np.float32)
    planes[0:6] = scene.bands
    planes[6:12] = reference.bands
    planes[12] = (scene.cloud_mask != CLEAR).astype(np.float32)
    planes[13] = ratio
    planes[14] = scene.wind_u
    planes[15] = scene.wind_v
    if stats is not None:
        planes = stats.apply(planes.astype(np.float64)).astype(np.float32)
    return planes


def compute_channel_stats(stacks: list[np.ndarray]) -> ChannelStats:
    """Estimate per-channel mean/std from raw (unstandardized) stacks."""
    if not stacks:
        raise ValueError("need at least one stack")
    flat = np.concatenate([s.reshape(N_CHANNELS, -1) for s in stacks], axis=1)
    return ChannelStats(
        mean=flat.mean(axis=1).astype(np.float64),
        std=flat.std(axis=1).astype(np.float64),
    )
