import numpy as np
import pytest

from plumewatch.raster import CLEAR, SceneImage
from plumewatch.spectra import build_toy_lut, default_spectral_context

from datetime import datetime, timezone


def make_scene(
    rng=None,
    size=64,
    site_id="site-test",
    when=None,
    wind=(3.0, 1.0),
    sza=30.0,
    vza=5.0,
    sensor="S2",
    base=None,
    cloud_mask=None,
):
    """Small textured test scene; deterministic given an rng."""
    rng = rng or np.random.default_rng(0)
    base = base if base is not None else np.array([0.18, 0.22, 0.28, 0.33, 0.36, 0.31])
    bands = np.empty((6, size, size), dtype=np.float32)
    texture = rng.uniform(0.9, 1.1, size=(size, size))
    for b in range(6):
        bands[b] = base[b] * texture * rng.uniform(0.98, 1.02, size=(size, size))
    if cloud_mask is None:
        cloud_mask = np.zeros((size, size), dtype=np.uint8)
    return SceneImage(
        site_id=site_id,
        acquisition_time=when or datetime(2024, 3, 1, 10, 30, tzinfo=timezone.utc),
        sensor=sensor,
        bands=bands,
        cloud_mask=cloud_mask,
        wind_u=wind[0],
        wind_v=wind[1],
        solar_zenith=sza,
        viewing_zenith=vza,
    )


@pytest.fixture(scope="session")
def lut():
    return build_toy_lut()


@pytest.fixture(scope="session")
def ctx():
    return default_spectral_context()
