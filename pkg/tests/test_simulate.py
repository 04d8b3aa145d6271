import numpy as np
import pytest

from conftest import make_scene
from plumewatch.errors import RotationRejectedError
from plumewatch.fixtures import (
    FixtureConfig,
    build_plume_bank,
    generate_site_series,
    make_plume_label,
)
from plumewatch.raster import PlumeLabel
from plumewatch.simulate import (
    TrainingSampler,
    inject_plume,
    rotate_plume,
    simulate_probability,
    wind_compatible,
)


class TestInjectPlume:
    def test_unit_tau_is_identity(self):
        scene = make_scene(size=16)
        ones = np.ones((16, 16))
        out = inject_plume(scene, ones, ones)
        np.testing.assert_array_equal(out.bands, scene.bands)
        assert out.acquisition_time == scene.acquisition_time

    def test_patch_multiplies_swir2_exactly(self):
        scene = make_scene(np.random.default_rng(0), size=16)
        tau2 = np.ones((16, 16))
        tau2[4:8, 4:8] = 0.9
        out = inject_plume(scene, np.ones((16, 16)), tau2)
        np.testing.assert_allclose(
            out.band("swir2")[4:8, 4:8],
            (scene.band("swir2").astype(np.float64) * 0.9)[4:8, 4:8].astype(np.float32),
        )
        np.testing.assert_array_equal(out.band("swir1"), scene.band("swir1"))
        np.testing.assert_array_equal(out.band("nir"), scene.band("nir"))

    def test_tau_outside_unit_interval_rejected(self):
        scene = make_scene(size=16)
        bad = np.ones((16, 16))
        bad[0, 0] = 1.2
        with pytest.raises(ValueError):
            inject_plume(scene, np.ones((16, 16)), bad)
        bad[0, 0] = 0.0
        with pytest.raises(ValueError):
            inject_plume(scene, np.ones((16, 16)), bad)


class TestWindRules:
    @pytest.mark.parametrize(
        "plume,clear,expected",
        [
            (3.0, 4.0, True),   # 1 m/s apart, moderate wind
            (5.0, 9.5, False),  # clear image too windy
            (2.0, 4.0, False),  # 2 m/s apart
            (8.9, 8.9, True),
            (9.0, 9.0, True),   # cutoff inclusive
            (0.0, 1.4, True),
        ],
    )
    def test_cases(self, plume, clear, expected):
        assert wind_compatible(plume, clear) is expected

    def test_equal_speeds_compatible_up_to_cutoff(self):
        for x in (0.0, 3.3, 9.0):
            assert wind_compatible(x, x) is True
        assert wind_compatible(9.5, 9.5) is False

    def test_negative_speed_rejected(self):
        with pytest.raises(ValueError):
            wind_compatible(-1.0, 2.0)

    def test_simulate_probability_strata(self):
        assert simulate_probability(0) == 1.0
        for n in (1, 3, 5):
            assert simulate_probability(n) == 0.9
        for n in (6, 8, 100):
            assert simulate_probability(n) == 0.1


def _bar_label(size=32):
    mask = np.zeros((size, size), dtype=bool)
    delta = np.zeros((size, size), dtype=np.float32)
    row = size // 2
    mask[row, 6 : size - 6] = True
    delta[row, 6 : size - 6] = 0.3
    delta[row, 6] = 0.5  # unique maximum marks the rotation origin
    return PlumeLabel(mask=mask, delta_ch4=delta)


class TestRotatePlume:
    def test_zero_rotation_is_identity(self):
        label = _bar_label()
        out = rotate_plume(label, 40.0, 40.0)
        np.testing.assert_allclose(out.delta_ch4, label.delta_ch4, atol=1e-9)
        np.testing.assert_array_equal(out.mask, label.mask)

    def test_full_turn_matches_zero_rotation(self):
        rng = np.random.default_rng(1)
        label = make_plume_label(rng, (48, 48), 2.0, 1.0, 3.0)
        out0 = rotate_plume(label, 10.0, 10.0)
        out360 = rotate_plume(label, 10.0, 370.0)
        np.testing.assert_allclose(out360.delta_ch4, out0.delta_ch4, atol=1e-6)

    def test_quarter_turn_transposes_bar(self):
        label = _bar_label()
        out = rotate_plume(label, 0.0, 90.0)
        origin = np.unravel_index(np.argmax(label.delta_ch4), label.delta_ch4.shape)
        # the bar ran along +x from the origin; rotating +90 deg sends it to +y
        ys, xs = np.nonzero(out.mask)
        assert np.all(np.abs(xs - origin[1]) <= 1)
        assert ys.max() > origin[0] + 10

    def test_mass_preserved_within_two_percent(self):
        # interior rotations: canvas large enough that nothing clips off-grid
        rng = np.random.default_rng(2)
        for direction in (30.0, 75.0, 140.0):
            label = make_plume_label(rng, (96, 96), 3.0, 0.5, 4.0)
            assert label.n_pixels >= 50
            out = rotate_plume(label, 0.0, direction)
            assert out.delta_ch4.sum() == pytest.approx(label.delta_ch4.sum(), rel=0.02)

    def test_rotation_pushing_mass_off_grid_rejected(self):
        size = 32
        mask = np.zeros((size, size), dtype=bool)
        delta = np.zeros((size, size), dtype=np.float32)
        mask[2, 2:30] = True
        delta[2, 2:30] = 0.4
        delta[2, 2] = 0.6  # origin at the far corner; most mass exits on rotation
        label = PlumeLabel(mask=mask, delta_ch4=delta)
        with pytest.raises(RotationRejectedError):
            rotate_plume(label, 0.0, 135.0)

    def test_empty_plume_rejected(self):
        label = PlumeLabel.empty((8, 8))
        with pytest.raises(ValueError):
            rotate_plume(label, 0.0, 10.0)


@pytest.fixture(scope="module")
def small_fixture(lut, ctx):
    config = FixtureConfig(seed=11, n_sites=6, scenes_per_site=10)
    sites = [generate_site_series(config, i, lut, ctx) for i in range(config.n_sites)]
    return sites


class TestTrainingSampler:
    def _sampler_for(self, sites, lut, ctx, n_real):
        """Single-site sampler whose site has exactly n_real labelled plumes."""
        site = max(sites, key=lambda s: s.n_real_plumes)
        bank = build_plume_bank(sites)
        assert bank, "fixture must provide donor plumes"
        labels = list(site.labels)
        positive_idx = [i for i, l in enumerate(labels) if l is not None and l.is_positive]
        for i in positive_idx[n_real:]:
            labels[i] = None
        if n_real > len(positive_idx):
            pytest.skip("fixture lacks enough real plumes for this stratum")
        from plumewatch.simulate import SiteData

        trimmed = SiteData(site_id=site.site_id, scenes=site.scenes, labels=labels)
        return TrainingSampler([trimmed], bank, lut, ctx)

    @pytest.mark.parametrize("n_real,expected", [(0, 1.0), (3, 0.9)])
    def test_simulated_fraction_small_strata(self, small_fixture, lut, ctx, n_real, expected):
        sampler = self._sampler_for(small_fixture, lut, ctx, n_real)
        rng = np.random.default_rng(99)
        n_draws, simulated, positives = 4000, 0, 0
        for _ in range(n_draws):
            ex = sampler.sample(rng)
            if ex.label.is_positive:
                positives += 1
                simulated += ex.is_simulated
        frac = simulated / positives
        assert frac == pytest.approx(expected, abs=0.02)

    def test_site_with_no_plumes_always_simulates(self, small_fixture, lut, ctx):
        sampler = self._sampler_for(small_fixture, lut, ctx, 0)
        rng = np.random.default_rng(7)
        for _ in range(300):
            ex = sampler.sample(rng)
            if ex.label.is_positive:
                assert ex.is_simulated

    def test_fixed_seed_is_bit_reproducible(self, small_fixture, lut, ctx):
        bank = build_plume_bank(small_fixture)
        s1 = TrainingSampler(small_fixture, bank, lut, ctx)
        s2 = TrainingSampler(small_fixture, bank, lut, ctx)
        r1, r2 = np.random.default_rng(123), np.random.default_rng(123)
        for _ in range(25):
            a = s1.sample(r1)
            b = s2.sample(r2)
            assert a.site_id == b.site_id and a.scene_index == b.scene_index
            assert a.is_simulated == b.is_simulated
            np.testing.assert_array_equal(a.stack, b.stack)
            np.testing.assert_array_equal(a.label.delta_ch4, b.label.delta_ch4)

    def test_stack_shape_and_channels(self, small_fixture, lut, ctx):
        bank = build_plume_bank(small_fixture)
        sampler = TrainingSampler(small_fixture, bank, lut, ctx)
        ex = sampler.sample(np.random.default_rng(5))
        assert ex.stack.shape == (16, 64, 64)
        assert np.all(np.isfinite(ex.stack))

    def test_wind_planes_are_constant(self, small_fixture, lut, ctx):
        bank = build_plume_bank(small_fixture)
        sampler = TrainingSampler(small_fixture, bank, lut, ctx)
        ex = sampler.sample(np.random.default_rng(6))
        assert np.ptp(ex.stack[14]) == 0.0
        assert np.ptp(ex.stack[15]) == 0.0
