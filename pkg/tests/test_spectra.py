import numpy as np
import pytest

from plumewatch.errors import ExtrapolationError, IntegrityError
from plumewatch.spectra import (
    AbsorptionModel,
    BandTransmittanceModel,
    TransmittanceLUT,
    air_mass_factor,
    band_transmittance,
    band_transmittance_dense,
    build_toy_lut,
    default_spectral_context,
    load_lut,
    read_spectrum_csv,
    save_lut,
    write_spectrum_csv,
)


class TestToyLut:
    def test_zero_column_is_unit_transmittance(self, lut):
        np.testing.assert_allclose(lut.values[0], 1.0, atol=1e-9)

    def test_monotone_non_increasing_in_column(self, lut):
        diffs = np.diff(lut.values.astype(np.float64), axis=0)
        assert diffs.max() <= 1e-12

    def test_doubling_column_squares_transmittance(self):
        # Beer-Lambert: T(2d) = T(d)^2 on matching grid nodes
        model = AbsorptionModel()
        grid = np.array([0.0, 0.5, 1.0])
        lut = build_toy_lut(model, delta_ch4_grid=grid)
        np.testing.assert_allclose(
            lut.values[2].astype(np.float64),
            lut.values[1].astype(np.float64) ** 2,
            atol=1e-6,
        )

    def test_strong_band_absorbs_more(self, lut):
        i1660 = int(np.argmin(np.abs(lut.wavelength_nm - 1660)))
        i2300 = int(np.argmin(np.abs(lut.wavelength_nm - 2300)))
        mid = lut.values[8, 2]  # some positive column
        assert mid[i2300] < mid[i1660]

    def test_non_monotone_table_rejected(self):
        lut = build_toy_lut()
        bad = lut.values.copy()
        bad[3] = bad[1]  # makes the column axis non-monotone
        with pytest.raises(IntegrityError):
            TransmittanceLUT(
                wavelength_nm=lut.wavelength_nm,
                delta_ch4_grid=lut.delta_ch4_grid,
                amf_grid=lut.amf_grid,
                values=bad,
            )

    def test_file_round_trip(self, lut, tmp_path):
        path = tmp_path / "table.lut.json"
        save_lut(lut, path)
        again = load_lut(path)
        np.testing.assert_array_equal(again.values, lut.values)
        np.testing.assert_array_equal(again.delta_ch4_grid, lut.delta_ch4_grid)
        assert again.background_ppb == lut.background_ppb


class TestSpectralContext:
    def test_srf_positive_and_normalised_region(self, ctx):
        for key, srf in ctx.srfs.items():
            assert srf.min() >= 0.0
            assert srf.sum() > 0.0

    def test_csv_round_trip(self, ctx, tmp_path):
        path = tmp_path / "srf.csv"
        write_spectrum_csv(path, ctx.wavelength_nm, ctx.srfs[("S2", "swir2")])
        lam, val = read_spectrum_csv(path)
        np.testing.assert_allclose(lam, ctx.wavelength_nm, atol=0.01)
        np.testing.assert_allclose(val, ctx.srfs[("S2", "swir2")], atol=1e-6)


class TestBandTransmittance:
    def test_zero_map_gives_unit_tau(self, lut, ctx):
        tau = band_transmittance(lut, ctx, np.zeros((8, 8)), 30.0, 5.0, "swir2")
        np.testing.assert_array_equal(tau, 1.0)

    def test_swir2_absorbs_more_than_swir1(self, lut, ctx):
        delta = np.full((4, 4), 0.5)
        t1 = band_transmittance(lut, ctx, delta, 0.001, 0.001, "swir1")
        t2 = band_transmittance(lut, ctx, delta, 0.001, 0.001, "swir2")
        assert np.all(t2 < t1)
        assert np.all(t1 < 1.0)

    @pytest.mark.parametrize("band", ["swir1", "swir2"])
    @pytest.mark.parametrize("sensor", ["S2", "Landsat"])
    def test_spline_matches_dense_integration(self, lut, ctx, band, sensor):
        model = AbsorptionModel()
        rng = np.random.default_rng(11)
        for _ in range(40):
            delta = float(rng.uniform(0.0, lut.max_column))
            sza = float(rng.uniform(5.0, 60.0))
            vza = float(rng.uniform(0.0, 10.0))
            amf = air_mass_factor(sza, vza)
            spline = band_transmittance(
                lut, ctx, np.array([[delta]]), sza, vza, band, sensor
            )[0, 0]
            dense = band_transmittance_dense(model, ctx, delta, amf, band, sensor)
            assert abs(spline - dense) < 1e-3

    def test_monotone_in_column_dense_sweep(self, lut, ctx):
        deltas = np.linspace(0.0, lut.max_column, 600).reshape(-1, 1)
        tau = band_transmittance(lut, ctx, deltas, 30.0, 5.0, "swir2")
        assert np.all(np.diff(tau[:, 0]) <= 1e-9)

    def test_above_table_maximum_clamps_with_counter(self, lut, ctx):
        model = BandTransmittanceModel(lut, ctx, "S2", "swir2")
        before = model.clamped_pixels
        tau = model.tau(np.array([lut.max_column + 3.0]), 2.5)
        assert model.clamped_pixels == before + 1
        ref = model.tau(np.array([lut.max_column]), 2.5)
        np.testing.assert_allclose(tau, ref, atol=1e-12)

    def test_geometry_outside_grid_raises(self, lut, ctx):
        with pytest.raises(ExtrapolationError):
            band_transmittance(lut, ctx, np.ones((2, 2)), 80.0, 60.0, "swir2")
