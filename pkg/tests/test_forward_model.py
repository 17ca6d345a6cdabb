import numpy as np
import pytest

from dyntomo.forward_model import (ArealImage, BeamConfig, RadiographSeries,
                                   ScatterConfig, _gaussian_kernel,
                                   abel_project, corrupt, direct_radiographs,
                                   gaussian_convolve, inverse_abel,
                                   reconstruct_density, transmission)
from dyntomo.phantom import GridSpec, SeriesSpec, ShellSpec, generate_series

from helpers import line_integral_oracle

GRID = GridSpec(64, 22.0 / 64)
DX = GRID.dx


def make_disc(rho0=3.0, radius_cells=16, grid=GRID):
    x = grid.x_centers()
    xx, zz = np.meshgrid(x, x)
    return np.where(np.hypot(xx, zz) < radius_cells * grid.dx, rho0, 0.0)


class TestAbelProject:
    def test_zero_slice(self):
        out = abel_project(np.zeros((64, 64)), DX)
        assert np.array_equal(out.values, np.zeros((64, 64)))

    def test_uniform_disc_matches_closed_form(self):
        rho0, k = 3.0, 16
        R = k * DX
        disc = make_disc(rho0, k)
        proj = abel_project(disc, DX).values
        x = GRID.x_centers()
        z_row = DX / 2.0  # row 32 sits half a cell above the midplane
        r_row = np.sqrt(R ** 2 - z_row ** 2)
        expected = 2.0 * rho0 * np.sqrt(np.maximum(r_row ** 2 - x ** 2, 0.0))
        keep = (np.abs(np.abs(x) - r_row) > 2 * DX) & (expected > 0)
        rel = np.abs(proj[32, keep] - expected[keep]) / expected[keep]
        assert rel.max() <= 0.02

    def test_uniform_disc_matches_line_integral_oracle(self):
        disc = make_disc(2.0, 14)
        proj = abel_project(disc, DX).values
        oracle = line_integral_oracle(disc, DX)
        x = GRID.x_centers()
        r = np.hypot(*np.meshgrid(x, x))
        keep = (oracle > 1e-9) & (np.abs(r - 14 * DX) > 2 * DX)
        rel = np.abs(proj[keep] - oracle[keep]) / oracle[keep]
        assert rel.max() <= 0.02

    def test_linearity(self):
        rng = np.random.default_rng(0)
        img = rng.uniform(size=(64, 64))
        a = abel_project(3.7 * img, DX).values
        b = 3.7 * abel_project(img, DX).values
        assert np.allclose(a, b, rtol=1e-13, atol=1e-13)

    def test_mirror_symmetric_input_gives_symmetric_output(self):
        img = make_disc()
        proj = abel_project(img, DX).values
        assert np.allclose(proj, proj[:, ::-1], rtol=0, atol=0)

    def test_odd_width_supported(self):
        rng = np.random.default_rng(1)
        img = rng.uniform(size=(9, 9))
        img = 0.5 * (img + img[:, ::-1])   # symmetric
        proj = abel_project(img, 0.5)
        rec = inverse_abel(proj)
        assert np.allclose(rec, img, atol=1e-10)


class TestInverseAbel:
    def test_zero(self):
        out = inverse_abel(ArealImage(np.zeros((32, 32)), DX))
        assert np.array_equal(out, np.zeros((32, 32)))

    def test_round_trip_smooth_blob(self):
        x = GRID.x_centers()
        xx, zz = np.meshgrid(x, x)
        blob = 2.0 * np.exp(-((xx - 0.8) ** 2 + (zz + 0.5) ** 2) / (2 * 1.5 ** 2))
        rec = inverse_abel(abel_project(blob, DX))
        err = np.linalg.norm((rec - blob)[:, 2:-2]) / np.linalg.norm(blob[:, 2:-2])
        assert err <= 1e-2

    def test_disc_interior_recovered(self):
        disc = make_disc(2.5, 16)
        rec = inverse_abel(abel_project(disc, DX))
        x = GRID.x_centers()
        r = np.hypot(*np.meshgrid(x, x))
        interior = r < 14 * DX
        assert np.abs(rec[interior] - 2.5).max() / 2.5 <= 0.02


class TestTransmission:
    def test_empty_beam(self):
        areal = ArealImage(np.zeros((8, 8)), DX)
        assert np.array_equal(transmission(areal, BeamConfig()), np.ones((8, 8)))

    def test_half_attenuation(self):
        beam = BeamConfig(I0=1.0, xi=1e-2)
        vals = np.zeros((4, 4))
        vals[1, 2] = np.log(2.0) / beam.xi
        d = transmission(ArealImage(vals, DX), beam)
        assert d[1, 2] == pytest.approx(0.5)

    def test_monotone_decreasing(self):
        rng = np.random.default_rng(3)
        a1 = rng.uniform(0, 100, size=(8, 8))
        a2 = a1 + rng.uniform(0, 50, size=(8, 8))
        beam = BeamConfig()
        d1 = transmission(ArealImage(a1, DX), beam)
        d2 = transmission(ArealImage(a2, DX), beam)
        assert np.all(d2 <= d1)
        assert np.all(d1 > 0)

    def test_log_inversion_recovers_areal(self):
        rng = np.random.default_rng(4)
        areal = rng.uniform(0, 400, size=(8, 8))
        beam = BeamConfig(I0=1.0, xi=1e-2)
        d = transmission(ArealImage(areal, DX), beam)
        back = -np.log(d / beam.I0) / beam.xi
        assert np.allclose(back, areal, rtol=1e-12, atol=1e-9)


class TestGaussianConvolve:
    def test_constant_preserved(self):
        out = gaussian_convolve(np.full((20, 20), 3.3), 2.0)
        assert np.allclose(out, 3.3, rtol=0, atol=1e-12)

    def test_impulse_center_weight(self):
        img = np.zeros((33, 33))
        img[16, 16] = 1.0
        out = gaussian_convolve(img, 2.0)
        k = _gaussian_kernel(2.0)
        assert out[16, 16] == pytest.approx(k[8] ** 2, rel=1e-12)

    def test_kernel_radius_and_normalization(self):
        k = _gaussian_kernel(2.0)
        assert len(k) == 2 * 8 + 1
        assert k.sum() == pytest.approx(1.0, abs=1e-12)

    def test_sum_preserved_for_interior_support(self):
        rng = np.random.default_rng(0)
        img = np.zeros((40, 40))
        img[12:28, 12:28] = rng.uniform(size=(16, 16))
        out = gaussian_convolve(img, 2.0)
        assert out.sum() == pytest.approx(img.sum(), rel=1e-9)

    def test_mirror_symmetry_preserved(self):
        img = make_disc()
        out = gaussian_convolve(img, 2.0)
        assert np.allclose(out, out[:, ::-1], atol=1e-14)


class TestCorrupt:
    def setup_method(self):
        series = generate_series(ShellSpec(), GRID, SeriesSpec(), seed=4)
        self.direct = direct_radiographs(series, BeamConfig())
        self.series = series

    def test_no_corruption_is_identity(self):
        rg = corrupt(self.direct, ScatterConfig(beta0=0.0, noise_var=0.0),
                     BeamConfig(), seed=1)
        assert np.array_equal(rg.measured, self.direct)

    def test_constant_direct_doubles(self):
        const = np.full((2, 16, 16), 0.7)
        rg = corrupt(const, ScatterConfig(beta0=1.0, beta_variation=0.0, noise_var=0.0),
                     BeamConfig(), seed=1)
        assert np.allclose(rg.measured, 1.4, atol=1e-12)

    def test_deterministic(self):
        cfg = ScatterConfig(beta0=1.0, noise_var=1e-4)
        a = corrupt(self.direct, cfg, BeamConfig(), seed=9)
        b = corrupt(self.direct, cfg, BeamConfig(), seed=9)
        assert np.array_equal(a.measured, b.measured)
        assert np.array_equal(a.betas, b.betas)

    def test_betas_within_range(self):
        cfg = ScatterConfig(beta0=1.0, beta_variation=0.05)
        rg = corrupt(self.direct, cfg, BeamConfig(), seed=2)
        assert np.all(rg.betas >= 0.95) and np.all(rg.betas <= 1.05)


class TestReconstructDensity:
    def setup_method(self):
        self.series = generate_series(ShellSpec(), GRID, SeriesSpec(), seed=12)
        self.beam = BeamConfig()
        self.direct = direct_radiographs(self.series, self.beam)

    def _clean_rg(self):
        return RadiographSeries(direct=self.direct, scatter=np.zeros_like(self.direct),
                                measured=self.direct.copy(),
                                betas=np.zeros(self.direct.shape[0]), beam=self.beam)

    def test_clean_pipeline_recovers_source(self):
        rec = reconstruct_density(self._clean_rg(), GRID)
        err = np.linalg.norm(rec.frames - self.series.frames) \
            / np.linalg.norm(self.series.frames)
        assert err <= 2e-2

    def test_nonpositive_measurements_clamped(self):
        rg = self._clean_rg()
        rg.measured[0, :4, :4] = -0.5
        rg.measured[1, :4, :4] = 0.0
        rec = reconstruct_density(rg, GRID)
        assert np.all(np.isfinite(rec.frames))

    def test_scatter_strictly_degrades(self):
        clean_rec = reconstruct_density(self._clean_rg(), GRID)
        rg = corrupt(self.direct, ScatterConfig(beta0=1.0), self.beam, seed=3)
        noisy_rec = reconstruct_density(rg, GRID)
        ref = self.series.frames
        err_clean = np.linalg.norm(clean_rec.frames - ref)
        err_noisy = np.linalg.norm(noisy_rec.frames - ref)
        assert err_noisy > err_clean

    def test_output_range(self):
        rg = corrupt(self.direct, ScatterConfig(beta0=1.0, noise_var=1e-4),
                     self.beam, seed=5)
        rec = reconstruct_density(rg, GRID)
        assert rec.frames.min() >= 0.0 and rec.frames.max() <= 1.0
