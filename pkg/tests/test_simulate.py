import json

import numpy as np
import pytest

from wick_utils.chaos2 import Chaos2Kernel
from wick_utils.errors import ConfigurationError, ModelError, UnknownExperimentError
from wick_utils.simulate import (
    MAX_GRID_POINTS,
    ExperimentReport,
    GaussianBase,
    chaos2_path_sample,
    chaos2_paths,
    fbm_paths,
    fbm_sample,
    get_experiment,
    monte_carlo,
)


class TestGaussianBase:
    """Test the counter-based normal generator."""

    def test_deterministic(self):
        a = GaussianBase(42).normals(16)
        b = GaussianBase(42).normals(16)
        np.testing.assert_array_equal(a, b)

    def test_offsets_address_the_same_stream(self):
        base = GaussianBase(7)
        full = base.normals(32)
        np.testing.assert_array_equal(base.normals(8, offset=12), full[12:20])

    def test_blocks_slice(self):
        base = GaussianBase(7)
        full = base.block(0, 5, 6)
        np.testing.assert_array_equal(base.block(2, 3, 6), full[2:])
        assert full.shape == (5, 6)

    def test_streams_differ(self):
        assert not np.array_equal(GaussianBase(1, 0).normals(8), GaussianBase(1, 1).normals(8))
        assert not np.array_equal(GaussianBase(1).normals(8), GaussianBase(2).normals(8))

    def test_stride(self):
        assert GaussianBase.stride(0) == 4
        assert GaussianBase.stride(4) == 4
        assert GaussianBase.stride(5) == 8

    def test_uniforms_open_interval(self):
        u = GaussianBase(3).uniforms(4096)
        assert np.all((u > 0) & (u < 1))

    def test_normal_moments(self):
        z = GaussianBase(5).normals(40000)
        assert abs(z.mean()) < 0.03
        assert z.var() == pytest.approx(1.0, abs=0.03)

    def test_validation(self):
        with pytest.raises(TypeError):
            GaussianBase("1")
        with pytest.raises(TypeError):
            GaussianBase(True)
        with pytest.raises(ValueError):
            GaussianBase(-1)
        with pytest.raises(ValueError, match="multiple"):
            GaussianBase(1).normals(4, offset=3)
        with pytest.raises(ValueError):
            GaussianBase(1).block(-1, 2, 3)


class TestFBM:
    """Test exact fractional Brownian motion sampling."""

    @pytest.fixture
    def times(self):
        return np.linspace(0.0, 1.0, 5)

    def test_shape_and_origin(self, times):
        values = fbm_paths(0.7, times, seed=0, count=3)
        assert values.shape == (3, 5, 1)
        np.testing.assert_array_equal(values[:, 0, 0], 0.0)

    def test_batch_matches_single_paths(self, times):
        batch = fbm_paths(0.7, times, seed=9, start=0, count=4)
        single = fbm_paths(0.7, times, seed=9, start=2, count=1)
        np.testing.assert_array_equal(batch[2], single[0])

    def test_sample_path(self, times):
        path = fbm_sample(0.7, times, seed=9, path_index=2)
        batch = fbm_paths(0.7, times, seed=9, start=2, count=1)
        np.testing.assert_array_equal(path.values, batch[0])
        np.testing.assert_array_equal(path.times, times)

    def test_validation(self, times):
        with pytest.raises(ModelError):
            fbm_paths(1.0, times, seed=0)
        with pytest.raises(ValueError, match="increasing"):
            fbm_paths(0.7, [0.0, 0.5, 0.5], seed=0)
        with pytest.raises(ValueError, match="At most"):
            fbm_paths(0.7, np.linspace(0.0, 1.0, MAX_GRID_POINTS + 1), seed=0)
        with pytest.raises(ModelError):
            fbm_paths(0.7, times, seed=0, components=["a", "b"], mixing=[[1.0, 2.0], [2.0, 1.0]])

    def test_covariance(self):
        values = fbm_paths(0.7, [0.5, 1.0], seed=1, count=20000)[:, :, 0]
        cov = np.cov(values.T)
        # R(s, t) = (s^2H + t^2H - |t - s|^2H) / 2
        assert cov[1, 1] == pytest.approx(1.0, abs=0.05)
        assert cov[0, 1] == pytest.approx(0.5, abs=0.05)
        assert cov[0, 0] == pytest.approx(0.5**1.4, abs=0.05)

    def test_brownian_increments_uncorrelated(self):
        values = fbm_paths(0.5, [0.25, 0.5, 0.75, 1.0], seed=2, count=20000)[:, :, 0]
        incr = np.diff(values, axis=1)
        corr = np.corrcoef(incr.T)
        assert abs(corr[0, 1]) < 0.05
        assert abs(corr[1, 2]) < 0.05

    def test_persistent_increments(self):
        """For H > 1/2 successive increments are positively correlated."""
        values = fbm_paths(0.8, [0.5, 1.0], seed=4, count=20000)[:, :, 0]
        incr = np.diff(np.column_stack([np.zeros(len(values)), values]), axis=1)
        expected = 0.5 * (1.0 - 2 * 0.5**1.6)
        assert np.mean(incr[:, 0] * incr[:, 1]) == pytest.approx(expected, abs=0.03)

    def test_mixed_components(self):
        values = fbm_paths(
            0.7, [1.0], seed=3, count=20000, components=["a", "b"], mixing=[[1.0, 0.5], [0.5, 1.0]]
        )
        cov = np.cov(values[:, 0, :].T)
        assert cov[0, 1] == pytest.approx(0.5, abs=0.05)
        assert cov[0, 0] == pytest.approx(1.0, abs=0.05)

    @pytest.mark.slow
    def test_terminal_variance_fine_grid(self):
        times = np.linspace(0.0, 1.0, 1025)
        values = fbm_paths(0.7, times, seed=5, count=4000)
        assert np.var(values[:, -1, 0]) == pytest.approx(1.0, abs=0.08)
        increments = np.diff(values[:, :, 0], axis=1)
        # E sum |dX|^2 = n * n^(-2H)
        assert np.mean(np.sum(increments**2, axis=1)) == pytest.approx(1024**-0.4, rel=0.02)


class TestChaos2Sampling:
    """Test finite-rank second-chaos samples."""

    @pytest.fixture
    def chi_square(self):
        return Chaos2Kernel.from_orthonormal(np.diag([1.0, 0.0, 0.0]), np.ones(3), attrs={"t": 1.0})

    def test_cumulants(self, chi_square):
        """Z^2 - 1 has variance 2 and third cumulant 8."""
        values = chaos2_paths([chi_square], seed=0, count=20000)[:, 0]
        assert abs(values.mean()) < 0.05
        assert values.var() == pytest.approx(2.0, abs=0.25)
        centred = values - values.mean()
        assert np.mean(centred**3) == pytest.approx(8.0, abs=2.5)

    def test_shared_gaussian_vector(self, chi_square):
        values = chaos2_paths([chi_square, chi_square.scaled(2.0)], seed=1, count=10)
        np.testing.assert_allclose(values[:, 1], 2 * values[:, 0])

    def test_path_sample(self, chi_square):
        path = chaos2_path_sample([chi_square], seed=0)
        np.testing.assert_array_equal(path.times, [0.0, 1.0])
        assert path.values[0, 0] == 0.0
        assert path.values[1, 0] == chaos2_paths([chi_square], seed=0)[0, 0]

    def test_path_sample_times(self, chi_square):
        with pytest.raises(ValueError):
            chaos2_path_sample([chi_square], seed=0, times=[0.5, 1.0])
        bare = Chaos2Kernel.from_orthonormal(np.eye(3), np.ones(3))
        with pytest.raises(ValueError, match="times"):
            chaos2_path_sample([bare], seed=0)


class TestExperiments:
    """Test experiment configuration."""

    def test_unknown_experiment(self):
        with pytest.raises(UnknownExperimentError, match="zero-mean-wick"):
            get_experiment("nonexistent")

    def test_defaults(self):
        exp = get_experiment("zero-mean-wick")
        assert exp.config == {"p": "x^2", "H": 0.7, "grid": 256, "T": 1.0}

    def test_overrides_are_coerced(self):
        exp = get_experiment("scalar-identity", {"grid": "64", "shifted": "true"})
        assert exp.config["grid"] == 64
        assert exp.config["shifted"] is True

    def test_unknown_option(self):
        with pytest.raises(ConfigurationError, match="Unknown option"):
            get_experiment("exp-wick", {"epsilon": 0.1})

    def test_bad_values(self):
        with pytest.raises(ConfigurationError):
            get_experiment("zero-mean-wick", {"grid": "many"})
        with pytest.raises(ConfigurationError):
            get_experiment("scalar-identity", {"shifted": "maybe"})
        with pytest.raises(ConfigurationError, match="eps"):
            get_experiment("exp-wick", {"eps": 0.6}).prepare()
        with pytest.raises(ConfigurationError, match="kernel"):
            get_experiment("chaos2-moments", {"kernel": "other"}).prepare()


class TestExperimentReport:
    """Test the Monte Carlo report."""

    def test_z_score(self):
        report = ExperimentReport("x", 1.2, 0.1, 100, 0, {}, target=1.0)
        assert report.z_score == pytest.approx(2.0)
        assert report.within(3)
        assert not report.within(1)

    def test_without_target(self):
        report = ExperimentReport("x", 1.2, 0.1, 100, 0, {})
        assert report.z_score is None
        assert report.within()
        assert report.to_json()["target"] is None

    def test_needs_paths(self):
        with pytest.raises(ValueError):
            ExperimentReport("x", 0.0, 0.0, 1, 0, {})


class TestMonteCarlo:
    """Test seeded Monte Carlo runs."""

    def test_zero_mean_wick(self):
        report = monte_carlo("zero-mean-wick", 500, seed=3, config={"grid": 32})
        assert report.target == 0.0
        assert report.within(4)
        assert report.n_paths == 500

    def test_young_mean(self):
        """The trapezoid sum of x dX is X_1^2 / 2, whose mean is the correction 1/2."""
        report = monte_carlo("young-mean", 500, seed=4, config={"grid": 32})
        assert report.target == pytest.approx(0.5, rel=1e-8)
        assert report.within(4)

    def test_quadratic_ito_residual(self):
        report = monte_carlo("ito-residual", 200, seed=5, config={"grid": 16})
        assert report.extras["max_abs_residual"] < 1e-8

    def test_scalar_identity(self):
        report = monte_carlo(
            "scalar-identity", 200, seed=6, config={"grid": 256, "levels": 4}
        )
        table = report.extras["mesh_table"]
        assert [row["n_intervals"] for row in table] == [32, 64, 128, 256]
        assert table[-1]["mean_abs_residual"] < table[0]["mean_abs_residual"]

    def test_exp_wick(self):
        report = monte_carlo("exp-wick", 4000, seed=7)
        assert report.target == pytest.approx(0.025)
        assert report.within(4)
        assert report.extras["series"]["conclusive"]

    def test_chaos2_moments(self):
        report = monte_carlo("chaos2-moments", 4000, seed=8)
        assert report.target == pytest.approx(2.0)
        assert report.within(4)

    def test_worker_invariance(self):
        config = {"grid": 16}
        one = monte_carlo("zero-mean-wick", 300, seed=1, workers=1, config=config, chunk_size=100)
        four = monte_carlo("zero-mean-wick", 300, seed=1, workers=4, config=config, chunk_size=100)
        assert json.dumps(one.to_json(), sort_keys=True) == json.dumps(
            four.to_json(), sort_keys=True
        )

    def test_arguments(self):
        with pytest.raises(ValueError, match="at least"):
            monte_carlo("zero-mean-wick", 50, seed=0)
        with pytest.raises(ValueError, match="chunk_size"):
            monte_carlo("zero-mean-wick", 200, seed=0, chunk_size=0)
        with pytest.raises(UnknownExperimentError):
            monte_carlo("nonexistent", 200, seed=0)

    @pytest.mark.slow
    def test_zero_mean_wick_full_grid(self):
        report = monte_carlo("zero-mean-wick", 5000, seed=11, workers=4)
        assert report.within(4)
