from fractions import Fraction

import numpy as np
import pytest

from wick_utils.cumulants import DriftModel, FBMModel, GaussianModel, RosenblattModel
from wick_utils.errors import GridMismatchError, ModelError, WellDefinednessError
from wick_utils.integrals import (
    SamplePath,
    dyadic_levels,
    ito_correction,
    ito_residual,
    ito_stratonovich_correction,
    ito_stratonovich_terms,
    mean_drift_integral,
    prepare_ito_residual,
    prepare_wick_sum,
    rosenblatt_ito_correction,
    verify_scalar_identities,
    wick_riemann_sum,
    young_integral,
)
from wick_utils.polynomial import WickPolynomial
from wick_utils.simulate import fbm_sample


def random_path(n_intervals=16, T=1.0, seed=0, components=("x",)):
    rng = np.random.default_rng(seed)
    times = np.linspace(0.0, T, n_intervals + 1)
    values = np.cumsum(rng.standard_normal((n_intervals + 1, len(components))), axis=0)
    return SamplePath(times, values, components)


class TestSamplePath:
    """Test the sample path container."""

    def test_one_dimensional_values(self):
        path = SamplePath([0.0, 0.5, 1.0], [0.0, 1.0, -1.0])
        assert path.values.shape == (3, 1)
        assert path.n_intervals == 2
        assert path.mesh == 0.5
        assert path.value_at(0.5) == 1.0

    def test_validation(self):
        with pytest.raises(GridMismatchError):
            SamplePath([0.0, 1.0], [[0.0, 1.0, 2.0]])
        with pytest.raises(ValueError, match="increasing"):
            SamplePath([0.0, 0.0], [0.0, 1.0])
        with pytest.raises(ValueError, match="finite"):
            SamplePath([0.0, 1.0], [0.0, np.nan])

    def test_off_grid_time(self):
        path = random_path(4)
        with pytest.raises(GridMismatchError):
            path.value_at(0.3)
        with pytest.raises(GridMismatchError):
            path.restrict(0.1, 1.0)

    def test_restrict_and_subsample(self):
        path = random_path(8)
        sub = path.restrict(0.25, 0.75)
        assert sub.n_intervals == 4
        assert sub.times[0] == 0.25
        coarse = path.subsample([0.0, 0.5, 1.0])
        np.testing.assert_array_equal(coarse.values[:, 0], path.values[[0, 4, 8], 0])

    def test_dyadic_levels(self):
        levels = dyadic_levels(random_path(16), 3)
        assert [lv.n_intervals for lv in levels] == [4, 8, 16]
        with pytest.raises(ValueError):
            dyadic_levels(random_path(12), 4)


class TestYoungIntegral:
    """Test Riemann-Stieltjes sums."""

    def test_telescoping(self):
        path = random_path(32)
        total = young_integral(WickPolynomial.constant(1), path)
        assert total == pytest.approx(path.values[-1, 0] - path.values[0, 0])

    def test_linear_path(self):
        times = np.linspace(0.0, 1.0, 1001)
        path = SamplePath(times, times)
        x = WickPolynomial.parse("x")
        assert young_integral(x, path) == pytest.approx(0.5, abs=1e-3)
        assert young_integral(x, path, rule="trapezoid") == pytest.approx(0.5, abs=1e-12)

    def test_quadratic_path(self):
        times = np.linspace(0.0, 1.0, 1001)
        path = SamplePath(times, times**2)
        assert young_integral(WickPolynomial.parse("x"), path) == pytest.approx(0.5, abs=2e-3)

    def test_trapezoid_telescopes(self):
        """For p(x) = x the trapezoid sum is (X_t^2 - X_s^2) / 2 on any path."""
        path = random_path(64, seed=3)
        expected = (path.values[-1, 0] ** 2 - path.values[0, 0] ** 2) / 2
        assert young_integral(WickPolynomial.parse("x"), path, rule="trapezoid") == pytest.approx(
            expected
        )

    def test_partition(self):
        path = random_path(8)
        coarse = young_integral(WickPolynomial.parse("x"), path, grid=[0.0, 0.5, 1.0])
        expected = path.values[0, 0] * (path.values[4, 0] - path.values[0, 0]) + path.values[
            4, 0
        ] * (path.values[8, 0] - path.values[4, 0])
        assert coarse == pytest.approx(expected)

    def test_unknown_rule(self):
        with pytest.raises(ValueError, match="rule"):
            young_integral(WickPolynomial.parse("x"), random_path(4), rule="midpoint")


class TestWickSums:
    """Test Riemann-Stieltjes-Wick sums."""

    def test_brownian_single_interval(self):
        """Brownian covariance has no increment correlation with the past."""
        path = SamplePath([0.5, 1.0], [0.3, 1.1])
        value = wick_riemann_sum(WickPolynomial.parse("x"), path, FBMModel(0.5))
        assert value == pytest.approx(0.3 * 0.8)

    def test_fbm_single_interval(self):
        H = 0.7
        path = SamplePath([0.5, 1.0], [0.3, 1.1])
        value = wick_riemann_sum(WickPolynomial.parse("x"), path, FBMModel(H))
        correction = 0.5 - 0.5 ** (2 * H)
        assert value == pytest.approx(0.3 * 0.8 - correction)

    def test_plan_batches(self):
        """A batch of paths evaluates like the paths one at a time."""
        model = FBMModel(0.7)
        paths = [random_path(16, seed=k) for k in range(3)]
        plan = prepare_wick_sum(WickPolynomial.parse("x^3 - x"), model, paths[0].times)
        batch = plan.evaluate(np.stack([p.values for p in paths]))
        single = [plan.evaluate(p.values).wick for p in paths]
        np.testing.assert_allclose(batch.wick, single, rtol=1e-14)

    def test_not_relation_free(self):
        model = FBMModel(0.6, components=["a", "b"], mixing=[[1.0, 1.0], [1.0, 1.0]])
        with pytest.raises(WellDefinednessError):
            prepare_wick_sum({"a": WickPolynomial.parse("a")}, model, [0.0, 1.0])

    def test_static_model_rejected(self):
        with pytest.raises(ModelError):
            wick_riemann_sum(WickPolynomial.parse("x"), random_path(4), GaussianModel.standard())

    def test_drift(self):
        model = DriftModel(FBMModel(0.5), lambda c, t: t, lambda c, t: 1.0)
        path = random_path(8)
        one = WickPolynomial.constant(1)
        assert mean_drift_integral(one, path, model) == pytest.approx(1.0)
        centred = wick_riemann_sum(one, path, model, centre=True)
        assert centred == pytest.approx(path.values[-1, 0] - path.values[0, 0] - 1.0)

    def test_time_dependent_integrand(self):
        path = random_path(8)
        value = young_integral(lambda u: WickPolynomial.constant(2 * u), path)
        incr = np.diff(path.values[:, 0])
        assert value == pytest.approx(np.sum(2 * path.times[:-1] * incr))


class TestCorrections:
    """Test the Itô-Stratonovich and Itô correction formulas."""

    def test_fbm_mean(self):
        result = ito_stratonovich_correction(WickPolynomial.parse("x"), FBMModel(0.7), 0.0, 1.0)
        assert result.mean == pytest.approx(0.5, rel=1e-8)
        assert result.term_count == 1
        assert result.pathwise is None

    def test_gaussian_single_term(self):
        terms = ito_stratonovich_terms(WickPolynomial.parse("x^3"), FBMModel(0.7))
        assert len(terms) == 1
        assert terms[0].weight == 1
        assert terms[0].derivative == WickPolynomial.parse("3x^2")

    def test_rosenblatt_terms(self):
        terms = ito_stratonovich_terms(WickPolynomial.parse("x^2"), RosenblattModel(0.7))
        assert [t.weight for t in terms] == [Fraction(1), Fraction(1, 2)]
        assert terms[1].derivative == WickPolynomial.constant(2)
        assert terms[1].scaled_derivative() == WickPolynomial.constant(1)

    def test_pathwise_matches_wick_sum(self):
        """Young sum minus Wick sum is the Stieltjes form of the correction."""
        model = FBMModel(0.7)
        path = random_path(32, seed=5)
        p = WickPolynomial.parse("x^2 + x")
        young = young_integral(p, path)
        wick = wick_riemann_sum(p, path, model)
        result = ito_stratonovich_correction(p, model, path=path)
        assert young - wick == pytest.approx(result.pathwise, rel=1e-10, abs=1e-12)

    def test_trapezoid_method(self):
        """For p(x) = x the pathwise correction is deterministic."""
        model = FBMModel(0.7)
        path = random_path(64, seed=2)
        x = WickPolynomial.parse("x")
        stieltjes = ito_stratonovich_correction(x, model, path=path)
        trapezoid = ito_stratonovich_correction(x, model, path=path, method="trapezoid")
        # sum of R(u, v) - R(u, u) over a uniform grid
        assert stieltjes.pathwise == pytest.approx(0.5 * (1 - 64**-0.4), rel=1e-10)
        assert trapezoid.pathwise == pytest.approx(0.5, abs=5e-3)

    def test_exchangeable_structure(self):
        model = FBMModel(0.7, components=["a", "b"], mixing=[[1.0, 0.5], [0.5, 1.0]])
        p = {"a": WickPolynomial.parse("a*b"), "b": WickPolynomial.parse("a")}
        generic = ito_stratonovich_correction(p, model, 0.0, 1.0)
        exchangeable = ito_stratonovich_correction(
            p, model, 0.0, 1.0, structure="exchangeable_gaussian"
        )
        assert exchangeable.mean == pytest.approx(generic.mean)
        with pytest.raises(ModelError):
            ito_stratonovich_correction(p, model, 0.0, 1.0, structure="independent")

    def test_invalid_options(self):
        x = WickPolynomial.parse("x")
        with pytest.raises(ValueError):
            ito_stratonovich_correction(x, FBMModel(0.7), method="simpson")
        with pytest.raises(ValueError):
            ito_stratonovich_correction(x, FBMModel(0.7), structure="other")

    def test_ito_mean(self):
        result = ito_correction(WickPolynomial.parse("x^2"), FBMModel(0.7), 0.0, 1.0)
        assert result.mean == pytest.approx(1.0, rel=1e-8)
        linear = ito_correction(WickPolynomial.parse("3x + 1"), FBMModel(0.7), 0.0, 1.0)
        assert linear.term_count == 0
        assert linear.mean == 0.0

    def test_rosenblatt_ito_mean(self):
        result = rosenblatt_ito_correction(WickPolynomial.parse("x^2"), RosenblattModel(0.7), 0.0, 1.0)
        assert result.mean == pytest.approx(1.0, rel=1e-6)
        with pytest.raises(ModelError):
            rosenblatt_ito_correction(WickPolynomial.parse("x^2"), FBMModel(0.7))


class TestIdentities:
    """Test pathwise identities."""

    def test_quadratic_residual_vanishes(self):
        path = random_path(16, seed=7)
        result = ito_residual(WickPolynomial.parse("x^2"), path, FBMModel(0.7))
        assert result.residual == pytest.approx(0.0, abs=1e-10)

    def test_residual_batch(self):
        paths = np.stack([random_path(16, seed=k).values for k in range(4)])
        p = WickPolynomial.parse("x^2 - 2x")
        plan = prepare_ito_residual(p, FBMModel(0.7), np.linspace(0, 1, 17))
        result = plan.evaluate(paths)
        np.testing.assert_allclose(result.residual, 0.0, atol=1e-10)

    def test_scalar_identity_order_zero(self):
        """int 1 <> dX = X_t - X_s exactly."""
        path = random_path(16, seed=1)
        report = verify_scalar_identities(0, path, FBMModel(0.7))
        assert len(report.mesh_table) == 5
        assert report.residual == pytest.approx(0.0, abs=1e-12)
        assert report.to_json()["identity"] == "scalar"

    def test_scalar_identity_refinement(self):
        """The residual of int X <> dX shrinks along dyadic refinements of a fBm path."""
        times = np.linspace(0.0, 1.0, 2049)
        path = fbm_sample(0.7, times, seed=11)
        report = verify_scalar_identities(1, path, FBMModel(0.7), seed=11)
        first = abs(report.mesh_table[0]["residual"])
        last = abs(report.mesh_table[-1]["residual"])
        assert last < first
        assert report.to_json()["seed"] == 11

    def test_shifted_identity(self):
        path = random_path(16, seed=4)
        report = verify_scalar_identities(0, path, FBMModel(0.7), s=0.25, t=1.0, levels=3, shifted=True)
        assert report.residual == pytest.approx(0.0, abs=1e-12)
        assert report.to_json()["identity"] == "shifted-scalar"
