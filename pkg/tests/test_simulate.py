import math

import numpy as np
import pytest

from crpslearn.grid import ProbGrid
from crpslearn.loss import pinball
from crpslearn.simulate import (
    STATIC_EXPERTS,
    CombinerSpec,
    GaussianExpert,
    SimSpec,
    best_attainable_ql,
    default_specs,
    dgp_drifting_sample,
    dgp_static_sample,
    drifting_means,
    expected_ql_normal,
    expert_quantiles,
    expert_slab,
    norm_ppf,
    optimal_weight_drifting,
    optimal_weight_static,
    ql_floor,
    run_study,
)

GRID = ProbGrid.percentiles()


class TestNormalQuantile:
    @pytest.mark.parametrize("p, z", [(0.99, 2.3263478740408408), (0.01, -2.3263478740408408), (0.5, 0.0),
                                      (0.975, 1.959963984540054)])
    def test_reference_values(self, p, z):
        assert norm_ppf(p) == pytest.approx(z, abs=1e-12)


class TestExperts:
    def test_medians(self):
        assert expert_quantiles(GaussianExpert(-1, 1), ProbGrid([0.5]))[0] == -1.0
        assert expert_quantiles(GaussianExpert(3, 2), ProbGrid([0.5]))[0] == 3.0

    def test_scale_is_standard_deviation(self):
        q = expert_quantiles(STATIC_EXPERTS[1], ProbGrid([0.84134474606854293]))
        assert q[0] == pytest.approx(5.0, abs=1e-9)

    def test_increasing(self):
        assert np.all(np.diff(expert_slab(GRID), axis=0) > 0)

    def test_sigma_positive(self):
        with pytest.raises(ValueError):
            GaussianExpert(0.0, 0.0)


class TestOptimalWeights:
    def test_median(self):
        assert optimal_weight_static(0.5) == 0.75

    def test_reproduces_true_quantile(self):
        w = optimal_weight_static(GRID.probs)
        slab = expert_slab(GRID)
        np.testing.assert_allclose(w * slab[:, 0] + (1 - w) * slab[:, 1], norm_ppf(GRID.probs), atol=1e-12)

    def test_monotone_and_inside_unit_interval(self):
        # d/dz (3 + z) / (4 + z) = 1 / (4 + z)^2 > 0, so the weight rises with p
        w = optimal_weight_static(GRID.probs)
        assert np.all(np.diff(w) > 0)
        assert np.all((w > 0) & (w < 1))

    def test_drifting_reduces_to_static(self):
        np.testing.assert_allclose(optimal_weight_drifting(GRID.probs, 0.0), optimal_weight_static(GRID.probs))

    def test_drifting_reproduces_shifted_quantile(self):
        w = optimal_weight_drifting(GRID.probs, 0.3)
        slab = expert_slab(GRID)
        np.testing.assert_allclose(w * slab[:, 0] + (1 - w) * slab[:, 1], 0.3 + norm_ppf(GRID.probs), atol=1e-12)


class TestFloor:
    def test_median(self, rng):
        est = best_attainable_ql(0.5, 400_000, rng)
        assert est == pytest.approx(math.sqrt(2 / math.pi) / 2, abs=4 * 0.6 / math.sqrt(400_000))

    def test_symmetric_and_positive(self, rng):
        for p in (0.01, 0.2, 0.35):
            a = best_attainable_ql(p, 200_000, rng)
            b = best_attainable_ql(1 - p, 200_000, rng)
            assert a > 0 and b > 0
            assert a == pytest.approx(b, abs=0.004)
            assert a == pytest.approx(ql_floor(p), abs=0.004)

    def test_n_mc(self, rng):
        with pytest.raises(ValueError):
            best_attainable_ql(0.5, 0, rng)

    def test_expected_ql_closed_form(self, rng):
        y = rng.normal(1.0, 2.0, size=500_000)
        for q, p in [(0.0, 0.3), (2.5, 0.9), (1.0, 0.5)]:
            mc = pinball(q, y, p)
            assert expected_ql_normal(q, p, 1.0, 2.0) == pytest.approx(mc.mean(), abs=4 * mc.std() / math.sqrt(y.size))

    def test_floor_is_minimum(self):
        for p in (0.05, 0.5, 0.8):
            z = norm_ppf(p)
            qs = z + np.linspace(-1, 1, 41)
            assert np.argmin(expected_ql_normal(qs, p)) == 20
            assert expected_ql_normal(z, p) == pytest.approx(ql_floor(p), abs=1e-15)

    def test_oracle_weights_attain_floor(self, rng):
        y = dgp_static_sample(200_000, rng).y
        w = optimal_weight_static(GRID.probs)
        slab = expert_slab(GRID)
        q = w * slab[:, 0] + (1 - w) * slab[:, 1]
        ql = pinball(q[None, :], y[:, None], GRID.probs)
        se = ql.std(axis=0) / math.sqrt(y.size)
        assert np.all(np.abs(ql.mean(axis=0) - ql_floor(GRID.probs)) < 4.5 * se)


class TestDgp:
    def test_static_reproducible(self):
        a = dgp_static_sample(100, np.random.default_rng(5)).y
        b = dgp_static_sample(100, np.random.default_rng(5)).y
        np.testing.assert_array_equal(a, b)

    def test_static_moments(self):
        y = dgp_static_sample(1_000_000, np.random.default_rng(6)).y
        assert abs(y.mean()) < 0.01 and abs(y.var() - 1) < 0.01

    def test_drifting_zero_innovations(self):
        means, mu = drifting_means(np.zeros(50))
        np.testing.assert_array_equal(means, 0.0)
        np.testing.assert_array_equal(mu, 0.0)

    def test_latent_stationary_variance(self):
        from scipy.signal import lfilter

        eps = np.random.default_rng(7).standard_normal(4_000_000)
        mu = lfilter([1.0], [1.0, -0.99], eps)[10_000:]
        assert mu.var() == pytest.approx(1 / (1 - 0.99**2), rel=0.05)
        # the loop implementation follows the same recursion
        np.testing.assert_allclose(drifting_means(eps[:2000])[1], lfilter([1.0], [1.0, -0.99], eps[:2000]), atol=1e-10)

    def test_drifting_reproducible_and_prefix_stable(self):
        a, ma = dgp_drifting_sample(64, np.random.default_rng(8), return_means=True)
        b, mb = dgp_drifting_sample(64, np.random.default_rng(8), return_means=True)
        np.testing.assert_array_equal(a.y, b.y)
        np.testing.assert_array_equal(ma, mb)
        np.testing.assert_allclose(ma, 0.15 * np.arcsinh(drifting_means(np.random.default_rng(8).standard_normal(64))[1]))


class TestSpecs:
    def test_labels(self):
        assert CombinerSpec("P-Smooth").label == "P-Smooth"
        assert CombinerSpec("P-Smooth", forget="auto").label == "P-Smooth Forget"
        assert CombinerSpec("Pointwise", algorithm="EWAG").label == "EWAG Pointwise"

    @pytest.mark.parametrize("kw", [dict(kind="Smooth"), dict(kind="Pointwise", algorithm="ML-Poly"),
                                    dict(kind="P-Smooth", algorithm="EWAG"), dict(kind="Pointwise", forget=())])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            CombinerSpec(**kw)

    def test_build_sizes(self):
        assert len(CombinerSpec("P-Smooth", forget="auto").build(GRID, 2, 512)) == 41 * 10
        assert len(CombinerSpec("B-Smooth").build(GRID, 2)) == 34
        assert len(CombinerSpec("Pointwise", algorithm="EWAG").build(GRID, 2)) == 20
        with pytest.raises(ValueError, match="horizon"):
            CombinerSpec("Pointwise", forget="auto").build(GRID, 2)

    def test_default_specs(self):
        assert [s.label for s in default_specs("forget")] == ["Pointwise", "P-Smooth", "Pointwise Forget",
                                                              "P-Smooth Forget"]
        assert len(default_specs("algorithms")) == 8
        with pytest.raises(ValueError):
            default_specs("nope")

    @pytest.mark.parametrize("kw", [dict(dgp="ar"), dict(T=(0,)), dict(reps=0), dict(specs=())])
    def test_simspec_invalid(self, kw):
        base = dict(dgp="static", T=(8,), reps=1, seed=0)
        base.update(kw)
        with pytest.raises(ValueError):
            SimSpec(**base)

    def test_duplicate_labels(self):
        with pytest.raises(ValueError, match="unique"):
            SimSpec("static", 8, 1, 0, specs=(CombinerSpec("Pointwise"), CombinerSpec("Pointwise")))


SMALL = (CombinerSpec("Pointwise"), CombinerSpec("B-Constant"), CombinerSpec("Pointwise", forget="auto"))


class TestRunStudy:
    def test_reproducible_and_worker_independent(self):
        spec = SimSpec("drifting", (16, 32), 3, 11, specs=SMALL, grid=ProbGrid.equidistant(9))
        a = run_study(spec, workers=1)
        b = run_study(spec, workers=1)
        c = run_study(spec, workers=2)
        for key, v in a.per_rep.items():
            np.testing.assert_array_equal(v, b.per_rep[key])
            np.testing.assert_array_equal(v, c.per_rep[key])

    def test_metrics_consistent(self):
        spec = SimSpec("static", (8, 24), 2, 3, specs=SMALL[:2], grid=ProbGrid.equidistant(9), record_weights=True)
        res = run_study(spec)
        for label in ("Pointwise", "B-Constant"):
            for T in (8, 24):
                assert res.mean(label, T, "crps") == pytest.approx(2 * res.mean(label, T))
                assert res.mean(label, T, "distance") > 0
                np.testing.assert_allclose(res.profiles[(label, T)].mean(), res.mean(label, T, "distance"))
        assert res.weights["Pointwise"].shape == (24, 9, 2)
        np.testing.assert_allclose(res.weights["Pointwise"].sum(axis=2), 1.0)
        assert len(res.rows()) == 2 * 2 * 3
        assert res.se("Pointwise", 8) > 0

    def test_horizons_are_prefixes(self):
        # static streams are iid draws, so a T=16 study sees the first 16 draws of the T=64 study
        grid = ProbGrid.equidistant(9)
        short = run_study(SimSpec("static", (16,), 2, 4, specs=SMALL[:1], grid=grid))
        long_ = run_study(SimSpec("static", (16, 64), 2, 4, specs=SMALL[:1], grid=grid))
        np.testing.assert_array_equal(short.per_rep[("Pointwise", 16, "mean_ql")],
                                      long_.per_rep[("Pointwise", 16, "mean_ql")])

    def test_distance_decreases_pointwise(self):
        spec = SimSpec("static", (32, 512), 8, 1, specs=(CombinerSpec("Pointwise"),))
        res = run_study(spec)
        assert res.mean("Pointwise", 512, "distance") < res.mean("Pointwise", 32, "distance")
