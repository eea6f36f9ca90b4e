import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arcfit import (
    ArcParams,
    DataWindow,
    GaussianPrior,
    LogNormalPrior,
    MinimizeConfig,
    OptimizationError,
    PriorSet,
    eval_arc,
    fit_arc,
    neg_log_posterior,
    neg_log_posterior_gradient,
    numeric_gradient,
    regularization_coefficient,
)

from _helpers import (
    arc_values,
    density_sum_oracle,
    make_priors,
    random_window,
    ridge_slope_oracle,
)

LOG_TWO_PI = math.log(2.0 * math.pi)


class TestEvalArc:
    def test_at_start(self):
        assert eval_arc(ArcParams(100.0, 0.0, 0.0), 0.0) == 100.0

    def test_at_end_unit_arch(self):
        assert eval_arc(ArcParams(100.0, 0.0, 0.0), 1.0) == 99.0

    def test_midpoint(self):
        assert eval_arc(ArcParams(60.0, 10.0, math.log(10.0)), 0.5) == 62.5

    @given(
        a=st.floats(-1e3, 1e3),
        b=st.floats(-1e2, 1e2),
        c=st.floats(-5.0, 5.0),
        u=st.floats(0.0, 1.0),
    )
    def test_concavity_midpoint_above_chord(self, a, b, c, u):
        params = ArcParams(a, b, c)
        lo, hi = u, u + 0.5
        mid = 0.5 * (lo + hi)
        chord = 0.5 * (eval_arc(params, lo) + eval_arc(params, hi))
        assert eval_arc(params, mid) >= chord


class TestRegularizationCoefficient:
    def test_equal_variances(self):
        assert regularization_coefficient(3.0, 3.0) == 1.0

    def test_paper_scale_noise(self):
        assert regularization_coefficient(3.0, 1.0) == 9.0

    def test_sixteen_over_four(self):
        assert regularization_coefficient(4.0, 2.0) == 4.0

    @pytest.mark.parametrize("noise,prior", [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0)])
    def test_domain_errors(self, noise, prior):
        with pytest.raises(ValueError):
            regularization_coefficient(noise, prior)


class TestPriorTypes:
    def test_gaussian_requires_positive_sd(self):
        with pytest.raises(ValueError):
            GaussianPrior(0.0, 0.0)
        with pytest.raises(ValueError):
            GaussianPrior(math.nan, 1.0)

    def test_lognormal_requires_positive_log_sd(self):
        with pytest.raises(ValueError):
            LogNormalPrior(0.0, -1.0)

    def test_priorset_requires_positive_noise(self):
        with pytest.raises(ValueError):
            make_priors(noise_sd=0.0)

    def test_lognormal_median(self):
        assert LogNormalPrior(math.log(12.0), 0.5).median == pytest.approx(12.0)


class TestDataWindow:
    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            DataWindow((0.0, 1.0), (1.0,))

    def test_rejects_non_monotonic(self):
        with pytest.raises(ValueError):
            DataWindow((0.0, 0.0), (1.0, 2.0))

    def test_rejects_nan_value(self):
        with pytest.raises(ValueError):
            DataWindow((0.0, 1.0), (1.0, math.nan))

    def test_rejects_single_point_without_end(self):
        with pytest.raises(ValueError):
            DataWindow((0.0,), (1.0,))

    def test_single_point_with_extended_end(self):
        w = DataWindow((0.0,), (1.0,), start_constraint=1.0, end_pos=2.0)
        assert w.duration == 2.0

    def test_rejects_end_before_last_position(self):
        with pytest.raises(ValueError):
            DataWindow((0.0, 1.0, 2.0), (1.0, 2.0, 3.0), end_pos=1.5)

    def test_counted_skips_constrained_start(self):
        w = DataWindow((0.0, 1.0, 2.0), (5.0, 6.0, 7.0), start_constraint=5.0)
        xs, ys = w.counted()
        assert xs == (1.0, 2.0)
        assert ys == (6.0, 7.0)
        free = DataWindow((0.0, 1.0, 2.0), (5.0, 6.0, 7.0))
        assert free.counted() == (free.positions, free.values)


class TestNegLogPosterior:
    def test_degenerate_prior_modes_only(self):
        # No counted data; slope and curvature at their prior modes;
        # duration at the prior median. Expected value computed by the
        # closed-form densities: two gaussian modes and a log-normal at
        # its log-median give 1.5 * ln(2*pi).
        priors = make_priors(
            slope=(0.0, 1.0), curvature=(0.0, 1.0), duration=(0.0, 1.0),
            noise_sd=1.0,
        )
        window = DataWindow((0.0,), (100.0,), start_constraint=100.0, end_pos=1.0)
        value = neg_log_posterior(window, ArcParams(100.0, 0.0, 0.0), priors)
        assert value == pytest.approx(2.756815599614018, abs=1e-12)
        assert value == pytest.approx(1.5 * LOG_TWO_PI, abs=1e-12)

    def test_exact_datum_adds_only_noise_constant(self):
        priors = make_priors(
            slope=(0.0, 1.0), curvature=(0.0, 1.0), duration=(0.0, 1.0),
            noise_sd=2.0,
        )
        base_window = DataWindow(
            (0.0,), (100.0,), start_constraint=100.0, end_pos=1.0
        )
        params = ArcParams(100.0, 0.0, 0.0)
        base = neg_log_posterior(base_window, params, priors)
        on_arc = eval_arc(params, 0.6)
        window = DataWindow(
            (0.0, 0.6), (100.0, on_arc), start_constraint=100.0, end_pos=1.0
        )
        value = neg_log_posterior(window, params, priors)
        assert value - base == pytest.approx(
            math.log(2.0 * math.sqrt(2.0 * math.pi)), abs=1e-12
        )

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=60)
    def test_matches_independent_density_sum(self, seed):
        rng = np.random.default_rng(seed)
        window = random_window(rng, n_points=int(rng.integers(2, 9)),
                               constrained=bool(rng.integers(0, 2)))
        a = (
            window.start_constraint
            if window.start_constraint is not None
            else float(rng.uniform(50.0, 150.0))
        )
        params = ArcParams(a, float(rng.uniform(-20, 20)), float(rng.uniform(-2, 4)))
        priors = make_priors(
            slope=(float(rng.uniform(-3, 3)), float(rng.uniform(0.5, 12))),
            curvature=(float(rng.uniform(-1, 3)), float(rng.uniform(0.3, 2))),
            duration=(float(rng.uniform(0.5, 3)), float(rng.uniform(0.2, 1))),
            noise_sd=float(rng.uniform(0.2, 4)),
        )
        ours = neg_log_posterior(window, params, priors)
        oracle = density_sum_oracle(window, params, priors)
        assert ours == pytest.approx(oracle, rel=1e-12, abs=1e-10)

    def test_constraint_mismatch_rejected(self):
        priors = make_priors()
        window = DataWindow((0.0, 1.0), (5.0, 6.0), start_constraint=5.0)
        with pytest.raises(ValueError):
            neg_log_posterior(window, ArcParams(4.0, 0.0, 0.0), priors)


class TestGradient:
    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=60)
    def test_analytic_matches_central_differences(self, seed):
        rng = np.random.default_rng(seed)
        constrained = bool(rng.integers(0, 2))
        window = random_window(rng, n_points=6, constrained=constrained)
        a = (
            window.start_constraint
            if constrained
            else float(rng.uniform(50.0, 150.0))
        )
        b = float(rng.uniform(-20, 20))
        c = float(rng.uniform(-2, 4))
        priors = make_priors(noise_sd=float(rng.uniform(0.3, 3)))
        analytic = neg_log_posterior_gradient(
            window, ArcParams(a, b, c), priors
        )

        if constrained:
            f = lambda x: neg_log_posterior(
                window, ArcParams(a, x[0], x[1]), priors
            )
            point = (b, c)
        else:
            f = lambda x: neg_log_posterior(
                window, ArcParams(x[0], x[1], x[2]), priors
            )
            point = (a, b, c)
        numeric = numeric_gradient(f, point, 1e-5)
        for an, nu in zip(analytic, numeric):
            assert an == pytest.approx(nu, rel=1e-5, abs=1e-7)


class TestFitArc:
    def test_noiseless_recovery_with_flat_priors(self):
        truth = ArcParams(100.0, 5.0, 0.0)
        us = (0.0, 0.25, 0.5, 0.75, 1.0)
        positions = tuple(4.0 * u for u in us)
        values = tuple(arc_values(truth, us))
        window = DataWindow(positions, values, start_constraint=100.0)
        priors = make_priors(
            slope=(0.0, 1e3), curvature=(0.0, 1e3),
            duration=(math.log(4.0), 0.5), noise_sd=1.0,
        )
        arc = fit_arc(window, priors)
        assert abs(arc.params.slope - 5.0) < 1e-3
        assert abs(arc.params.log_curvature - 0.0) < 1e-2

    def test_uninformative_window_returns_prior_modes(self):
        priors = make_priors(slope=(2.5, 4.0), curvature=(1.25, 2.0))
        window = DataWindow((0.0,), (80.0,), start_constraint=80.0, end_pos=8.0)
        arc = fit_arc(window, priors)
        assert abs(arc.params.slope - 2.5) < 1e-8
        assert abs(arc.params.log_curvature - 1.25) < 1e-8

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=30)
    def test_frozen_curvature_matches_ridge_oracle(self, seed):
        rng = np.random.default_rng(seed)
        window = random_window(rng, n_points=int(rng.integers(3, 10)))
        priors = make_priors(
            slope=(float(rng.uniform(-2, 2)), float(rng.uniform(0.5, 10))),
            noise_sd=float(rng.uniform(0.5, 4)),
        )
        c_fixed = float(rng.uniform(-1, 3))
        arc = fit_arc(window, priors, fix_curvature=c_fixed)
        oracle = ridge_slope_oracle(window, priors, c_fixed)
        assert arc.params.slope == pytest.approx(oracle, rel=1e-8, abs=1e-8)
        assert arc.params.log_curvature == c_fixed

    def test_vertical_translation_equivariance(self):
        rng = np.random.default_rng(7)
        window = random_window(rng, n_points=7)
        priors = make_priors()
        arc = fit_arc(window, priors)
        delta = 37.5
        shifted = DataWindow(
            window.positions,
            tuple(v + delta for v in window.values),
            start_constraint=window.start_constraint + delta,
        )
        arc_shifted = fit_arc(shifted, priors)
        assert arc_shifted.params.start_value == pytest.approx(
            arc.params.start_value + delta, abs=1e-9
        )
        assert arc_shifted.params.slope == pytest.approx(
            arc.params.slope, abs=1e-6
        )
        assert arc_shifted.params.log_curvature == pytest.approx(
            arc.params.log_curvature, abs=1e-6
        )
        assert arc_shifted.log_map == pytest.approx(arc.log_map, abs=1e-6)

    def test_constraint_satisfied_exactly(self):
        rng = np.random.default_rng(11)
        window = random_window(rng, n_points=5)
        arc = fit_arc(window, make_priors())
        assert eval_arc(arc.params, 0.0) == window.start_constraint

    @given(seed=st.integers(0, 5_000))
    @settings(max_examples=25)
    def test_concavity_structural(self, seed):
        rng = np.random.default_rng(seed)
        window = random_window(rng, n_points=5, constrained=bool(rng.integers(0, 2)))
        arc = fit_arc(window, make_priors())
        assert -math.exp(arc.params.log_curvature) < 0.0

    def test_simplex_and_gradient_descent_agree(self):
        # Both routes must land on the same optimum to 1e-6. The
        # comparison is on the objective value: in flat valleys the
        # minimizing point is only determined up to the region where
        # float64 cannot resolve the objective at all, which can exceed
        # 1e-6 in parameter space for either method.
        rng = np.random.default_rng(23)
        priors = make_priors()
        for _ in range(5):
            window = random_window(rng, n_points=8)
            simplex_arc = fit_arc(window, priors)
            gd_arc = fit_arc(
                window,
                priors,
                MinimizeConfig(
                    method="gradient_descent",
                    param_tol=1e-13,
                    max_iters=200_000,
                ),
            )
            assert gd_arc.log_map == pytest.approx(
                simplex_arc.log_map, abs=1e-6
            )
            assert gd_arc.params.slope == pytest.approx(
                simplex_arc.params.slope, abs=1e-3
            )
            assert gd_arc.params.log_curvature == pytest.approx(
                simplex_arc.params.log_curvature, abs=1e-3
            )

    def test_free_fit_log_map_consistency(self):
        rng = np.random.default_rng(3)
        window = random_window(rng, n_points=6, constrained=False)
        priors = make_priors()
        arc = fit_arc(window, priors)
        assert arc.log_map == -neg_log_posterior(window, arc.params, priors)

    def test_non_convergence_raises_with_best_point(self):
        rng = np.random.default_rng(5)
        window = random_window(rng, n_points=6)
        with pytest.raises(OptimizationError) as err:
            fit_arc(window, make_priors(), MinimizeConfig(max_iters=2))
        assert err.value.result.iterations == 2
        assert math.isfinite(err.value.result.value)
