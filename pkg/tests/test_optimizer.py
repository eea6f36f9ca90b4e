import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arcfit import (
    MinimizeConfig,
    ObjectiveEvaluationError,
    minimize,
    numeric_gradient,
)

from _helpers import golden_section_min


def quadratic_1d(x):
    return (x[0] - 3.0) ** 2


def rosenbrock(x):
    return (1.0 - x[0]) ** 2 + 100.0 * (x[1] - x[0] ** 2) ** 2


class TestMinimize:
    def test_quadratic_1d(self):
        result = minimize(quadratic_1d, (0.0,))
        assert result.converged
        assert abs(result.argmin[0] - 3.0) < 1e-6

    def test_rosenbrock(self):
        result = minimize(rosenbrock, (-1.2, 1.0))
        assert result.converged
        assert abs(result.argmin[0] - 1.0) < 1e-4
        assert abs(result.argmin[1] - 1.0) < 1e-4

    def test_absolute_value_against_golden_section(self):
        f = lambda x: abs(x[0])
        result = minimize(f, (5.0,))
        reference = golden_section_min(lambda v: abs(v), -5.0, 5.0)
        assert abs(result.argmin[0] - reference) < 1e-4
        assert abs(result.argmin[0]) < 1e-4

    def test_determinism_bit_identical(self):
        r1 = minimize(rosenbrock, (-1.2, 1.0))
        r2 = minimize(rosenbrock, (-1.2, 1.0))
        assert r1 == r2

    def test_descent_from_start(self):
        for x0 in [(-4.0, 2.5), (10.0, -3.0), (0.0, 0.0)]:
            result = minimize(rosenbrock, x0, MinimizeConfig(max_iters=20))
            assert result.value <= rosenbrock(x0)

    def test_non_convergence_flag(self):
        result = minimize(rosenbrock, (-1.2, 1.0), MinimizeConfig(max_iters=3))
        assert not result.converged
        assert result.iterations == 3

    def test_nan_objective_raises_with_point(self):
        def bad(x):
            return math.nan

        with pytest.raises(ObjectiveEvaluationError) as err:
            minimize(bad, (1.0,))
        assert err.value.point == (1.0,)

    def test_dimension_guard(self):
        with pytest.raises(ValueError):
            minimize(lambda x: sum(v * v for v in x), (0.0,) * 4)

    def test_gradient_descent_quadratic(self):
        cfg = MinimizeConfig(method="gradient_descent", max_iters=5000)
        result = minimize(quadratic_1d, (0.0,), cfg)
        assert result.converged
        assert abs(result.argmin[0] - 3.0) < 1e-6

    def test_gradient_descent_matches_simplex(self):
        def bowl(x):
            return 2.0 * (x[0] - 1.5) ** 2 + 0.5 * (x[1] + 2.0) ** 2 + 0.3 * x[0] * x[1]

        simplex = minimize(bowl, (0.0, 0.0))
        gd = minimize(
            bowl,
            (0.0, 0.0),
            MinimizeConfig(method="gradient_descent", param_tol=1e-12, max_iters=50000),
            grad=lambda x: (
                4.0 * (x[0] - 1.5) + 0.3 * x[1],
                1.0 * (x[1] + 2.0) + 0.3 * x[0],
            ),
        )
        assert max(
            abs(a - b) for a, b in zip(simplex.argmin, gd.argmin)
        ) < 1e-6

    @given(
        data=st.data(),
        d=st.integers(min_value=1, max_value=3),
    )
    @settings(max_examples=40)
    def test_convex_quadratics_solved(self, data, d):
        entries = st.floats(min_value=-2.0, max_value=2.0)
        b_mat = np.array(
            data.draw(
                st.lists(
                    st.lists(entries, min_size=d, max_size=d),
                    min_size=d,
                    max_size=d,
                )
            )
        )
        a_mat = b_mat @ b_mat.T + 0.5 * np.eye(d)
        center = np.array(
            data.draw(
                st.lists(
                    st.floats(min_value=-20.0, max_value=20.0),
                    min_size=d,
                    max_size=d,
                )
            )
        )
        x0 = tuple(
            data.draw(
                st.lists(
                    st.floats(min_value=-5.0, max_value=5.0),
                    min_size=d,
                    max_size=d,
                )
            )
        )

        def f(x):
            delta = np.array(x) - center
            return float(delta @ a_mat @ delta)

        result = minimize(f, x0, MinimizeConfig(max_iters=500))
        assert result.converged
        assert max(abs(v - c) for v, c in zip(result.argmin, center)) < 1e-6

    def test_config_validation(self):
        with pytest.raises(ValueError):
            MinimizeConfig(param_tol=0.0)
        with pytest.raises(ValueError):
            MinimizeConfig(max_iters=0)
        with pytest.raises(ValueError):
            MinimizeConfig(method="annealing")


class TestNumericGradient:
    def test_square(self):
        grad = numeric_gradient(lambda x: x[0] ** 2, (3.0,), 1e-5)
        assert abs(grad[0] - 6.0) < 1e-6

    def test_product(self):
        grad = numeric_gradient(lambda x: x[0] * x[1], (2.0, 5.0), 1e-5)
        assert abs(grad[0] - 5.0) < 1e-8
        assert abs(grad[1] - 2.0) < 1e-8

    def test_constant_is_exactly_zero(self):
        grad = numeric_gradient(lambda x: 7.5, (1.0, -2.0, 0.5), 1e-5)
        assert grad == (0.0, 0.0, 0.0)

    def test_bad_h(self):
        with pytest.raises(ValueError):
            numeric_gradient(lambda x: x[0], (1.0,), 0.0)

    def test_non_finite_evaluation(self):
        with pytest.raises(ObjectiveEvaluationError):
            numeric_gradient(lambda x: math.inf, (1.0,), 1e-5)
