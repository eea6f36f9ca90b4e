"""Minimization of smooth scalar objectives over 1 to 3 real variables.

Two deterministic methods: a Nelder-Mead style simplex descent (default)
and steepest descent with Armijo backtracking. Both operate on plain
Python floats; for the tiny dimensions used here this is considerably
faster than array-based optimizers and keeps results bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

Vector = tuple[float, ...]
Objective = Callable[[Sequence[float]], float]
GradientFn = Callable[[Sequence[float]], Sequence[float]]

# Simplex move coefficients: reflection, expansion, contraction, shrink.
_ALPHA = 1.0
_GAMMA = 2.0
_BETA = 0.5
_DELTA = 0.5

# Largest simplex size (relative to the point scale) at which ulp-flat
# values are taken to mean the objective is resolved; see _simplex.
_FLOOR_SPREAD_FRACTION = 1e-5


class ObjectiveEvaluationError(ValueError):
    """The objective returned NaN or infinity at a probed point."""

    def __init__(self, point: Sequence[float]):
        self.point = tuple(point)
        super().__init__(f"objective not finite at {self.point}")


class OptimizationError(RuntimeError):
    """Search did not converge; carries the best point seen so far."""

    def __init__(self, message: str, result: "MinimizeResult"):
        self.result = result
        super().__init__(message)


@dataclass(frozen=True, slots=True)
class MinimizeConfig:
    """Termination settings for `minimize`.

    `param_tol` bounds the spread of the simplex (or the last accepted
    step) in every coordinate. `func_tol` is the caller's statement of
    how finely the objective can be resolved, relative to its value:
    once values across a small simplex agree to func_tol, remaining
    differences are treated as evaluation noise, not signal. Callers
    whose objectives carry heavy cancellation should raise it.
    """

    param_tol: float = 1e-10
    func_tol: float = 1e-13
    max_iters: int = 500
    method: str = "simplex"

    def __post_init__(self) -> None:
        if not (self.param_tol > 0 and self.func_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iters <= 0:
            raise ValueError("max_iters must be positive")
        if self.method not in ("simplex", "gradient_descent"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass(frozen=True, slots=True)
class MinimizeResult:
    argmin: Vector
    value: float
    iterations: int
    converged: bool


def _value_is_finite(value) -> bool:
    # Objectives may return exact rationals (fractions.Fraction), which
    # are always finite but can overflow float conversion.
    try:
        return math.isfinite(value)
    except (OverflowError, TypeError):
        return True


def _checked(objective: Objective, x: Vector):
    value = objective(x)
    if not _value_is_finite(value):
        raise ObjectiveEvaluationError(x)
    return value


def minimize(
    objective: Objective,
    x0: Sequence[float],
    config: MinimizeConfig | None = None,
    grad: GradientFn | None = None,
) -> MinimizeResult:
    """Minimize `objective` starting from `x0` (1 to 3 dimensions).

    Deterministic: identical inputs give bit-identical results. The
    returned value never exceeds objective(x0). `grad` is only consulted
    by the gradient-descent method; when omitted there, central
    differences are used.
    """
    cfg = config or MinimizeConfig()
    start = tuple(float(v) for v in x0)
    if not 1 <= len(start) <= 3:
        raise ValueError("x0 must have 1 to 3 components")
    if not all(math.isfinite(v) for v in start):
        raise ValueError("x0 must be finite")
    if cfg.method == "simplex":
        return _simplex(objective, start, cfg)
    return _gradient_descent(objective, start, cfg, grad)


def _simplex(objective: Objective, x0: Vector, cfg: MinimizeConfig) -> MinimizeResult:
    d = len(x0)
    verts = [x0]
    for i in range(d):
        v = list(x0)
        v[i] += max(0.1, 0.1 * abs(v[i]))
        verts.append(tuple(v))
    vals = [_checked(objective, v) for v in verts]

    param_tol = cfg.param_tol
    func_tol = cfg.func_tol
    max_iters = cfg.max_iters

    # Keep vertices sorted by value throughout; exact ties keep the
    # incumbent ahead of the newcomer, so the walk is deterministic.
    order = sorted(range(d + 1), key=vals.__getitem__)
    verts = [verts[i] for i in order]
    vals = [vals[i] for i in order]

    def replace_worst(vertex: Vector, value: float) -> None:
        j = d
        while j > 0 and vals[j - 1] > value:
            j -= 1
        verts.pop()
        vals.pop()
        verts.insert(j, vertex)
        vals.insert(j, value)

    iterations = 0
    while True:
        best = verts[0]
        f_best = vals[0]
        spread = 0.0
        for v in verts[1:]:
            for i in range(d):
                delta = v[i] - best[i]
                if delta < 0.0:
                    delta = -delta
                if delta > spread:
                    spread = delta
        f_spread = vals[-1] - f_best
        if spread <= param_tol and f_spread <= func_tol * (1.0 + abs(f_best)):
            return MinimizeResult(best, float(f_best), iterations, True)
        # Resolution floor: once the simplex is already small relative
        # to the point scale and the float values across it agree to a
        # few ulps, the objective is flat at its representational
        # resolution there; no float-valued comparison can refine the
        # point further, only sustain a limit cycle. Exact (rational)
        # objectives have no floor. The size gate keeps coincidentally
        # equal values on a large simplex from stopping the search.
        if (
            iterations > 0
            and isinstance(f_spread, float)
            and f_spread <= 1.8e-15 * (1.0 + abs(f_best))
            and spread
            <= _FLOOR_SPREAD_FRACTION * (1.0 + max(abs(v) for v in best))
        ):
            return MinimizeResult(best, float(f_best), iterations, True)
        if iterations >= max_iters:
            return MinimizeResult(best, float(f_best), iterations, False)
        iterations += 1

        worst = verts[-1]
        f_worst = vals[-1]
        if d == 2:
            v0, v1 = verts[0], verts[1]
            centroid = (0.5 * (v0[0] + v1[0]), 0.5 * (v0[1] + v1[1]))
        else:
            centroid = tuple(
                sum(v[i] for v in verts[:-1]) / d for i in range(d)
            )
        reflected = tuple(
            c + _ALPHA * (c - w) for c, w in zip(centroid, worst)
        )
        f_reflected = objective(reflected)
        if not _value_is_finite(f_reflected):
            raise ObjectiveEvaluationError(reflected)

        if f_reflected < f_best:
            expanded = tuple(
                c + _GAMMA * (c - w) for c, w in zip(centroid, worst)
            )
            f_expanded = objective(expanded)
            if not _value_is_finite(f_expanded):
                raise ObjectiveEvaluationError(expanded)
            if f_expanded < f_reflected:
                replace_worst(expanded, f_expanded)
            else:
                replace_worst(reflected, f_reflected)
            continue

        if f_reflected < vals[-2]:
            replace_worst(reflected, f_reflected)
            continue

        if f_reflected < f_worst:
            contracted = tuple(
                c + _BETA * (r - c) for c, r in zip(centroid, reflected)
            )
        else:
            contracted = tuple(
                c - _BETA * (c - w) for c, w in zip(centroid, worst)
            )
        f_contracted = objective(contracted)
        if not _value_is_finite(f_contracted):
            raise ObjectiveEvaluationError(contracted)
        if f_contracted < min(f_reflected, f_worst):
            replace_worst(contracted, f_contracted)
            continue

        # Shrink everything toward the best vertex, then restore order.
        for j in range(1, d + 1):
            verts[j] = tuple(
                b + _DELTA * (v - b) for b, v in zip(best, verts[j])
            )
            vals[j] = _checked(objective, verts[j])
        order = sorted(range(d + 1), key=vals.__getitem__)
        verts = [verts[i] for i in order]
        vals = [vals[i] for i in order]


def _gradient_descent(
    objective: Objective,
    x0: Vector,
    cfg: MinimizeConfig,
    grad: GradientFn | None,
) -> MinimizeResult:
    d = len(x0)
    if grad is None:
        grad = lambda x: numeric_gradient(objective, x, 1e-6)

    x = x0
    fx = _checked(objective, x)
    prev_step = 1.0
    for iteration in range(1, cfg.max_iters + 1):
        g = tuple(float(v) for v in grad(x))
        g_sq = sum(v * v for v in g)
        if g_sq == 0.0:
            return MinimizeResult(x, float(fx), iteration, True)

        # Armijo backtracking with strict decrease, restarting each
        # iteration from at least a unit step so the whole productive
        # step range is always swept. Equal values are rejected, so
        # hitting float resolution exhausts the loop (a genuine stall)
        # instead of wandering on the flat region.
        step = max(1.0, 2.0 * prev_step)
        accepted = False
        while step > 1e-18:
            candidate = tuple(xi - step * gi for xi, gi in zip(x, g))
            fc = objective(candidate)
            if (
                _value_is_finite(fc)
                and fc < fx
                and fc <= fx - 1e-4 * step * g_sq
            ):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # No strict descent at any representable step size: the
            # objective cannot be resolved any finer around x.
            return MinimizeResult(x, float(fx), iteration, True)

        move = max(abs(c - xi) for c, xi in zip(candidate, x))
        decrease = fx - fc
        x, fx = candidate, fc
        prev_step = step
        if move <= cfg.param_tol and decrease <= cfg.func_tol * (1.0 + abs(fx)):
            return MinimizeResult(x, float(fx), iteration, True)

    return MinimizeResult(x, float(fx), cfg.max_iters, False)


def numeric_gradient(
    objective: Objective, x: Sequence[float], h: float = 1e-6
) -> Vector:
    """Central-difference gradient: (f(x + h e_i) - f(x - h e_i)) / 2h."""
    if h <= 0:
        raise ValueError("h must be positive")
    point = tuple(float(v) for v in x)
    out = []
    for i in range(len(point)):
        hi = list(point)
        lo = list(point)
        hi[i] += h
        lo[i] -= h
        f_hi = _checked(objective, tuple(hi))
        f_lo = _checked(objective, tuple(lo))
        out.append((f_hi - f_lo) / (2.0 * h))
    return tuple(out)
