"""Concave quadratic arc model: priors, MAP objective, single-arc fitting.

An arc over a data window is evaluated in a normalized coordinate
u = (x - start) / (end - start), so the shape priors describe one arc
regardless of its length; the arc's length is judged only by the
log-normal duration prior. The curvature parameter is the log of the
arch coefficient, which makes every representable arc concave and turns
the concavity preference into a plain gaussian prior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .optimizer import (
    MinimizeConfig,
    OptimizationError,
    minimize,
)

LOG_TWO_PI = math.log(2.0 * math.pi)

# Guard for exp() in the curvature direction; the objective is
# astronomically bad long before this, so the search never gets here
# unless the objective itself is broken.
_MAX_LOG_CURVATURE = 690.0

_DEFAULT_FIT_CONFIG = MinimizeConfig()


def _check_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True, slots=True)
class GaussianPrior:
    mean: float
    sd: float

    def __post_init__(self) -> None:
        _check_finite("mean", self.mean)
        _check_finite("sd", self.sd)
        if self.sd <= 0:
            raise ValueError("sd must be positive")

    def neg_log_density(self, x: float) -> float:
        z = (x - self.mean) / self.sd
        return 0.5 * LOG_TWO_PI + math.log(self.sd) + 0.5 * z * z


@dataclass(frozen=True, slots=True)
class LogNormalPrior:
    """Log-normal prior over arc durations, parameters in log-beats."""

    log_mean: float
    log_sd: float

    def __post_init__(self) -> None:
        _check_finite("log_mean", self.log_mean)
        _check_finite("log_sd", self.log_sd)
        if self.log_sd <= 0:
            raise ValueError("log_sd must be positive")

    @property
    def median(self) -> float:
        return math.exp(self.log_mean)

    def neg_log_density(self, duration: float) -> float:
        if duration <= 0:
            raise ValueError("duration must be positive")
        log_d = math.log(duration)
        z = (log_d - self.log_mean) / self.log_sd
        return 0.5 * LOG_TWO_PI + math.log(self.log_sd) + log_d + 0.5 * z * z


@dataclass(frozen=True, slots=True)
class PriorSet:
    """All model hyperparameters.

    There is deliberately no prior on the arc's start value: the first
    arc of a chain gets an improper uniform prior (contributing zero to
    the objective) and every later arc has its start value pinned by
    continuity with its predecessor.
    """

    slope: GaussianPrior
    curvature: GaussianPrior
    duration: LogNormalPrior
    noise_sd: float

    def __post_init__(self) -> None:
        _check_finite("noise_sd", self.noise_sd)
        if self.noise_sd <= 0:
            raise ValueError("noise_sd must be positive")


@dataclass(frozen=True, slots=True)
class ArcParams:
    """Arc coefficients in the window's normalized coordinate.

    value(u) = start_value + slope * u - exp(log_curvature) * u**2,
    so the realized quadratic coefficient is strictly negative for every
    finite log_curvature: concavity is structural.
    """

    start_value: float
    slope: float
    log_curvature: float

    def __post_init__(self) -> None:
        _check_finite("start_value", self.start_value)
        _check_finite("slope", self.slope)
        _check_finite("log_curvature", self.log_curvature)


def eval_arc(params: ArcParams, u: float) -> float:
    """Arc value at normalized position u (0 = start, 1 = end)."""
    return (
        params.start_value
        + params.slope * u
        - math.exp(params.log_curvature) * u * u
    )


def regularization_coefficient(noise_sd: float, prior_sd: float) -> float:
    """Penalty weight equating penalized least squares with the MAP fit:
    observation-noise variance over prior variance."""
    if noise_sd <= 0 or prior_sd <= 0:
        raise ValueError("noise_sd and prior_sd must be positive")
    return (noise_sd * noise_sd) / (prior_sd * prior_sd)


@dataclass(frozen=True, slots=True)
class DataWindow:
    """A run of observations to be covered by one arc.

    `start_constraint`, when present, pins the arc's value at the first
    position (continuity with the preceding arc); the first datum is
    then excluded from the likelihood, since the preceding arc already
    accounted for it. `end_pos` defaults to the last position but may
    lie beyond it, describing an arc still in progress whose end is
    hypothesized; positions beyond the data carry no likelihood terms
    and only stretch the normalization and the duration.
    """

    positions: tuple[float, ...]
    values: tuple[float, ...]
    start_constraint: float | None = None
    end_pos: float | None = None

    def __post_init__(self) -> None:
        if len(self.positions) != len(self.values):
            raise ValueError("positions and values must have equal length")
        if not self.positions:
            raise ValueError("window must contain at least one observation")
        prev = None
        for i, p in enumerate(self.positions):
            if not math.isfinite(p):
                raise ValueError(f"position at index {i} is not finite")
            if prev is not None and p <= prev:
                raise ValueError(
                    f"positions must be strictly increasing (index {i})"
                )
            prev = p
        for i, v in enumerate(self.values):
            if not math.isfinite(v):
                raise ValueError(f"value at index {i} is not finite")
        if self.start_constraint is not None:
            _check_finite("start_constraint", self.start_constraint)
        if self.end_pos is None:
            if len(self.positions) < 2:
                raise ValueError("window needs at least 2 observations")
        else:
            _check_finite("end_pos", self.end_pos)
            if self.end_pos < self.positions[-1]:
                raise ValueError("end_pos must not precede the last position")
            if self.end_pos <= self.positions[0]:
                raise ValueError("end_pos must exceed the start position")
            if self.end_pos == self.positions[-1] and len(self.positions) < 2:
                raise ValueError("window needs at least 2 observations")

    @property
    def arc_end(self) -> float:
        return self.positions[-1] if self.end_pos is None else self.end_pos

    @property
    def duration(self) -> float:
        return self.arc_end - self.positions[0]

    def counted(self) -> tuple[tuple[float, ...], tuple[float, ...]]:
        """Positions/values that contribute likelihood terms."""
        if self.start_constraint is None:
            return self.positions, self.values
        return self.positions[1:], self.values[1:]


@dataclass(frozen=True, slots=True)
class FittedArc:
    """One fitted arc plus its additive contribution to a chain score."""

    start_pos: float
    end_pos: float
    params: ArcParams
    log_map: float

    def __post_init__(self) -> None:
        if not self.end_pos > self.start_pos:
            raise ValueError("end_pos must exceed start_pos")
        _check_finite("log_map", self.log_map)

    @property
    def duration(self) -> float:
        return self.end_pos - self.start_pos

    @property
    def end_value(self) -> float:
        return eval_arc(self.params, 1.0)

    def value_at(self, position: float) -> float:
        u = (position - self.start_pos) / (self.end_pos - self.start_pos)
        return eval_arc(self.params, u)


def neg_log_posterior(
    window: DataWindow, params: ArcParams, priors: PriorSet
) -> float:
    """Negative log posterior of one arc over its window.

    Sum of gaussian noise terms for every counted residual, gaussian
    prior terms for slope and log-curvature, and the log-normal duration
    term; the improper uniform prior on the start value contributes 0.
    All normalization constants are kept so chains with different arc
    counts score comparably. Lower is better; an arc's log_map is the
    negation of this value.
    """
    if window.start_constraint is not None:
        if params.start_value != window.start_constraint:
            raise ValueError(
                "constrained window requires params.start_value == start_constraint"
            )
    total = priors.duration.neg_log_density(window.duration)
    total += priors.slope.neg_log_density(params.slope)
    total += priors.curvature.neg_log_density(params.log_curvature)

    noise = priors.noise_sd
    per_datum = 0.5 * LOG_TWO_PI + math.log(noise)
    inv_two_var = 1.0 / (2.0 * noise * noise)
    start = window.positions[0]
    duration = window.duration
    arch = math.exp(params.log_curvature)
    xs, ys = window.counted()
    for x, y in zip(xs, ys):
        u = (x - start) / duration
        r = y - (params.start_value + params.slope * u - arch * u * u)
        total += per_datum + r * r * inv_two_var
    return total


def neg_log_posterior_gradient(
    window: DataWindow, params: ArcParams, priors: PriorSet
) -> tuple[float, ...]:
    """Analytic gradient of `neg_log_posterior` over the free parameters.

    Returns (d_slope, d_log_curvature) for constrained windows and
    (d_start_value, d_slope, d_log_curvature) for unconstrained ones.
    """
    noise = priors.noise_sd
    inv_var = 1.0 / (noise * noise)
    start = window.positions[0]
    duration = window.duration
    arch = math.exp(params.log_curvature)

    d_a = 0.0
    d_b = 0.0
    d_arch = 0.0
    xs, ys = window.counted()
    for x, y in zip(xs, ys):
        u = (x - start) / duration
        u2 = u * u
        r = y - (params.start_value + params.slope * u - arch * u2)
        d_a -= r * inv_var
        d_b -= r * u * inv_var
        d_arch += r * u2 * inv_var

    slope_p = priors.slope
    curv_p = priors.curvature
    d_b += (params.slope - slope_p.mean) / (slope_p.sd * slope_p.sd)
    d_c = d_arch * arch + (params.log_curvature - curv_p.mean) / (
        curv_p.sd * curv_p.sd
    )
    if window.start_constraint is not None:
        return (d_b, d_c)
    return (d_a, d_b, d_c)


class _Moments:
    """Sufficient statistics of a window's counted data.

    The residual sum of squares for any (a, b, arch) is an exact
    quadratic form in these sums, so one objective evaluation costs a
    handful of float operations regardless of window size.
    """

    __slots__ = (
        "count", "s_u", "s_u2", "s_u3", "s_u4",
        "s_y", "s_uy", "s_u2y", "s_yy",
    )

    def __init__(self, window: DataWindow):
        start = window.positions[0]
        duration = window.duration
        s_u = s_u2 = s_u3 = s_u4 = 0.0
        s_y = s_uy = s_u2y = s_yy = 0.0
        xs, ys = window.counted()
        for x, y in zip(xs, ys):
            u = (x - start) / duration
            u2 = u * u
            s_u += u
            s_u2 += u2
            s_u3 += u2 * u
            s_u4 += u2 * u2
            s_y += y
            s_uy += u * y
            s_u2y += u2 * y
            s_yy += y * y
        self.count = len(xs)
        self.s_u, self.s_u2, self.s_u3, self.s_u4 = s_u, s_u2, s_u3, s_u4
        self.s_y, self.s_uy, self.s_u2y, self.s_yy = s_y, s_uy, s_u2y, s_yy


def fit_arc(
    window: DataWindow,
    priors: PriorSet,
    config: MinimizeConfig | None = None,
    *,
    fix_curvature: float | None = None,
) -> FittedArc:
    """MAP fit of one arc to a window.

    With a start constraint, the start value is pinned and only slope
    and log-curvature are optimized; otherwise the start value is a
    third free variable under an improper uniform prior. The search is
    initialized at the prior means (and the window's mean value for a
    free start). `fix_curvature` freezes the log-curvature, leaving a
    purely quadratic problem in the remaining parameters.
    """
    cfg = config or _DEFAULT_FIT_CONFIG
    moments = _Moments(window)
    noise = priors.noise_sd
    inv_two_var = 1.0 / (2.0 * noise * noise)
    slope_p, curv_p = priors.slope, priors.curvature
    constant = (
        moments.count * (0.5 * LOG_TWO_PI + math.log(noise))
        + priors.duration.neg_log_density(window.duration)
        + LOG_TWO_PI + math.log(slope_p.sd) + math.log(curv_p.sd)
    )
    mean_b, mean_c = slope_p.mean, curv_p.mean
    inv_two_b_var = 1.0 / (2.0 * slope_p.sd * slope_p.sd)
    inv_two_c_var = 1.0 / (2.0 * curv_p.sd * curv_p.sd)
    constrained = window.start_constraint is not None
    a_pinned = window.start_constraint if constrained else None

    # The residual sum of squares is a quadratic form in the window's
    # sufficient statistics; the closures below carry everything as
    # closure locals, since they run a few hundred times per fit.
    count = moments.count
    s_u, s_u2, s_u3, s_u4 = moments.s_u, moments.s_u2, moments.s_u3, moments.s_u4
    s_y, s_uy, s_u2y, s_yy = moments.s_y, moments.s_uy, moments.s_u2y, moments.s_yy
    exp = math.exp
    inf = math.inf

    if fix_curvature is None:
        if constrained:
            a = a_pinned
            k0 = constant + (s_yy + a * (a * count - 2.0 * s_y)) * inv_two_var
            kb = s_uy - a * s_u
            ke = s_u2y - a * s_u2

            def objective(x):
                b, c = x
                if c > _MAX_LOG_CURVATURE:
                    return inf
                e = exp(c)
                zb = b - mean_b
                zc = c - mean_c
                return (
                    k0
                    + (
                        b * (b * s_u2 - 2.0 * (kb + e * s_u3))
                        + e * (e * s_u4 + 2.0 * ke)
                    ) * inv_two_var
                    + zb * zb * inv_two_b_var
                    + zc * zc * inv_two_c_var
                )

            x0 = (mean_b, mean_c)
            unpack = lambda x: (a_pinned, x[0], x[1])
        else:
            # The start value has no prior and enters the residuals
            # linearly, so its optimum given (b, c) is closed-form;
            # projecting it out leaves the same well-conditioned
            # 2-variable search as the constrained case (the joint
            # optimum is unchanged: it satisfies the same stationarity
            # in the start value).
            k0 = constant + s_yy * inv_two_var
            inv_count = 1.0 / count

            def objective(x):
                b, c = x
                if c > _MAX_LOG_CURVATURE:
                    return inf
                e = exp(c)
                a = (s_y - b * s_u + e * s_u2) * inv_count
                zb = b - mean_b
                zc = c - mean_c
                return (
                    k0
                    + (
                        a * (a * count - 2.0 * s_y + 2.0 * (b * s_u - e * s_u2))
                        + b * (b * s_u2 - 2.0 * (s_uy + e * s_u3))
                        + e * (e * s_u4 + 2.0 * s_u2y)
                    ) * inv_two_var
                    + zb * zb * inv_two_b_var
                    + zc * zc * inv_two_c_var
                )

            x0 = (mean_b, mean_c)
            unpack = lambda x: (
                (s_y - x[0] * s_u + math.exp(x[1]) * s_u2) * inv_count,
                x[0],
                x[1],
            )
    else:
        # With the curvature frozen the objective is an exact polynomial
        # in the remaining parameters, so it is evaluated in rational
        # arithmetic: float64 cannot resolve the function near its
        # minimum to the accuracy the ridge-equivalence contract needs.
        c_fixed = _check_finite("fix_curvature", fix_curvature)
        e_fixed = math.exp(c_fixed)
        zc = c_fixed - mean_c
        c_terms = zc * zc * inv_two_c_var + (e_fixed * e_fixed * s_u4) * inv_two_var
        f_itv = Fraction(inv_two_var)
        f_ibv = Fraction(inv_two_b_var)
        f_mean_b = Fraction(mean_b)
        f_su, f_su2, f_su3 = Fraction(s_u), Fraction(s_u2), Fraction(s_u3)
        f_e = Fraction(e_fixed)
        if constrained:
            a = a_pinned
            k0 = Fraction(constant + c_terms) + (
                Fraction(s_yy)
                + Fraction(a) * (Fraction(a) * count - 2 * Fraction(s_y))
                + 2 * f_e * (Fraction(s_u2y) - Fraction(a) * f_su2)
            ) * f_itv
            kb = Fraction(s_uy) - Fraction(a) * f_su + f_e * f_su3

            def objective(x):
                b = Fraction(x[0])
                zb = b - f_mean_b
                return (
                    k0
                    + b * (b * f_su2 - 2 * kb) * f_itv
                    + zb * zb * f_ibv
                )

            x0 = (mean_b,)
            unpack = lambda x: (a_pinned, x[0], c_fixed)
        else:
            # Start value projected out, as in the unfrozen free fit.
            k0 = Fraction(constant + c_terms) + (
                Fraction(s_yy) + 2 * f_e * Fraction(s_u2y)
            ) * f_itv
            f_sy, f_suy = Fraction(s_y), Fraction(s_uy)

            def objective(x):
                b = Fraction(x[0])
                a = (f_sy - b * f_su + f_e * f_su2) / count
                zb = b - f_mean_b
                return (
                    k0
                    + (
                        a * (a * count - 2 * f_sy + 2 * (b * f_su - f_e * f_su2))
                        + b * (b * f_su2 - 2 * (f_suy + f_e * f_su3))
                    ) * f_itv
                    + zb * zb * f_ibv
                )

            x0 = (mean_b,)
            unpack = lambda x: (
                (s_y - x[0] * s_u + e_fixed * s_u2) / count,
                x[0],
                c_fixed,
            )

    grad = None
    if cfg.method == "gradient_descent":
        # Free fits search over (slope, curvature) with the start value
        # projected out; the projected objective's gradient is the
        # joint gradient's matching components at the projected point
        # (the start-value component vanishes there). Fixed-curvature
        # modes drop the trailing component.
        lo = 0 if constrained else 1

        def grad(x, _lo=lo, _hi=lo + len(x0)):
            return neg_log_posterior_gradient(
                window, ArcParams(*unpack(x)), priors
            )[_lo:_hi]

    result = minimize(objective, x0, cfg, grad)
    if not result.converged:
        raise OptimizationError(
            f"arc fit did not converge in {result.iterations} iterations "
            f"(best value {float(result.value):.6g} at {result.argmin})",
            result,
        )
    a, b, c = unpack(result.argmin)
    params = ArcParams(a, b, c)
    log_map = -neg_log_posterior(window, params, priors)
    return FittedArc(
        start_pos=window.positions[0],
        end_pos=window.arc_end,
        params=params,
        log_map=log_map,
    )
