"""Shared builders and independent oracles for the test suite.

Oracles here deliberately avoid the library's own code paths: densities
come from scipy.stats, ridge solutions from the closed form, and
reference minima from bisection-style searches.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

from arcfit import (
    ArcParams,
    DataWindow,
    GaussianPrior,
    LogNormalPrior,
    PriorSet,
    TempoSeries,
)


def make_priors(
    slope=(0.0, 10.0),
    curvature=(math.log(8.0), 1.0),
    duration=(math.log(8.0), 0.5),
    noise_sd=1.0,
) -> PriorSet:
    return PriorSet(
        slope=GaussianPrior(*slope),
        curvature=GaussianPrior(*curvature),
        duration=LogNormalPrior(*duration),
        noise_sd=noise_sd,
    )


def arc_values(params: ArcParams, us) -> list[float]:
    arch = math.exp(params.log_curvature)
    return [
        params.start_value + params.slope * u - arch * u * u for u in us
    ]


def density_sum_oracle(
    window: DataWindow, params: ArcParams, priors: PriorSet
) -> float:
    """Negative log posterior via scipy densities, term by term."""
    total = -stats.norm.logpdf(
        params.slope, priors.slope.mean, priors.slope.sd
    )
    total += -stats.norm.logpdf(
        params.log_curvature, priors.curvature.mean, priors.curvature.sd
    )
    total += -stats.lognorm.logpdf(
        window.duration,
        s=priors.duration.log_sd,
        scale=math.exp(priors.duration.log_mean),
    )
    start = window.positions[0]
    duration = window.duration
    arch = math.exp(params.log_curvature)
    xs, ys = window.counted()
    for x, y in zip(xs, ys):
        u = (x - start) / duration
        model = params.start_value + params.slope * u - arch * u * u
        total += -stats.norm.logpdf(y, model, priors.noise_sd)
    return float(total)


def ridge_slope_oracle(
    window: DataWindow, priors: PriorSet, fixed_log_curvature: float
) -> float:
    """Closed-form MAP slope with the curvature frozen and start pinned."""
    assert window.start_constraint is not None
    a = window.start_constraint
    arch = math.exp(fixed_log_curvature)
    start = window.positions[0]
    duration = window.duration
    xs, ys = window.counted()
    us = np.array([(x - start) / duration for x in xs])
    targets = np.array(ys) - a + arch * us * us
    lam = priors.noise_sd**2 / priors.slope.sd**2
    return float(
        (us @ targets + lam * priors.slope.mean) / (us @ us + lam)
    )


def golden_section_min(f, lo: float, hi: float, tol: float = 1e-10) -> float:
    """Reference 1-d minimizer for unimodal functions."""
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    while abs(b - a) > tol:
        if f(c) < f(d):
            b = d
        else:
            a = c
        c = b - phi * (b - a)
        d = a + phi * (b - a)
    return 0.5 * (a + b)


def random_window(
    rng: np.random.Generator,
    n_points: int = 8,
    constrained: bool = True,
    value_scale: float = 100.0,
) -> DataWindow:
    """A plausible noisy arc window with random span and shape."""
    spacing = rng.uniform(0.4, 1.5)
    start = rng.uniform(-10.0, 10.0)
    positions = tuple(start + spacing * i for i in range(n_points))
    a = value_scale + rng.uniform(-20.0, 20.0)
    b = rng.uniform(-15.0, 15.0)
    c = rng.uniform(0.0, 3.5)
    us = [(p - positions[0]) / (positions[-1] - positions[0]) for p in positions]
    clean = arc_values(ArcParams(a, b, c), us)
    values = tuple(
        float(v + rng.normal(0.0, 1.0)) for v in clean
    )
    constraint = a if constrained else None
    return DataWindow(positions, values, start_constraint=constraint)


def three_arc_series(
    rng: np.random.Generator,
    durations=(10.0, 12.0, 10.0),
    spacing: float = 1.0,
    noise_sd: float = 0.3,
    start_value: float = 100.0,
) -> tuple[TempoSeries, list[float]]:
    """Synthetic chain of three pronounced arcs sampled on a regular grid.

    Returns the noisy series and the interior true breakpoint positions.
    Arc depth (arch coefficient / 4) is at least 10x the noise SD.
    """
    arcs = []
    value = start_value
    pos = 0.0
    for dur in durations:
        arch = rng.uniform(16.0, 28.0)
        slope = rng.uniform(0.6, 1.4) * arch
        params = ArcParams(value, slope, math.log(arch))
        arcs.append((pos, pos + dur, params))
        value = value + slope - arch
        pos += dur
    total_span = pos
    positions = []
    p = 0.0
    while p <= total_span + 1e-9:
        positions.append(min(p, total_span))
        p += spacing
    values = []
    for p in positions:
        for start, end, params in arcs:
            if start <= p <= end:
                u = (p - start) / (end - start)
                arch = math.exp(params.log_curvature)
                values.append(
                    params.start_value + params.slope * u - arch * u * u
                    + rng.normal(0.0, noise_sd)
                )
                break
    series = TempoSeries(tuple(positions), tuple(values))
    interior = list(np.cumsum(durations)[:-1])
    return series, interior


def breakpoint_recovery(
    fitted: tuple[float, ...], truth: list[float], tol: float
) -> int:
    """Count true breakpoints with a fitted breakpoint within tol."""
    interior_fitted = fitted[1:-1]
    return sum(
        1
        for t in truth
        if any(abs(f - t) <= tol for f in interior_fitted)
    )
