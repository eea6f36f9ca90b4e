"""Two-pass residual decomposition at a long and a short timescale.

The long pass fits the data directly; the short pass fits what the long
model leaves behind. The combined model is simply the sum of the two,
so reconstruction is exact wherever both levels are defined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .arc_model import PriorSet
from .optimizer import MinimizeConfig
from .segmenter import Segmentation, fit_series
from .tempo_io import TempoSeries


@dataclass(frozen=True, slots=True)
class TwoLevelAnalysis:
    long_scale: Segmentation
    short_scale: Segmentation
    long_priors: PriorSet
    short_priors: PriorSet
    residuals: TempoSeries

    def __post_init__(self) -> None:
        if (
            self.long_scale.start_pos != self.short_scale.start_pos
            or self.long_scale.end_pos != self.short_scale.end_pos
        ):
            raise ValueError("both levels must cover the same span")

    @property
    def start_pos(self) -> float:
        return self.long_scale.start_pos

    @property
    def end_pos(self) -> float:
        return self.long_scale.end_pos


@dataclass(frozen=True, slots=True)
class DevianceReport:
    """Breakpoint distances to the nearest barline, as bar fractions."""

    per_breakpoint: tuple[tuple[float, float], ...]
    mean_deviance: float | None

    def __post_init__(self) -> None:
        for _, deviance in self.per_breakpoint:
            if not 0.0 <= deviance <= 0.5:
                raise ValueError("deviance fractions must lie in [0, 0.5]")


def decompose(
    series: TempoSeries,
    long_priors: PriorSet,
    short_priors: PriorSet,
    max_lookback: int = 32,
    fit_config: MinimizeConfig | None = None,
) -> TwoLevelAnalysis:
    """Fit the long scale, then fit the residual at the short scale."""
    if long_priors.duration.median <= short_priors.duration.median:
        raise ValueError(
            "long-scale duration prior median must exceed the short-scale one"
        )
    long_scale = fit_series(series, long_priors, max_lookback, fit_config)
    residual_values = tuple(
        y - long_scale.value_at(x)
        for x, y in zip(series.positions, series.values)
    )
    residuals = TempoSeries(series.positions, residual_values)
    short_scale = fit_series(residuals, short_priors, max_lookback, fit_config)
    return TwoLevelAnalysis(
        long_scale=long_scale,
        short_scale=short_scale,
        long_priors=long_priors,
        short_priors=short_priors,
        residuals=residuals,
    )


def reconstruct(
    analysis: TwoLevelAnalysis, positions: Iterable[float]
) -> list[float]:
    """Combined model (long + short) at each position inside the span."""
    return [
        analysis.long_scale.value_at(p) + analysis.short_scale.value_at(p)
        for p in positions
    ]


def mean_barline_deviance(
    seg: Segmentation, bar_length: float
) -> DevianceReport:
    """How far interior breakpoints sit from the barline grid.

    Deviance of a breakpoint is its distance to the nearest multiple of
    `bar_length`, as a fraction of the bar, so it lies in [0, 0.5]. The
    endpoints of the whole span are not breakpoints in this sense and
    are excluded. With no interior breakpoints the mean is undefined and
    reported as None.
    """
    if bar_length <= 0 or not math.isfinite(bar_length):
        raise ValueError("bar_length must be positive and finite")
    interior = seg.breakpoints[1:-1]
    per = []
    for p in interior:
        offset = math.fmod(p, bar_length)
        if offset < 0:
            offset += bar_length
        per.append((p, min(offset, bar_length - offset) / bar_length))
    mean = sum(d for _, d in per) / len(per) if per else None
    return DevianceReport(per_breakpoint=tuple(per), mean_deviance=mean)
