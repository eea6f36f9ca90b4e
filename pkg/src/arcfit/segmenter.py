"""Online MAP segmentation of a series into a connected chain of arcs.

Each incoming datum is treated as a potential breakpoint: the lattice
stores, per datum, the best-scoring arc chain that ends there, found by
searching back over at most `max_lookback` candidate arc starts. The
continuity value handed to a successor arc is the predecessor chain's
model value at the shared breakpoint, not the noisy observation there.
"""

from __future__ import annotations

import logging
import statistics
from bisect import bisect_right
from dataclasses import dataclass
from typing import Iterable, Sequence

from .arc_model import (
    DataWindow,
    FittedArc,
    PriorSet,
    fit_arc,
)
from .optimizer import MinimizeConfig

log = logging.getLogger(__name__)

CONTINUITY_TOL = 1e-9


@dataclass(frozen=True, slots=True)
class ViterbiCell:
    """Best chain ending at one datum, assuming it is a breakpoint."""

    index: int
    cum_log_map: float
    back_index: int
    arc: FittedArc | None
    end_value: float | None

    def __post_init__(self) -> None:
        if self.back_index >= self.index:
            raise ValueError("back_index must precede index")


@dataclass(frozen=True, slots=True)
class Segmentation:
    """Chronological arc chain covering a span of data."""

    arcs: tuple[FittedArc, ...]
    total_log_map: float
    breakpoints: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.arcs:
            raise ValueError("segmentation needs at least one arc")
        expected = (self.arcs[0].start_pos,) + tuple(a.end_pos for a in self.arcs)
        if self.breakpoints != expected:
            raise ValueError("breakpoints must be the arc boundaries")
        for left, right in zip(self.arcs, self.arcs[1:]):
            if left.end_pos != right.start_pos:
                raise ValueError("arcs must tile the span without gaps")
            if abs(left.end_value - right.params.start_value) > CONTINUITY_TOL:
                raise ValueError("arc chain breaks value continuity")

    @property
    def start_pos(self) -> float:
        return self.arcs[0].start_pos

    @property
    def end_pos(self) -> float:
        return self.arcs[-1].end_pos

    def value_at(self, position: float) -> float:
        """Model value at a position inside the covered span."""
        if not self.start_pos <= position <= self.end_pos:
            raise ValueError(
                f"position {position} outside span "
                f"[{self.start_pos}, {self.end_pos}]"
            )
        # Interior breakpoints belong to the right arc; both arcs agree
        # there anyway, by the continuity construction.
        i = bisect_right(self.breakpoints, position) - 1
        i = min(max(i, 0), len(self.arcs) - 1)
        return self.arcs[i].value_at(position)

    def model_values(self, positions: Iterable[float]) -> list[float]:
        return [self.value_at(p) for p in positions]


@dataclass(frozen=True, slots=True)
class Prediction:
    """Best immediate-future hypothesis for the arc now in progress."""

    chosen_end: float
    arc: FittedArc
    total_log_map: float
    trajectory: tuple[tuple[float, float], ...]


class SegmenterState:
    """Mutable online lattice; one cell per received datum.

    The candidate fits inside one update are independent pure
    computations; they are evaluated in fixed order of increasing
    lookback so that ties resolve toward the most recent start.
    """

    def __init__(
        self,
        priors: PriorSet,
        max_lookback: int = 32,
        fit_config: MinimizeConfig | None = None,
    ):
        if max_lookback < 1:
            raise ValueError("max_lookback must be at least 1")
        self.priors = priors
        self.max_lookback = max_lookback
        self.fit_config = fit_config
        self.positions: list[float] = []
        self.values: list[float] = []
        self.cells: list[ViterbiCell] = []
        self.fit_count = 0

    def __len__(self) -> int:
        return len(self.positions)

    def update(self, position: float, value: float) -> None:
        """Receive one datum and extend the lattice."""
        position = float(position)
        value = float(value)
        if self.positions and position <= self.positions[-1]:
            raise ValueError(
                f"position {position} does not increase past {self.positions[-1]}"
            )
        self.positions.append(position)
        self.values.append(value)
        n = len(self.positions) - 1
        if n == 0:
            # The first datum is assumed to be a breakpoint; its cell
            # anchors every chain with a zero score and no arc.
            self.cells.append(ViterbiCell(0, 0.0, -1, None, None))
            return

        best_score = None
        best_cell = None
        for k in range(1, min(n, self.max_lookback) + 1):
            s = n - k
            prev = self.cells[s]
            window = DataWindow(
                tuple(self.positions[s : n + 1]),
                tuple(self.values[s : n + 1]),
                start_constraint=prev.end_value,
            )
            arc = fit_arc(window, self.priors, self.fit_config)
            self.fit_count += 1
            score = prev.cum_log_map + arc.log_map
            if best_score is None or score > best_score:
                best_score = score
                best_cell = ViterbiCell(n, score, s, arc, arc.end_value)
        self.cells.append(best_cell)
        log.debug(
            "update %d: best arc from %d, cum_log_map %.6g",
            n, best_cell.back_index, best_score,
        )

    def finalize(self) -> Segmentation:
        """Backtrack from the last datum, treated as a definite breakpoint."""
        if len(self.positions) < 2:
            raise ValueError("need at least 2 data to finalize")
        arcs: list[FittedArc] = []
        i = len(self.cells) - 1
        while i > 0:
            cell = self.cells[i]
            arcs.append(cell.arc)
            i = cell.back_index
        arcs.reverse()
        breakpoints = (arcs[0].start_pos,) + tuple(a.end_pos for a in arcs)
        return Segmentation(
            arcs=tuple(arcs),
            total_log_map=self.cells[-1].cum_log_map,
            breakpoints=breakpoints,
        )

    def predict(self, grid: Sequence[float]) -> Prediction:
        """Score the arc in progress against candidate future ends.

        Every grid position is tried as a hypothetical end of the final
        arc: the arc still starts at a real past datum and is fit to the
        real observations only, while the hypothetical end sets its
        normalization and duration. The state is left untouched.
        """
        if not self.positions:
            raise ValueError("no data received yet")
        last_pos = self.positions[-1]
        prev_g = last_pos
        for g in grid:
            if g <= prev_g:
                raise ValueError(
                    f"grid position {g} must exceed {prev_g}"
                )
            prev_g = g
        n = len(self.positions) - 1
        if not grid and n == 0:
            raise ValueError("nothing to predict from a single datum")

        best: tuple[float, float, FittedArc] | None = None
        if n >= 1:
            # The latest real datum as a definite end: the lattice
            # already holds the answer.
            last_cell = self.cells[-1]
            best = (last_cell.cum_log_map, last_pos, last_cell.arc)
        for g in grid:
            for k in range(1, min(n + 1, self.max_lookback) + 1):
                s = n + 1 - k
                prev = self.cells[s]
                window = DataWindow(
                    tuple(self.positions[s:]),
                    tuple(self.values[s:]),
                    start_constraint=prev.end_value,
                    end_pos=g,
                )
                arc = fit_arc(window, self.priors, self.fit_config)
                score = prev.cum_log_map + arc.log_map
                if best is None or score > best[0]:
                    best = (score, g, arc)

        score, chosen_end, arc = best
        trajectory = tuple(
            (p, arc.value_at(p))
            for p in self._trajectory_positions(arc, chosen_end, grid)
        )
        return Prediction(
            chosen_end=chosen_end,
            arc=arc,
            total_log_map=score,
            trajectory=trajectory,
        )

    def _trajectory_positions(
        self, arc: FittedArc, chosen_end: float, grid: Sequence[float]
    ) -> list[float]:
        real = [p for p in self.positions if p >= arc.start_pos]
        future = [g for g in grid if g <= chosen_end]
        return real + future

    def default_grid(self, count: int | None = None) -> tuple[float, ...]:
        """Evenly spaced future positions at the median observed interval."""
        if len(self.positions) < 2:
            raise ValueError("need at least 2 data to infer a grid spacing")
        spacing = statistics.median(
            b - a for a, b in zip(self.positions, self.positions[1:])
        )
        count = self.max_lookback if count is None else count
        last = self.positions[-1]
        return tuple(last + spacing * (i + 1) for i in range(count))


def fit_series(
    series,
    priors: PriorSet,
    max_lookback: int = 32,
    fit_config: MinimizeConfig | None = None,
) -> Segmentation:
    """Batch convenience: stream every point through `update`, then finalize."""
    state = SegmenterState(priors, max_lookback, fit_config)
    for position, value in zip(series.positions, series.values):
        state.update(position, value)
    return state.finalize()


_BRUTE_FORCE_LIMIT = 16


def brute_force_segment(
    series,
    priors: PriorSet,
    fit_config: MinimizeConfig | None = None,
) -> Segmentation:
    """Exhaustive oracle: try every subset of interior data as breakpoints.

    Pieces are fit left to right, each constrained to continue its
    predecessor, exactly as the online path does; cost is exponential in
    the series length, hence the hard size guard. Ties resolve toward
    fewer arcs, then the lexicographically earliest breakpoint set.
    """
    positions = tuple(float(p) for p in series.positions)
    values = tuple(float(v) for v in series.values)
    m = len(positions)
    if m < 2:
        raise ValueError("need at least 2 data points")
    if m > _BRUTE_FORCE_LIMIT:
        raise ValueError(
            f"series of {m} points exceeds the brute-force limit "
            f"of {_BRUTE_FORCE_LIMIT}"
        )

    best: tuple[float, int, tuple[int, ...], tuple[FittedArc, ...]] | None = None

    def consider(score: float, indices: tuple[int, ...], arcs: tuple[FittedArc, ...]):
        nonlocal best
        if best is None or score > best[0]:
            best = (score, len(arcs), indices, arcs)
        elif score == best[0]:
            key = (len(arcs), indices)
            if key < (best[1], best[2]):
                best = (score, len(arcs), indices, arcs)

    def extend(
        start: int,
        constraint: float | None,
        score: float,
        indices: tuple[int, ...],
        arcs: tuple[FittedArc, ...],
    ):
        for end in range(start + 1, m):
            window = DataWindow(
                positions[start : end + 1],
                values[start : end + 1],
                start_constraint=constraint,
            )
            arc = fit_arc(window, priors, fit_config)
            chain_score = score + arc.log_map
            chain_indices = indices + (end,)
            chain_arcs = arcs + (arc,)
            if end == m - 1:
                consider(chain_score, chain_indices, chain_arcs)
            else:
                extend(end, arc.end_value, chain_score, chain_indices, chain_arcs)

    extend(0, None, 0.0, (0,), ())
    score, _, indices, arcs = best
    breakpoints = tuple(positions[i] for i in indices)
    return Segmentation(arcs=arcs, total_log_map=score, breakpoints=breakpoints)
