"""Data ingestion, serialization, and the generative sampler.

Instantaneous tempo is derived from consecutive onset pairs; series and
segmentations round-trip through CSV/JSON with floats printed at 17
significant digits, which reproduces IEEE doubles exactly.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .arc_model import (
    LOG_TWO_PI,
    ArcParams,
    FittedArc,
    PriorSet,
)
from .segmenter import Segmentation

FORMAT_VERSION = 1


class ParseError(ValueError):
    """Malformed input row; remembers the 1-based line number."""

    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"line {line}: {message}")


@dataclass(frozen=True, slots=True)
class TempoSeries:
    """Ordered (position, value) observations; positions in beats.

    Values are BPM for ingested tempo data but may be any real for
    synthetic or residual series.
    """

    positions: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.positions) != len(self.values):
            raise ValueError("positions and values must have equal length")
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

    def __len__(self) -> int:
        return len(self.positions)

    def points(self) -> Iterable[tuple[float, float]]:
        return zip(self.positions, self.values)


@dataclass(frozen=True, slots=True)
class OnsetList:
    """Note onsets: (beat position, clock time in seconds), both increasing."""

    entries: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if len(self.entries) < 2:
            raise ValueError("need at least 2 onsets")
        prev_beat = prev_time = None
        for i, (beat, time) in enumerate(self.entries):
            if not (math.isfinite(beat) and math.isfinite(time)):
                raise ValueError(f"non-finite onset at index {i}")
            if prev_beat is not None and beat <= prev_beat:
                raise ValueError(f"beats must strictly increase (index {i})")
            if prev_time is not None and time <= prev_time:
                raise ValueError(f"times must strictly increase (index {i})")
            prev_beat, prev_time = beat, time


@dataclass(frozen=True, slots=True)
class SampleOutput:
    series: TempoSeries
    truth: Segmentation
    seed: int


def tempo_from_onsets(onsets: OnsetList, attribute: str = "left") -> TempoSeries:
    """Instantaneous tempo (BPM) from inter-onset intervals.

    Each consecutive onset pair yields one point: 60 times the beat step
    over the time step, attributed at the left onset's beat position (or
    the pair midpoint with attribute="mid").
    """
    if attribute not in ("left", "mid"):
        raise ValueError("attribute must be 'left' or 'mid'")
    positions = []
    values = []
    for (b0, t0), (b1, t1) in zip(onsets.entries, onsets.entries[1:]):
        tempo = 60.0 * (b1 - b0) / (t1 - t0)
        positions.append(b0 if attribute == "left" else 0.5 * (b0 + b1))
        values.append(tempo)
    return TempoSeries(tuple(positions), tuple(values))


def _truth_log_map(
    start: float,
    end: float,
    params: ArcParams,
    priors: PriorSet,
    owned: Sequence[tuple[float, float]],
) -> float:
    """Score one generating arc against the data it covers.

    Mirrors the fitting objective, but evaluated in the arc's own
    coordinate (true arcs start between observations, so the window
    form, which anchors at a datum, does not apply).
    """
    total = priors.duration.neg_log_density(end - start)
    total += priors.slope.neg_log_density(params.slope)
    total += priors.curvature.neg_log_density(params.log_curvature)
    per_datum = 0.5 * LOG_TWO_PI + math.log(priors.noise_sd)
    inv_two_var = 1.0 / (2.0 * priors.noise_sd * priors.noise_sd)
    arch = math.exp(params.log_curvature)
    for x, y in owned:
        u = (x - start) / (end - start)
        r = y - (params.start_value + params.slope * u - arch * u * u)
        total += per_datum + r * r * inv_two_var
    return -total


def sample_model(
    priors: PriorSet,
    span: float,
    observation_grid: Sequence[float],
    seed: int,
    *,
    start_value: float = 60.0,
    min_value: float = 1e-3,
) -> SampleOutput:
    """Draw a chain of arcs from the priors and observe it with noise.

    Arc durations, slopes and log-curvatures are drawn independently
    until the chain covers `span`, each arc starting at its
    predecessor's ending value. Draws whose arc would cross below
    `min_value` are rejected and retaken (a tempo cannot go negative).
    Observations are the chain evaluated at `observation_grid` plus
    i.i.d. gaussian noise of SD `noise_sd`. Fully reproducible per seed.
    """
    if span <= 0 or not math.isfinite(span):
        raise ValueError("span must be positive and finite")
    grid = tuple(float(g) for g in observation_grid)
    if not grid:
        raise ValueError("observation grid must not be empty")
    prev = None
    for g in grid:
        if not 0.0 <= g <= span:
            raise ValueError(f"grid position {g} outside [0, {span}]")
        if prev is not None and g <= prev:
            raise ValueError("grid positions must be strictly increasing")
        prev = g

    rng = np.random.default_rng(seed)
    dur = priors.duration
    raw_arcs: list[tuple[float, float, ArcParams]] = []
    pos = 0.0
    value = start_value
    while pos < span:
        for _ in range(1000):
            duration = math.exp(rng.normal(dur.log_mean, dur.log_sd))
            slope = rng.normal(priors.slope.mean, priors.slope.sd)
            log_curv = rng.normal(priors.curvature.mean, priors.curvature.sd)
            end_value = value + slope - math.exp(log_curv)
            if end_value >= min_value:
                break
        else:
            raise RuntimeError(
                "could not draw an arc staying above the value floor"
            )
        raw_arcs.append((pos, pos + duration, ArcParams(value, slope, log_curv)))
        pos += duration
        value = end_value

    starts = [a[0] for a in raw_arcs]
    owner_of: list[int] = []
    clean = []
    for g in grid:
        i = min(bisect_right(starts, g) - 1, len(raw_arcs) - 1)
        start, end, params = raw_arcs[i]
        u = (g - start) / (end - start)
        clean.append(
            params.start_value
            + params.slope * u
            - math.exp(params.log_curvature) * u * u
        )
        owner_of.append(i)

    noise = rng.normal(0.0, priors.noise_sd, size=len(grid))
    observed = tuple(float(c + e) for c, e in zip(clean, noise))
    series = TempoSeries(grid, observed)

    truth_arcs = []
    total = 0.0
    for i, (start, end, params) in enumerate(raw_arcs):
        owned = [
            (g, y)
            for g, y, owner in zip(grid, observed, owner_of)
            if owner == i
        ]
        log_map = _truth_log_map(start, end, params, priors, owned)
        truth_arcs.append(FittedArc(start, end, params, log_map))
        total = total + log_map
    breakpoints = (raw_arcs[0][0],) + tuple(a[1] for a in raw_arcs)
    truth = Segmentation(
        arcs=tuple(truth_arcs), total_log_map=total, breakpoints=breakpoints
    )
    return SampleOutput(series=series, truth=truth, seed=seed)


# ---------------------------------------------------------------------------
# Text formats. Floats are printed with %.17g so that parsing the text
# recovers the exact double; writers return the number of characters
# written (the formats are pure ASCII).

def format_float(x: float) -> str:
    return format(float(x), ".17g")


def dumps_json(obj, indent: int | None = None) -> str:
    """Deterministic JSON: insertion-ordered keys, floats at 17 digits."""
    out: list[str] = []
    _dump(obj, out, indent, 0)
    return "".join(out)


def _dump(obj, out: list[str], indent: int | None, level: int) -> None:
    pad = "" if indent is None else "\n" + " " * (indent * (level + 1))
    end_pad = "" if indent is None else "\n" + " " * (indent * level)
    if obj is None:
        out.append("null")
    elif isinstance(obj, bool):
        out.append("true" if obj else "false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(format_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{")
        for i, (key, value) in enumerate(obj.items()):
            if i:
                out.append(",")
            out.append(pad)
            out.append(json.dumps(str(key)))
            out.append(": ")
            _dump(value, out, indent, level + 1)
        out.append(end_pad + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.append("[]")
            return
        out.append("[")
        for i, value in enumerate(obj):
            if i:
                out.append(",")
            out.append(pad)
            _dump(value, out, indent, level + 1)
        out.append(end_pad + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def _open_source(source) -> tuple[IO[str], bool]:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline=""), True
    return source, False


def _read_table(source, n_columns: int, what: str) -> list[tuple[float, ...]]:
    stream, owned = _open_source(source)
    rows = []
    try:
        for lineno, raw in enumerate(stream, start=1):
            line = raw.strip()
            if not line:
                continue
            fields = [f.strip() for f in line.split(",")]
            if lineno == 1 and fields and not _is_number(fields[0]):
                continue  # header
            if len(fields) != n_columns:
                raise ParseError(
                    f"expected {n_columns} comma-separated fields in {what}, "
                    f"got {len(fields)}",
                    lineno,
                )
            try:
                rows.append(tuple(float(f) for f in fields))
            except ValueError:
                raise ParseError(f"not a number: {line!r}", lineno) from None
    finally:
        if owned:
            stream.close()
    return rows


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_series(source) -> TempoSeries:
    """Read a `position,value` CSV (header optional) into a TempoSeries."""
    rows = _read_table(source, 2, "series CSV")
    if not rows:
        raise ValueError("series CSV contains no data rows")
    return TempoSeries(
        tuple(r[0] for r in rows), tuple(r[1] for r in rows)
    )


def read_onsets(source) -> OnsetList:
    """Read a `beat,time_seconds` CSV (header optional) into an OnsetList."""
    rows = _read_table(source, 2, "onset CSV")
    return OnsetList(tuple((r[0], r[1]) for r in rows))


def write_series(series: TempoSeries, stream: IO[str]) -> int:
    written = stream.write("position,value\n")
    for x, y in series.points():
        written += stream.write(f"{format_float(x)},{format_float(y)}\n")
    return written


def segmentation_dict(seg: Segmentation) -> dict:
    return {
        "total_log_map": seg.total_log_map,
        "breakpoints": list(seg.breakpoints),
        "arcs": [
            {
                "start_pos": a.start_pos,
                "end_pos": a.end_pos,
                "a": a.params.start_value,
                "b": a.params.slope,
                "c": a.params.log_curvature,
                "log_map": a.log_map,
            }
            for a in seg.arcs
        ],
    }


def _segmentation_from_dict(data: dict) -> Segmentation:
    arcs = tuple(
        FittedArc(
            start_pos=float(a["start_pos"]),
            end_pos=float(a["end_pos"]),
            params=ArcParams(float(a["a"]), float(a["b"]), float(a["c"])),
            log_map=float(a["log_map"]),
        )
        for a in data["arcs"]
    )
    breakpoints = (arcs[0].start_pos,) + tuple(a.end_pos for a in arcs)
    return Segmentation(
        arcs=arcs,
        total_log_map=float(data["total_log_map"]),
        breakpoints=breakpoints,
    )


def write_segmentation(obj, stream: IO[str], fmt: str = "json") -> int:
    """Serialize a Segmentation or TwoLevelAnalysis; returns characters written.

    JSON carries a stable `format_version`; two-level analyses nest
    `long_scale` and `short_scale`. CSV emits one arc per row (with a
    leading `scale` column for two-level analyses).
    """
    is_two_level = hasattr(obj, "long_scale")
    if fmt == "json":
        if is_two_level:
            payload = {
                "format_version": FORMAT_VERSION,
                "long_scale": segmentation_dict(obj.long_scale),
                "short_scale": segmentation_dict(obj.short_scale),
            }
        else:
            payload = {"format_version": FORMAT_VERSION}
            payload.update(segmentation_dict(obj))
        return stream.write(dumps_json(payload, indent=2) + "\n")
    if fmt == "csv":
        if is_two_level:
            written = stream.write(
                "scale,start_pos,end_pos,a,b,c,log_map\n"
            )
            for scale, seg in (
                ("long", obj.long_scale), ("short", obj.short_scale)
            ):
                for a in seg.arcs:
                    written += stream.write(
                        f"{scale}," + _arc_row(a) + "\n"
                    )
            return written
        written = stream.write("start_pos,end_pos,a,b,c,log_map\n")
        for a in obj.arcs:
            written += stream.write(_arc_row(a) + "\n")
        return written
    raise ValueError(f"unknown format {fmt!r}")


def _arc_row(a: FittedArc) -> str:
    return ",".join(
        format_float(v)
        for v in (
            a.start_pos,
            a.end_pos,
            a.params.start_value,
            a.params.slope,
            a.params.log_curvature,
            a.log_map,
        )
    )


def read_segmentation(source, scale: str | None = None) -> Segmentation:
    """Read a segmentation JSON written by `write_segmentation`.

    For two-level files, `scale` selects "long" or "short" (default
    "short", the level usually summarized).
    """
    stream, owned = _open_source(source)
    try:
        data = json.load(stream)
    finally:
        if owned:
            stream.close()
    if "arcs" in data:
        if scale is not None:
            raise ValueError("scale only applies to two-level files")
        return _segmentation_from_dict(data)
    if "long_scale" in data and "short_scale" in data:
        chosen = scale or "short"
        if chosen not in ("long", "short"):
            raise ValueError("scale must be 'long' or 'short'")
        return _segmentation_from_dict(data[f"{chosen}_scale"])
    raise ValueError("not a segmentation JSON document")


def write_plot_data(analysis, series: TempoSeries, stream: IO[str]) -> int:
    """CSV for external plotting: observed, long model, combined model."""
    written = stream.write("position,observed,long_model,combined_model\n")
    for x, y in series.points():
        long_v = analysis.long_scale.value_at(x)
        combined = long_v + analysis.short_scale.value_at(x)
        written += stream.write(
            f"{format_float(x)},{format_float(y)},"
            f"{format_float(long_v)},{format_float(combined)}\n"
        )
    return written
