"""Command-line interface.

Subcommands: fit, stream, predict, multiscale, sample, deviance. Results
go to standard output as JSON (CSV for sampled series); diagnostics go
to standard error, gated by the ARCFIT_LOG environment variable
(quiet, info, debug). Exit codes: 0 success, 2 usage or data errors,
3 optimizer failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from typing import IO

from .arc_model import FittedArc, GaussianPrior, LogNormalPrior, PriorSet
from .multiscale import decompose, mean_barline_deviance
from .optimizer import OptimizationError
from .segmenter import Prediction, SegmenterState, fit_series
from .tempo_io import (
    FORMAT_VERSION,
    dumps_json,
    read_onsets,
    read_segmentation,
    read_series,
    sample_model,
    segmentation_dict,
    tempo_from_onsets,
    write_plot_data,
    write_segmentation,
    write_series,
)

log = logging.getLogger(__name__)

DEFAULT_SLOPE_MEAN = 0.0
DEFAULT_SLOPE_SD = 10.0
DEFAULT_CURV_MEAN = math.log(8.0)
DEFAULT_CURV_SD = 1.0
DEFAULT_DUR_LOGMEAN = math.log(8.0)
DEFAULT_DUR_LOGSD = 0.5
DEFAULT_NOISE_SD = 3.0
DEFAULT_LOOKBACK = 32

_LOG_LEVELS = {
    "quiet": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


def _setup_logging() -> None:
    name = os.environ.get("ARCFIT_LOG", "quiet").strip().lower()
    level = _LOG_LEVELS.get(name, logging.WARNING)
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )


def _add_prior_flags(
    parser: argparse.ArgumentParser,
    prefix: str = "",
    dur_logmean: float = DEFAULT_DUR_LOGMEAN,
) -> None:
    p = f"--{prefix}" if prefix else "--"
    group = parser.add_argument_group(
        f"{prefix.rstrip('-') or 'model'} priors"
    )
    group.add_argument(f"{p}slope-mean", type=float, default=DEFAULT_SLOPE_MEAN)
    group.add_argument(f"{p}slope-sd", type=float, default=DEFAULT_SLOPE_SD)
    group.add_argument(f"{p}curv-mean", type=float, default=DEFAULT_CURV_MEAN)
    group.add_argument(f"{p}curv-sd", type=float, default=DEFAULT_CURV_SD)
    group.add_argument(f"{p}dur-logmean", type=float, default=dur_logmean,
                       help="log of the duration prior median, in log-beats")
    group.add_argument(f"{p}dur-logsd", type=float, default=DEFAULT_DUR_LOGSD)
    group.add_argument(f"{p}dur-median-bars", type=float, default=None,
                       help="set the duration prior median to this many bars "
                            "(see --beats-per-bar); overrides the log-mean flag")


def _prior_value(args: argparse.Namespace, prefix: str, name: str):
    return getattr(args, f"{prefix}{name}".replace("-", "_"))


def _priors_from(args: argparse.Namespace, prefix: str = "") -> PriorSet:
    dur_logmean = _prior_value(args, prefix, "dur-logmean")
    median_bars = _prior_value(args, prefix, "dur-median-bars")
    if median_bars is not None:
        beats = median_bars * args.beats_per_bar
        if beats <= 0:
            raise ValueError("duration median must be positive")
        dur_logmean = math.log(beats)
    return PriorSet(
        slope=GaussianPrior(
            _prior_value(args, prefix, "slope-mean"),
            _prior_value(args, prefix, "slope-sd"),
        ),
        curvature=GaussianPrior(
            _prior_value(args, prefix, "curv-mean"),
            _prior_value(args, prefix, "curv-sd"),
        ),
        duration=LogNormalPrior(dur_logmean, _prior_value(args, prefix, "dur-logsd")),
        noise_sd=args.noise_sd,
    )


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--noise-sd", type=float, default=DEFAULT_NOISE_SD,
                        help="observation noise SD (signal units)")
    parser.add_argument("--k", type=int, default=DEFAULT_LOOKBACK,
                        help="max lookback, in data points")
    parser.add_argument("--beats-per-bar", type=float, default=4.0)


def _add_input_flags(parser: argparse.ArgumentParser, onsets: bool = True) -> None:
    parser.add_argument("input_pos", nargs="?", metavar="INPUT", default=None,
                        help="series CSV path, or - for standard input")
    parser.add_argument("--input", default=None,
                        help="same as the positional INPUT")
    if onsets:
        parser.add_argument("--onsets", action="store_true",
                            help="input is an onset CSV (beat,time_seconds); "
                                 "convert to instantaneous tempo first")
        parser.add_argument("--tempo-at", choices=("left", "mid"),
                            default="left",
                            help="attribute each tempo value at the left "
                                 "onset or the pair midpoint")


def _resolve_input(args: argparse.Namespace) -> str:
    if args.input is not None:
        return args.input
    if args.input_pos is not None:
        return args.input_pos
    return "-"


def _read_input_series(args: argparse.Namespace):
    path = _resolve_input(args)
    source = sys.stdin if path == "-" else path
    if getattr(args, "onsets", False):
        return tempo_from_onsets(read_onsets(source), attribute=args.tempo_at)
    return read_series(source)


def _open_output(args: argparse.Namespace) -> tuple[IO[str], bool]:
    path = getattr(args, "output", None)
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline="\n"), True


def _emit(args: argparse.Namespace, text: str) -> None:
    stream, owned = _open_output(args)
    try:
        stream.write(text)
    finally:
        if owned:
            stream.close()


def _arc_dict(arc: FittedArc) -> dict:
    return {
        "start_pos": arc.start_pos,
        "end_pos": arc.end_pos,
        "a": arc.params.start_value,
        "b": arc.params.slope,
        "c": arc.params.log_curvature,
        "log_map": arc.log_map,
    }


def _prediction_dict(prediction: Prediction) -> dict:
    return {
        "chosen_end": prediction.chosen_end,
        "total_log_map": prediction.total_log_map,
        "arc": _arc_dict(prediction.arc),
        "trajectory": [list(p) for p in prediction.trajectory],
    }


# --------------------------------------------------------------------------
# Subcommand handlers.

def _cmd_fit(args: argparse.Namespace) -> int:
    priors = _priors_from(args)
    series = _read_input_series(args)
    seg = fit_series(series, priors, args.k)
    stream, owned = _open_output(args)
    try:
        write_segmentation(seg, stream, fmt=args.format)
    finally:
        if owned:
            stream.close()
    return 0


def _chain_summary(state: SegmenterState) -> tuple[int, list[float]]:
    breakpoints = [state.positions[-1]] if state.positions else []
    num_arcs = 0
    i = len(state.cells) - 1
    while i > 0:
        num_arcs += 1
        i = state.cells[i].back_index
        breakpoints.append(state.positions[i])
    breakpoints.reverse()
    return num_arcs, breakpoints


def _cmd_stream(args: argparse.Namespace) -> int:
    priors = _priors_from(args)
    state = SegmenterState(priors, args.k)
    out = sys.stdout
    for lineno, raw in enumerate(sys.stdin, start=1):
        line = raw.strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split(",")]
        if lineno == 1 and fields and fields[0] == "position":
            continue
        if len(fields) != 2:
            raise ValueError(f"line {lineno}: expected position,value")
        try:
            position, value = float(fields[0]), float(fields[1])
        except ValueError:
            raise ValueError(f"line {lineno}: not a number: {line!r}") from None
        state.update(position, value)
        n = len(state) - 1
        num_arcs, breakpoints = _chain_summary(state)
        record = {
            "type": "update",
            "index": n,
            "position": position,
            "value": value,
            "cum_log_map": state.cells[-1].cum_log_map,
            "num_arcs": num_arcs,
            "breakpoints": breakpoints,
        }
        if args.predict_each:
            if len(state) >= 2:
                prediction = state.predict(state.default_grid())
                record["prediction"] = _prediction_dict(prediction)
            else:
                record["prediction"] = None
        out.write(dumps_json(record) + "\n")
        out.flush()
    if len(state) >= 2:
        payload = {"format_version": FORMAT_VERSION}
        payload.update(segmentation_dict(state.finalize()))
        out.write(dumps_json({"type": "final", "segmentation": payload}) + "\n")
    return 0


def _cmd_predict(args: argparse.Namespace) -> int:
    priors = _priors_from(args)
    series = _read_input_series(args)
    state = SegmenterState(priors, args.k)
    for position, value in series.points():
        state.update(position, value)
    if args.grid_step is not None:
        step = args.grid_step
        if step <= 0:
            raise ValueError("--grid-step must be positive")
        count = args.grid_count or args.k
        last = state.positions[-1]
        grid = tuple(last + step * (i + 1) for i in range(count))
    else:
        grid = state.default_grid(args.grid_count)
    prediction = state.predict(grid)
    payload = {"format_version": FORMAT_VERSION}
    payload.update(_prediction_dict(prediction))
    _emit(args, dumps_json(payload, indent=2) + "\n")
    return 0


def _cmd_multiscale(args: argparse.Namespace) -> int:
    long_priors = _priors_from(args, "long-")
    short_priors = _priors_from(args, "short-")
    series = _read_input_series(args)
    analysis = decompose(series, long_priors, short_priors, args.k)
    stream, owned = _open_output(args)
    try:
        write_segmentation(analysis, stream, fmt=args.format)
    finally:
        if owned:
            stream.close()
    if args.plot_out:
        with open(args.plot_out, "w", encoding="utf-8", newline="\n") as f:
            write_plot_data(analysis, series, f)
        log.info("plot data written to %s", args.plot_out)
    return 0


def _cmd_sample(args: argparse.Namespace) -> int:
    priors = _priors_from(args)
    if args.span <= 0:
        raise ValueError("--span must be positive")
    if args.grid_count is not None:
        if args.grid_count < 2:
            raise ValueError("--grid-count must be at least 2")
        step = args.span / (args.grid_count - 1)
        grid = [step * i for i in range(args.grid_count)]
    else:
        step = args.grid_step
        if step <= 0:
            raise ValueError("--grid-step must be positive")
        grid = []
        i = 0
        while step * i <= args.span:
            grid.append(step * i)
            i += 1
    sample = sample_model(
        priors, args.span, grid, args.seed, start_value=args.start_value
    )
    if args.format == "json":
        payload = {
            "format_version": FORMAT_VERSION,
            "seed": sample.seed,
            "series": {
                "positions": list(sample.series.positions),
                "values": list(sample.series.values),
            },
            "truth": segmentation_dict(sample.truth),
        }
        _emit(args, dumps_json(payload, indent=2) + "\n")
    else:
        stream, owned = _open_output(args)
        try:
            write_series(sample.series, stream)
        finally:
            if owned:
                stream.close()
    if args.truth_out:
        with open(args.truth_out, "w", encoding="utf-8", newline="\n") as f:
            write_segmentation(sample.truth, f, fmt="json")
        log.info("truth segmentation written to %s", args.truth_out)
    return 0


def _cmd_deviance(args: argparse.Namespace) -> int:
    path = _resolve_input(args)
    source = sys.stdin if path == "-" else path
    seg = read_segmentation(source, scale=args.scale)
    report = mean_barline_deviance(seg, args.bar_length)
    payload = {
        "format_version": FORMAT_VERSION,
        "bar_length": args.bar_length,
        "count": len(report.per_breakpoint),
        "mean_deviance": report.mean_deviance,
        "per_breakpoint": [list(p) for p in report.per_breakpoint],
    }
    _emit(args, dumps_json(payload, indent=2) + "\n")
    return 0


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arcfit",
        description="MAP segmentation of a noisy series into connected "
                    "concave arcs.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_fit = sub.add_parser("fit", help="fit a whole series and print the "
                                       "segmentation as JSON")
    _add_input_flags(p_fit)
    _add_common_flags(p_fit)
    _add_prior_flags(p_fit)
    p_fit.add_argument("--format", choices=("json", "csv"), default="json")
    p_fit.add_argument("--output", default=None)
    p_fit.set_defaults(handler=_cmd_fit)

    p_stream = sub.add_parser(
        "stream",
        help="read position,value lines from stdin; one JSON line per update",
    )
    _add_common_flags(p_stream)
    _add_prior_flags(p_stream)
    p_stream.add_argument("--predict-each", action="store_true",
                          help="attach an immediate-future prediction to "
                               "every update")
    p_stream.set_defaults(handler=_cmd_stream)

    p_predict = sub.add_parser(
        "predict", help="predict the in-progress arc at the end of a series"
    )
    _add_input_flags(p_predict)
    _add_common_flags(p_predict)
    _add_prior_flags(p_predict)
    p_predict.add_argument("--grid-count", type=int, default=None,
                           help="number of future candidate ends "
                                "(default: K)")
    p_predict.add_argument("--grid-step", type=float, default=None,
                           help="spacing of future candidates in beats "
                                "(default: median observed interval)")
    p_predict.add_argument("--output", default=None)
    p_predict.set_defaults(handler=_cmd_predict)

    p_multi = sub.add_parser(
        "multiscale",
        help="two-pass analysis: long timescale, then the residual at a "
             "short timescale",
    )
    _add_input_flags(p_multi)
    _add_common_flags(p_multi)
    _add_prior_flags(p_multi, "long-", dur_logmean=math.log(16.0))
    _add_prior_flags(p_multi, "short-", dur_logmean=math.log(4.0))
    p_multi.add_argument("--format", choices=("json", "csv"), default="json")
    p_multi.add_argument("--plot-out", default=None,
                         help="also write position,observed,long_model,"
                              "combined_model CSV here")
    p_multi.add_argument("--output", default=None)
    p_multi.set_defaults(handler=_cmd_multiscale)

    p_sample = sub.add_parser(
        "sample", help="draw a synthetic series from the generative model"
    )
    _add_common_flags(p_sample)
    _add_prior_flags(p_sample)
    p_sample.add_argument("--seed", type=int, default=0)
    p_sample.add_argument("--span", type=float, required=True,
                          help="length of the sampled series in beats")
    p_sample.add_argument("--grid-step", type=float, default=1.0)
    p_sample.add_argument("--grid-count", type=int, default=None)
    p_sample.add_argument("--start-value", type=float, default=60.0)
    p_sample.add_argument("--format", choices=("csv", "json"), default="csv",
                          help="csv: series only; json: series plus truth")
    p_sample.add_argument("--truth-out", default=None,
                          help="write the generating arc chain to this JSON "
                               "file")
    p_sample.add_argument("--output", default=None)
    p_sample.set_defaults(handler=_cmd_sample)

    p_dev = sub.add_parser(
        "deviance",
        help="mean breakpoint deviance from the barline grid of a "
             "segmentation JSON",
    )
    _add_input_flags(p_dev, onsets=False)
    p_dev.add_argument("--bar-length", type=float, required=True,
                       help="bar length in beats")
    p_dev.add_argument("--scale", choices=("long", "short"), default=None,
                       help="which level of a two-level file to use "
                            "(default short)")
    p_dev.add_argument("--output", default=None)
    p_dev.set_defaults(handler=_cmd_deviance)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.handler(args)
    except OptimizationError as exc:
        print(f"arcfit: optimizer failure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"arcfit: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
