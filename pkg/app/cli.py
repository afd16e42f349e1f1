# Command-line interface, batch runs and artefact regeneration.
"""
    Sub-commands wrap the service modules and write their artefacts to an output
    directory. The effective configuration of every run is echoed to stdout as JSON and
    saved next to the artefacts; progress goes to stderr through logging.

    Exit codes: 0 success, 1 usage or configuration error, 2 data or format error,
    3 fixed-point overflow.
"""

import argparse
import json
import logging
import sys
import time
from typing import Any, Callable, Dict, List, Optional

from pydantic import ValidationError

from app.config import Config
from app.models import FrozenModel
from app.services.characterization import (
    corner_error_distribution,
    corner_errors,
    cost_model,
    proposed_cost,
    resolution_report,
    sweep_degree,
    sweep_fractions,
)
from app.services.fixed_point import FxFormat, FxOverflowError, Rounding
from app.services.frame_io import ArtifactWriter, FrameFormatError, dump_json, read_frame_csv, read_scenario_json
from app.services.interpolation import Arithmetic, BoundaryPolicy, InterpolationConfig, correct_frame
from app.services.mdc_sim import ClockConfig, ScenarioError, run_scenario
from app.services.signal_model import (
    DelayDistribution,
    PdParams,
    TlSignalParams,
    draw_delay,
    inject_pd,
    sample_frame,
)
from app.services.weight_matrix import tag_register_bits, weights_for_degree

logger = logging.getLogger("app.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_OVERFLOW = 3


class RunConfig(FrozenModel):
    command: str
    signal: Optional[TlSignalParams] = None
    delay: Optional[DelayDistribution] = None
    pd: Optional[PdParams] = None
    interpolation: Optional[InterpolationConfig] = None
    clock: Optional[ClockConfig] = None
    options: Dict[str, Any] = {}

    def to_json(self) -> str:
        return dump_json(self.plain())

    def plain(self) -> Dict[str, Any]:
        return json.loads(self.json())


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _echo(config: RunConfig, writer: ArtifactWriter) -> None:
    text = config.to_json()
    sys.stdout.write(text)
    sys.stdout.flush()
    with open(writer.out_dir / f"{config.command.replace('-', '_')}_config.json", "w") as f:
        f.write(text)


def _interpolation_config(args) -> InterpolationConfig:
    return InterpolationConfig(
        degree=args.degree,
        fmt=FxFormat(frac_bits=args.frac_bits, rounding=Rounding(args.rounding)),
        arithmetic=Arithmetic(args.arithmetic),
        boundary_policy=BoundaryPolicy(args.boundary),
    )


def _signal_params(args) -> TlSignalParams:
    return TlSignalParams(a_rms=args.a_rms, freq_hz=args.freq_hz, phase_rad=args.phase_rad)


def _delay_distribution(args) -> DelayDistribution:
    return DelayDistribution(
        mean_ns=args.delay_mean_ns, sigma_ns=args.delay_sigma_ns, clip_ns=args.delay_clip_ns
    )


def _pd_params(args) -> Optional[PdParams]:
    if not args.pd:
        return None
    return PdParams(
        onset_step=args.pd_onset,
        amplitude=args.pd_amplitude,
        decay_per_step=args.pd_decay,
        oscillation_period_steps=args.pd_period,
    )


def cmd_generate(args) -> None:
    params = _signal_params(args)
    dist = _delay_distribution(args)
    pd = _pd_params(args)
    if args.seed is not None:
        delay_ns = draw_delay(dist, args.seed)
    else:
        delay_ns = args.delay_ns

    writer = ArtifactWriter(args.out)
    config = RunConfig(
        command="generate",
        signal=params,
        delay=dist if args.seed is not None else None,
        pd=pd,
        options={"delay_ns": delay_ns, "seed": args.seed, "name": args.name},
    )
    frame = inject_pd(sample_frame(params, delay_ns), pd)
    plain = config.plain()
    writer.write_frame(
        frame,
        args.name,
        meta={"seed": args.seed, "signal": plain["signal"], "pd": plain["pd"]},
    )
    _echo(config, writer)


def cmd_correct(args) -> None:
    cfg = _interpolation_config(args)
    frame = read_frame_csv(args.frame)
    next_frame = read_frame_csv(args.next_frame) if args.next_frame else None
    delay_ticks = args.delay_ticks if args.delay_ticks is not None else frame.delay_ns // Config.TICK_NS

    writer = ArtifactWriter(args.out)
    config = RunConfig(
        command="correct",
        interpolation=cfg,
        options={
            "frame": str(args.frame),
            "next_frame": str(args.next_frame) if args.next_frame else None,
            "delay_ticks": delay_ticks,
            "workers": args.workers,
            "name": args.name,
        },
    )
    corrected = correct_frame(frame, delay_ticks, cfg, next_frame=next_frame, workers=args.workers)
    writer.write_corrected(corrected, args.name)
    _echo(config, writer)


def cmd_mdc(args) -> None:
    clk = ClockConfig(
        freq_hz=args.freq_hz,
        tick_ns=args.tick_ns,
        ticks_per_period=args.ticks_per_period,
        sp_per_second=args.sp_per_second,
    )
    drdy, pps, n_ticks = read_scenario_json(args.scenario)
    writer = ArtifactWriter(args.out)
    config = RunConfig(
        command="mdc",
        clock=clk,
        options={"scenario": str(args.scenario), "n_ticks": n_ticks, "stepwise": args.stepwise},
    )
    records = run_scenario(drdy, pps, n_ticks, clk, stepwise=args.stepwise)
    writer.write_periods(records)
    _echo(config, writer)


def cmd_sweep(args) -> None:
    writer = ArtifactWriter(args.out)
    options = {
        "axis": args.axis,
        "stride": args.stride,
        "threshold": args.threshold,
        "cycles": args.cycles,
        "workers": args.workers,
    }
    if args.axis == "degree":
        low = Config.DEGREE_SWEEP_RANGE[0] if args.min is None else args.min
        high = Config.DEGREE_SWEEP_RANGE[1] if args.max is None else args.max
        options.update(min=low, max=high)
        report = sweep_degree(
            threshold=args.threshold,
            grid_stride=args.stride,
            degrees=range(low, high + 1),
            cycles=args.cycles,
            workers=args.workers,
        )
    else:
        low = Config.FRAC_SWEEP_RANGE[0] if args.min is None else args.min
        high = Config.FRAC_SWEEP_RANGE[1] if args.max is None else args.max
        options.update(min=low, max=high, degree=args.degree, rounding=args.rounding)
        report = sweep_fractions(
            degree=args.degree,
            threshold=args.threshold,
            grid_stride=args.stride,
            frac_range=range(low, high + 1),
            rounding=Rounding(args.rounding),
            cycles=args.cycles,
            workers=args.workers,
        )
    options["selected_min"] = report.selected_min
    writer.write_sweep(report)
    _echo(RunConfig(command="sweep", options=options), writer)


def cmd_cost(args) -> None:
    if args.proposed:
        degree = Config.DEFAULT_DEGREE if args.degree is None else args.degree
        tag_bits = tag_register_bits(Config.SAMPLES_PER_FRAME - 1) if args.tag_bits is None else args.tag_bits
        report = proposed_cost(degree, tag_bits, args.word_bits)
    else:
        if args.degree is None or args.tag_bits is None:
            raise ValueError("cost needs -n and -m unless --proposed is given")
        degree, tag_bits = args.degree, args.tag_bits
        report = cost_model(degree, tag_bits, args.word_bits)
    writer = ArtifactWriter(args.out)
    writer.write_json("cost.json", report.as_dict())
    logger.info(f"{report.total_units} arithmetic units, {report.memory_bits} bits of memory")
    _echo(
        RunConfig(
            command="cost",
            options={
                "degree": degree,
                "tag_bits": tag_bits,
                "word_bits": args.word_bits,
                "proposed": args.proposed,
            },
        ),
        writer,
    )


def cmd_corners(args) -> None:
    corrected = read_frame_csv(args.frame)
    reference = read_frame_csv(args.reference)
    report = corner_errors(corrected.samples, reference.samples)
    writer = ArtifactWriter(args.out)
    writer.write_corners(report, args.name)
    logger.info(f"{len(report.corner_steps)} corners, max error {report.max_error:.3e}")
    _echo(
        RunConfig(
            command="corners",
            options={
                "frame": str(args.frame),
                "reference": str(args.reference),
                "name": args.name,
                "max_error": report.max_error,
            },
        ),
        writer,
    )


def cmd_weights(args) -> None:
    fmt = FxFormat(frac_bits=args.frac_bits, rounding=Rounding(args.rounding))
    wm = weights_for_degree(args.degree, fmt)
    writer = ArtifactWriter(args.out)
    writer.write_weights(wm)
    _echo(
        RunConfig(command="weights", options={"degree": args.degree, "fmt": fmt.dict()}),
        writer,
    )


def cmd_corner_experiment(args) -> None:
    cfg = _interpolation_config(args)
    signal = _signal_params(args)
    dist = _delay_distribution(args)
    pd = _pd_params(args)
    seeds = range(args.first_seed, args.first_seed + args.seeds)
    result = corner_error_distribution(
        seeds, cfg, threshold=args.threshold, signal=signal, delay_dist=dist, pd=pd
    )
    writer = ArtifactWriter(args.out)
    writer.write_corner_runs(result.reports)
    summary = result.summary()
    logger.info(
        f"Corner error over {summary['runs']} runs: max {summary['max']:.3e}, "
        f"median {summary['median']:.3e}, {summary['over_threshold']} over threshold"
    )
    _echo(
        RunConfig(
            command="corner-experiment",
            signal=signal,
            delay=dist,
            pd=pd,
            interpolation=cfg,
            options={
                "first_seed": args.first_seed,
                "seeds": args.seeds,
                "threshold": args.threshold,
                "resolution": resolution_report(cfg.fmt),
            },
        ),
        writer,
    )


def _out_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--out", default=Config.OUTPUT_DIR, help="Output directory")
    return parent


def _interp_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--degree", type=int, default=Config.DEFAULT_DEGREE)
    parent.add_argument("--frac-bits", type=int, default=Config.DEFAULT_FRAC_BITS)
    parent.add_argument("--rounding", choices=[r.value for r in Rounding], default=Rounding.FLOOR.value)
    parent.add_argument(
        "--arithmetic", choices=[a.value for a in Arithmetic], default=Arithmetic.FIXED_POINT.value
    )
    parent.add_argument(
        "--boundary", choices=[b.value for b in BoundaryPolicy], default=BoundaryPolicy.WRAP_PERIODIC.value
    )
    return parent


def _signal_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--a-rms", type=float, default=1.0)
    parent.add_argument("--freq-hz", type=float, default=Config.TL_FREQ_HZ)
    parent.add_argument("--phase-rad", type=float, default=0.0)
    parent.add_argument("--delay-mean-ns", type=float, default=Config.DELAY_MEAN_NS)
    parent.add_argument("--delay-sigma-ns", type=float, default=Config.DELAY_SIGMA_NS)
    parent.add_argument("--delay-clip-ns", type=int, default=Config.DELAY_CLIP_NS)
    parent.add_argument("--pd-onset", type=int, default=Config.PD_ONSET_STEP)
    parent.add_argument("--pd-amplitude", type=float, default=Config.PD_AMPLITUDE)
    parent.add_argument("--pd-decay", type=float, default=Config.PD_DECAY_PER_STEP)
    parent.add_argument("--pd-period", type=float, default=Config.PD_OSCILLATION_STEPS)
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="app.cli", description="Data-frame correction toolkit")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    out, interp, signal = _out_parent(), _interp_parent(), _signal_parent()

    p = sub.add_parser("generate", parents=[out, signal], help="Sample a delayed TL frame")
    source = p.add_mutually_exclusive_group()
    source.add_argument("--delay-ns", type=int, default=0)
    source.add_argument("--seed", type=int)
    p.add_argument("--pd", action="store_true", help="Overlay a partial-discharge transient")
    p.add_argument("--name", default="frame.csv")
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("correct", parents=[out, interp], help="Correct a delayed frame")
    p.add_argument("frame")
    p.add_argument("--delay-ticks", type=int, help="Defaults to the delay recorded with the frame")
    p.add_argument("--next-frame")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--name", default="corrected.csv")
    p.set_defaults(handler=cmd_correct)

    p = sub.add_parser("mdc", parents=[out], help="Run a DRDY / 1PPS scenario")
    p.add_argument("scenario")
    p.add_argument("--freq-hz", type=int, default=Config.CLOCK_HZ)
    p.add_argument("--tick-ns", type=int, default=Config.TICK_NS)
    p.add_argument("--ticks-per-period", type=int, default=Config.TICKS_PER_PERIOD)
    p.add_argument("--sp-per-second", type=int, default=Config.SP_PER_SECOND)
    p.add_argument("--stepwise", action="store_true", help="Simulate every tick")
    p.set_defaults(handler=cmd_mdc)

    p = sub.add_parser("sweep", parents=[out], help="Error sweep over degree or fraction bits")
    p.add_argument("--axis", choices=["degree", "frac_bits"], default="degree")
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--threshold", type=float, default=Config.ERROR_THRESHOLD)
    p.add_argument("--degree", type=int, default=Config.DEFAULT_DEGREE)
    p.add_argument("--rounding", choices=[r.value for r in Rounding], default=Rounding.FLOOR.value)
    p.add_argument("--cycles", type=float, default=1.0)
    p.add_argument("--min", type=int)
    p.add_argument("--max", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("cost", parents=[out], help="Arithmetic unit and memory cost")
    p.add_argument("-n", "--degree", type=int)
    p.add_argument("-m", "--tag-bits", type=int)
    p.add_argument("--word-bits", type=int, default=Config.CONTAINER_BITS)
    p.add_argument("--proposed", action="store_true", help="Cost the windowed division-free datapath")
    p.set_defaults(handler=cmd_cost)

    p = sub.add_parser("corners", parents=[out], help="Errors at the corners of a reference frame")
    p.add_argument("frame")
    p.add_argument("reference")
    p.add_argument("--name", default="corners.csv")
    p.set_defaults(handler=cmd_corners)

    p = sub.add_parser("weights", parents=[out], help="Dump the quantized weight matrix")
    p.add_argument("--degree", type=int, default=Config.DEFAULT_DEGREE)
    p.add_argument("--frac-bits", type=int, default=Config.DEFAULT_FRAC_BITS)
    p.add_argument("--rounding", choices=[r.value for r in Rounding], default=Rounding.FLOOR.value)
    p.set_defaults(handler=cmd_weights)

    p = sub.add_parser(
        "corner-experiment", parents=[out, interp, signal], help="Seeded corner-error distribution"
    )
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--first-seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=Config.ERROR_THRESHOLD)
    p.add_argument("--no-pd", dest="pd", action="store_false")
    p.set_defaults(handler=cmd_corner_experiment, pd=True)

    return parser


def _configure_logging() -> None:
    logging.basicConfig(
        level=getattr(logging, Config.LOG_LEVEL.upper(), logging.INFO),
        format="[%(asctime)s] %(levelname)s %(name)s: %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        stream=sys.stderr,
    )


def main(argv: Optional[List[str]] = None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    handler: Callable = args.handler
    start = time.time()
    logger.info(f"=== {args.command} started ===")
    try:
        handler(args)
    except FxOverflowError as exc:
        logger.error(f"Fixed-point overflow: {str(exc)}")
        return EXIT_OVERFLOW
    except FrameFormatError as exc:
        logger.error(f"Malformed input: {str(exc)}")
        return EXIT_DATA
    except FileNotFoundError as exc:
        logger.error(f"Missing input: {str(exc)}")
        return EXIT_DATA
    except (ValidationError, ScenarioError, ValueError) as exc:
        logger.error(f"Invalid configuration: {str(exc)}")
        return EXIT_USAGE
    logger.info(f"=== {args.command} completed in {time.time() - start:.2f}s ===")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
