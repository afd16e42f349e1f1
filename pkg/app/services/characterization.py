"""
Accuracy characterization of the interpolator.

The degree and fraction-bit sweeps evaluate a one-period sampled sine on the fine grid
of clock ticks and record the worst absolute error for each setting. Every grid point
sits at an exact rational position, and points that share a position relative to their
window share one coefficient set, so coefficients are computed once per distinct
relative position and the rest is vectorised with numpy.
"""

import logging
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from app.config import Config
from app.services.fixed_point import FxFormat, Rounding, quantize_real
from app.services.interpolation import (
    InterpolationConfig,
    coefficients_raw,
    correct_frame,
    lagrange_coefficients_float,
)
from app.services.signal_model import (
    DelayDistribution,
    PdParams,
    TlSignalParams,
    draw_delay,
    inject_pd,
    sample_frame,
)
from app.services.weight_matrix import tag_register_bits, weights_for_degree

logger = logging.getLogger(__name__)

N = Config.SAMPLES_PER_FRAME


class SweepAxis(str, Enum):
    DEGREE = "degree"
    FRAC_BITS = "frac_bits"


@dataclass(frozen=True)
class SweepPoint:
    value: int
    max_abs_error: float


@dataclass(frozen=True)
class SweepReport:
    axis: SweepAxis
    points: Tuple[SweepPoint, ...]
    selected_min: Optional[int]
    threshold: float

    def error_at(self, value: int) -> float:
        for point in self.points:
            if point.value == value:
                return point.max_abs_error
        raise KeyError(f"{self.axis.value}={value} was not swept")

    def to_rows(self) -> List[Tuple[int, float]]:
        return [(p.value, p.max_abs_error) for p in self.points]


@dataclass(frozen=True)
class CornerReport:
    corner_steps: Tuple[int, ...]
    abs_errors: Tuple[float, ...]
    max_error: float
    delay_ns: int = 0
    seed: Optional[int] = None

    def to_rows(self) -> List[Tuple[int, float]]:
        return list(zip(self.corner_steps, self.abs_errors))


@dataclass(frozen=True)
class CostReport:
    degree: int
    subtractors: int
    dividers: int
    adders: int
    multipliers: int
    total_units: int
    memory_bits: int
    tag_bits: int

    def as_dict(self) -> Dict[str, int]:
        return asdict(self)


# ---------------------------------------------------------------------------
# Fine-grid sweeps


@dataclass(frozen=True)
class _Grid:
    """Tick grid positions with their centred periodic windows for one degree."""

    t_ns: np.ndarray
    start: np.ndarray
    keys: np.ndarray  # (t - start * STEP_NS), the exact relative position numerator
    inverse: np.ndarray


def _build_grid(degree: int, grid_stride: int) -> _Grid:
    if grid_stride < 1:
        raise ValueError("grid_stride must be at least 1")
    t = np.arange(0, Config.TICKS_PER_PERIOD, grid_stride, dtype=np.int64) * Config.TICK_NS
    # round-half-up of t / STEP_NS, computed exactly on integers
    centre = (2 * t + Config.STEP_NS) // (2 * Config.STEP_NS)
    start = centre - degree // 2
    rel = t - start * Config.STEP_NS
    keys, inverse = np.unique(rel, return_inverse=True)
    return _Grid(t_ns=t, start=start, keys=keys, inverse=inverse.reshape(-1))


def _check_cycles(cycles: float) -> None:
    # a fractional cycle count breaks the periodic extension at the frame seam
    if not cycles > 0 or cycles != int(cycles):
        raise ValueError(f"cycles must be a positive whole number, got {cycles}")


def _reference_frame(cycles: float) -> np.ndarray:
    return np.sin(2.0 * np.pi * cycles * np.arange(N) / N)


def _true_values(t_ns: np.ndarray, cycles: float) -> np.ndarray:
    return np.sin(2.0 * np.pi * cycles * (t_ns / Config.STEP_NS) / N)


def _max_error_float(degree: int, grid_stride: int, cycles: float) -> float:
    grid = _build_grid(degree, grid_stride)
    y = _reference_frame(cycles)
    table = lagrange_coefficients_float(grid.keys / Config.STEP_NS, degree)
    offsets = np.arange(degree + 1)
    worst = 0.0
    chunk = Config.SWEEP_CHUNK_POINTS
    for lo in range(0, grid.t_ns.size, chunk):
        hi = lo + chunk
        windows = (grid.start[lo:hi, None] + offsets) % N
        approx = np.sum(y[windows] * table[grid.inverse[lo:hi]], axis=1)
        err = np.abs(approx - _true_values(grid.t_ns[lo:hi], cycles))
        worst = max(worst, float(err.max()))
    return worst


def _max_error_fixed(
    degree: int, fmt: FxFormat, grid_stride: int, cycles: float
) -> float:
    grid = _build_grid(degree, grid_stride)
    wm = weights_for_degree(degree, fmt)
    y_raw = [quantize_real(float(v), fmt) for v in _reference_frame(cycles)]

    # relative position in fixed point: floor((t - start * STEP_NS) * 2^f / STEP_NS)
    ell_rows = []
    for key in grid.keys.tolist():
        numerator = key * fmt.scale
        if fmt.rounding is Rounding.NEAREST:
            rel_raw = (2 * numerator + Config.STEP_NS) // (2 * Config.STEP_NS)
        else:
            rel_raw = numerator // Config.STEP_NS
        ell_rows.append(coefficients_raw(rel_raw, wm))

    bits = max(abs(v) for v in y_raw).bit_length() + max(
        abs(v) for row in ell_rows for v in row
    ).bit_length()
    # products must fit int64 before the shift; otherwise fall back to Python ints
    dtype = np.int64 if bits + 1 < 63 else object
    table = np.array(ell_rows, dtype=dtype)
    y_arr = np.array(y_raw, dtype=dtype)
    half = (1 << (fmt.frac_bits - 1)) if fmt.rounding is Rounding.NEAREST and fmt.frac_bits else 0

    offsets = np.arange(degree + 1)
    worst = 0.0
    chunk = Config.SWEEP_CHUNK_POINTS
    for lo in range(0, grid.t_ns.size, chunk):
        hi = lo + chunk
        windows = (grid.start[lo:hi, None] + offsets) % N
        products = (y_arr[windows] * table[grid.inverse[lo:hi]] + half) >> fmt.frac_bits
        acc = products.sum(axis=1)
        approx = acc.astype(np.float64) / fmt.scale
        err = np.abs(approx - _true_values(grid.t_ns[lo:hi], cycles))
        worst = max(worst, float(err.max()))
    return worst


def _select_min(points: Sequence[SweepPoint], threshold: float) -> Optional[int]:
    passing = [p.value for p in points if p.max_abs_error < threshold]
    return min(passing) if passing else None


def _run_sweep(values: Iterable[int], evaluate, workers: int) -> Tuple[SweepPoint, ...]:
    values = list(values)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            errors = list(pool.map(evaluate, values))
    else:
        errors = [evaluate(v) for v in values]
    return tuple(SweepPoint(value=v, max_abs_error=e) for v, e in zip(values, errors))


def sweep_degree(
    threshold: float = Config.ERROR_THRESHOLD,
    grid_stride: int = 1,
    degrees: Iterable[int] = range(Config.DEGREE_SWEEP_RANGE[0], Config.DEGREE_SWEEP_RANGE[1] + 1),
    cycles: float = 1.0,
    workers: int = 1,
) -> SweepReport:
    """Float-reference error against degree on the fine tick grid."""
    _check_cycles(cycles)
    start = time.time()
    logger.info(f"=== Starting degree sweep (stride {grid_stride}, {cycles:g} cycles per frame) ===")
    points = _run_sweep(
        degrees, lambda n: _max_error_float(n, grid_stride, cycles), workers
    )
    for p in points:
        logger.debug(f"degree {p.value}: max error {p.max_abs_error:.3e}")
    report = SweepReport(
        axis=SweepAxis.DEGREE,
        points=points,
        selected_min=_select_min(points, threshold),
        threshold=threshold,
    )
    logger.info(
        f"=== Degree sweep completed in {time.time() - start:.2f}s, "
        f"selected minimum {report.selected_min} ==="
    )
    return report


def sweep_fractions(
    degree: int = Config.DEFAULT_DEGREE,
    threshold: float = Config.ERROR_THRESHOLD,
    grid_stride: int = 1,
    frac_range: Iterable[int] = range(Config.FRAC_SWEEP_RANGE[0], Config.FRAC_SWEEP_RANGE[1] + 1),
    rounding: Rounding = Rounding.FLOOR,
    cycles: float = 1.0,
    workers: int = 1,
) -> SweepReport:
    """Fixed-point error against fraction bits at a fixed degree."""
    _check_cycles(cycles)
    start = time.time()
    logger.info(f"=== Starting fraction-bit sweep (degree {degree}, stride {grid_stride}) ===")
    points = _run_sweep(
        frac_range,
        lambda f: _max_error_fixed(degree, FxFormat(frac_bits=f, rounding=rounding), grid_stride, cycles),
        workers,
    )
    for p in points:
        logger.debug(f"{p.value} fraction bits: max error {p.max_abs_error:.3e}")
    report = SweepReport(
        axis=SweepAxis.FRAC_BITS,
        points=points,
        selected_min=_select_min(points, threshold),
        threshold=threshold,
    )
    logger.info(
        f"=== Fraction-bit sweep completed in {time.time() - start:.2f}s, "
        f"selected minimum {report.selected_min} ==="
    )
    return report


# ---------------------------------------------------------------------------
# Corners


def find_corners(reference: Sequence[float]) -> List[int]:
    """Interior local extrema: strictly above (or below) both neighbours."""
    values = list(reference)
    return [
        k
        for k in range(1, len(values) - 1)
        if (values[k] > values[k - 1] and values[k] > values[k + 1])
        or (values[k] < values[k - 1] and values[k] < values[k + 1])
    ]


def corner_errors(
    corrected: Sequence[float], reference: Sequence[float], corners: Optional[Sequence[int]] = None
) -> CornerReport:
    if len(corrected) != len(reference):
        raise ValueError("corrected and reference frames differ in length")
    if corners is None:
        corners = find_corners(reference)
    errors = tuple(abs(corrected[k] - reference[k]) for k in corners)
    return CornerReport(
        corner_steps=tuple(corners),
        abs_errors=errors,
        max_error=max(errors, default=0.0),
    )


def corner_error_experiment(
    seed: int,
    cfg: InterpolationConfig,
    signal: TlSignalParams = TlSignalParams(),
    delay_dist: DelayDistribution = DelayDistribution(),
    pd: Optional[PdParams] = PdParams(),
) -> CornerReport:
    """
    Delay a frame by a random amount, overlay a PD transient, correct it and compare
    against the undelayed, PD-free frame at its corners.
    """
    delay_ns = draw_delay(delay_dist, seed)
    reference = sample_frame(signal, 0)
    measured = inject_pd(sample_frame(signal, delay_ns), pd)
    corrected = correct_frame(measured, delay_ns // Config.TICK_NS, cfg)
    report = corner_errors(corrected.samples, reference.samples)
    logger.debug(f"seed {seed}: delay {delay_ns} ns, max corner error {report.max_error:.3e}")
    return CornerReport(
        corner_steps=report.corner_steps,
        abs_errors=report.abs_errors,
        max_error=report.max_error,
        delay_ns=delay_ns,
        seed=seed,
    )


@dataclass(frozen=True)
class CornerDistribution:
    reports: Tuple[CornerReport, ...]
    threshold: float

    @property
    def max_errors(self) -> List[float]:
        return [r.max_error for r in self.reports]

    def summary(self) -> Dict[str, float]:
        errors = self.max_errors
        return {
            "runs": len(errors),
            "max": max(errors),
            "median": statistics.median(errors),
            "min": min(errors),
            "over_threshold": sum(e > self.threshold for e in errors),
        }


def corner_error_distribution(
    seeds: Iterable[int],
    cfg: InterpolationConfig,
    threshold: float = Config.ERROR_THRESHOLD,
    **scenario,
) -> CornerDistribution:
    start = time.time()
    reports = tuple(corner_error_experiment(seed, cfg, **scenario) for seed in seeds)
    if not reports:
        raise ValueError("at least one seed is required")
    result = CornerDistribution(reports=reports, threshold=threshold)
    logger.info(
        f"Corner experiment over {len(reports)} seeds completed in {time.time() - start:.2f}s, "
        f"worst error {max(result.max_errors):.3e}"
    )
    return result


# ---------------------------------------------------------------------------
# Resource model


def memory_bits(
    tag_bits: int, degree: int, total_units: int, word_bits: int = Config.CONTAINER_BITS
) -> int:
    """Tag storage for the frame plus one word per arithmetic unit."""
    if tag_bits < 0 or degree < 0 or total_units < 0 or word_bits < 1:
        raise ValueError("memory model inputs must be non-negative")
    return tag_bits * degree + word_bits * total_units


def _report(degree: int, tag_bits: int, word_bits: int, **units: int) -> CostReport:
    total = sum(units.values())
    return CostReport(
        degree=degree,
        tag_bits=tag_bits,
        total_units=total,
        memory_bits=memory_bits(tag_bits, degree, total, word_bits),
        **units,
    )


def cost_model(degree: int, tag_bits: int, word_bits: int = Config.CONTAINER_BITS) -> CostReport:
    """Operator and memory counts of the direct interpolator over all ``degree`` samples."""
    if degree < 2 or tag_bits < 1:
        raise ValueError("degree must be at least 2 and tag_bits positive")
    n = degree
    return _report(
        n,
        tag_bits,
        word_bits,
        subtractors=2 * (n - 1),
        dividers=n * (n - 1),
        adders=n * (n - 1),
        multipliers=2 * n * (n - 1),
    )


def proposed_cost(
    degree: int = Config.DEFAULT_DEGREE,
    tag_bits: int = tag_register_bits(Config.SAMPLES_PER_FRAME - 1),
    word_bits: int = Config.CONTAINER_BITS,
) -> CostReport:
    """
    Counts for the windowed, division-free datapath on step-mapped tags: one adder for
    x + delta, a subtractor and a multiplier per sub-coefficient, a multiplier tree per
    node and a multiply-accumulate per node for the output sum.
    """
    nodes = degree + 1
    return _report(
        nodes,
        tag_bits,
        word_bits,
        subtractors=nodes * degree,
        dividers=0,
        adders=1 + degree,
        multipliers=nodes * degree + nodes * (degree - 1) + nodes,
    )


def resolution_report(fmt: FxFormat, tag_bits: int = tag_register_bits()) -> Dict[str, object]:
    """Arithmetic and timing resolution of a fixed-point format, apart from interpolation error."""
    step_resolution_ns = Config.STEP_NS * fmt.resolution
    return {
        "frac_bits": fmt.frac_bits,
        "value_resolution": fmt.resolution,
        "step_resolution_ns": step_resolution_ns,
        "tag_register_bits": tag_bits,
        "tick_ns": Config.TICK_NS,
        "sub_tick": step_resolution_ns < Config.TICK_NS,
    }
