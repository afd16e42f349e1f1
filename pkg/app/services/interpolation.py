"""
Windowed Lagrange interpolation and whole-frame delay correction.

Two arithmetic modes share the window logic:

* ``float_reference`` evaluates the textbook product formula in binary64 and is the
  ground truth for every error measurement.
* ``fixed_point`` runs the division-free datapath: one adder builds ``x + delta``,
  a subtractor and a multiplier turn each node into a sub-coefficient
  ``Z = ((x + delta) - x_m) * W[i][m]``, and a balanced binary tree of multipliers
  folds the ``n`` sub-coefficients of each node into its Lagrange coefficient.

Coefficient sets depend only on where the evaluation point sits inside its window, so
the fixed-point path memoises them per quantized relative position on the weight matrix.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import validator

from app.config import Config
from app.models import FrozenModel
from app.services.fixed_point import (
    Fx,
    FxFormat,
    add_raw,
    fx_add,
    fx_from_fraction,
    fx_from_real,
    fx_mul,
    fx_sub,
    mul_raw,
    quantize_fraction,
    quantize_real,
    raw_to_real,
    sub_raw,
)
from app.services.signal_model import MeasuredFrame, TlSignalParams, sample_frame
from app.services.weight_matrix import (
    StepLike,
    StepTime,
    WeightMatrix,
    delay_ticks_to_steps,
    weights_for_degree,
)

logger = logging.getLogger(__name__)

N = Config.SAMPLES_PER_FRAME


class Arithmetic(str, Enum):
    FLOAT_REFERENCE = "float_reference"
    FIXED_POINT = "fixed_point"


class BoundaryPolicy(str, Enum):
    WRAP_PERIODIC = "wrap_periodic"
    HOLD_NEXT_FRAME = "hold_next_frame"


class InterpolationConfig(FrozenModel):
    degree: int = Config.DEFAULT_DEGREE
    fmt: FxFormat = FxFormat()
    arithmetic: Arithmetic = Arithmetic.FIXED_POINT
    boundary_policy: BoundaryPolicy = BoundaryPolicy.WRAP_PERIODIC

    @validator("degree")
    def _degree_fits_frame(cls, v):
        if not 2 <= v <= N - 1:
            raise ValueError(f"degree must be in [2, {N - 1}], got {v}")
        return v


@dataclass(frozen=True)
class CoefficientSet:
    window: Tuple[int, ...]
    ell: Tuple[Union[float, Fx], ...]


@dataclass(frozen=True)
class CorrectedFrame:
    samples: Tuple[float, ...]
    source_delay_ticks: int
    config: InterpolationConfig
    boundary_flags: Tuple[bool, ...]
    raw_samples: Optional[Tuple[int, ...]] = None

    def values(self) -> np.ndarray:
        return np.asarray(self.samples, dtype=np.float64)


def select_window(x: StepLike, degree: int, periodic: bool = False) -> Tuple[int, ...]:
    """
    Pick the degree + 1 consecutive node indices centred on ``x``.

    Without ``periodic`` the window is clamped into the frame; with it the window is
    left centred and indices may fall outside 0..255 (callers wrap them).
    """
    pos = StepTime.of(x).steps
    start = math.floor(pos + Fraction(1, 2)) - degree // 2
    if not periodic:
        start = min(max(start, 0), N - (degree + 1))
    return tuple(range(start, start + degree + 1))


def _plan_window(pos: Fraction, cfg: InterpolationConfig, has_next: bool) -> Tuple[int, ...]:
    n = cfg.degree
    if cfg.boundary_policy is BoundaryPolicy.WRAP_PERIODIC:
        return select_window(pos, n, periodic=True)
    if not has_next:
        # past the last sample there is nothing to hold, so the frame repeats
        return select_window(pos, n, periodic=pos > N - 1)
    start = math.floor(pos + Fraction(1, 2)) - n // 2
    start = min(max(start, 0), 2 * N - (n + 1))
    return tuple(range(start, start + n + 1))


def _window_values(
    frame: Sequence[float],
    window: Sequence[int],
    cfg: InterpolationConfig,
    next_frame: Optional[Sequence[float]],
) -> List[float]:
    if cfg.boundary_policy is BoundaryPolicy.WRAP_PERIODIC or next_frame is None:
        return [frame[i % N] for i in window]
    return [frame[i] if i < N else next_frame[i - N] for i in window]


def lagrange_coefficients_float(r, degree: int) -> np.ndarray:
    """
    Lagrange basis values at relative position(s) ``r`` for nodes 0..degree.

    ``r`` may be a scalar or an array; the result gains a trailing axis of length
    degree + 1. Factors are multiplied in node order so scalar and vector calls agree.
    """
    r = np.asarray(r, dtype=np.float64)[..., None]
    nodes = np.arange(degree + 1, dtype=np.float64)
    ell = np.ones(r.shape[:-1] + (degree + 1,), dtype=np.float64)
    for m in range(degree + 1):
        denom = nodes - m
        denom[m] = 1.0
        factor = (r - m) / denom
        factor[..., m] = 1.0
        ell *= factor
    return ell


def tree_product_raw(values: Sequence[int], fmt: FxFormat) -> int:
    """Balanced binary product, pairing neighbours left to right on every layer."""
    layer = list(values)
    if not layer:
        return fmt.scale
    while len(layer) > 1:
        paired = [mul_raw(a, b, fmt) for a, b in zip(layer[0::2], layer[1::2])]
        if len(layer) % 2:
            paired.append(layer[-1])
        layer = paired
    return layer[0]


def sub_coefficient(x: StepLike, delta_steps: StepLike, x_m: int, w_im: Fx) -> Fx:
    fmt = w_im.fmt
    position = fx_add(
        fx_from_fraction(StepTime.of(x).steps, fmt),
        fx_from_fraction(StepTime.of(delta_steps).steps, fmt),
    )
    return fx_mul(fx_sub(position, fx_from_real(int(x_m), fmt)), w_im)


def coefficient(x: StepLike, delta: StepLike, i: int, wm: WeightMatrix) -> Fx:
    """Lagrange coefficient of node ``i`` of ``wm`` at ``x + delta``, division free."""
    if not 0 <= i < wm.size:
        raise IndexError(f"node {i} outside window of {wm.size}")
    subs = [
        sub_coefficient(x, delta, x_m, wm.w(i, m)).raw
        for m, x_m in enumerate(wm.nodes)
        if m != i
    ]
    return Fx.from_raw(tree_product_raw(subs, wm.fmt), wm.fmt)


def coefficients_raw(rel_raw: int, wm: WeightMatrix) -> Tuple[int, ...]:
    cached = wm.coefficient_cache.get(rel_raw)
    if cached is not None:
        return cached
    fmt = wm.fmt
    one = fmt.scale
    diffs = [sub_raw(rel_raw, m * one, fmt) for m in range(wm.size)]
    ell = tuple(
        tree_product_raw(
            [mul_raw(diffs[m], wm.raw[i][m], fmt) for m in range(wm.size) if m != i], fmt
        )
        for i in range(wm.size)
    )
    wm.coefficient_cache[rel_raw] = ell
    return ell


def _check_weights(cfg: InterpolationConfig, wm: Optional[WeightMatrix]) -> WeightMatrix:
    if wm is None:
        return weights_for_degree(cfg.degree, cfg.fmt)
    if wm.fmt != cfg.fmt:
        raise ValueError("weight matrix format differs from the interpolation format")
    if wm.size != cfg.degree + 1 or not wm.unit_spaced:
        raise ValueError(f"weight matrix must cover {cfg.degree + 1} unit-spaced nodes")
    return wm


def coefficient_set(
    x: StepLike,
    cfg: InterpolationConfig,
    wm: Optional[WeightMatrix] = None,
    *,
    delta: StepLike = 0,
    has_next_frame: bool = False,
) -> CoefficientSet:
    pos = StepTime.of(x).steps + StepTime.of(delta).steps
    window = _plan_window(pos, cfg, has_next_frame)
    if cfg.arithmetic is Arithmetic.FLOAT_REFERENCE:
        ell = lagrange_coefficients_float(float(pos - window[0]), cfg.degree)
        return CoefficientSet(window=window, ell=tuple(float(v) for v in ell))
    wm = _check_weights(cfg, wm)
    fmt = cfg.fmt
    position = add_raw(
        quantize_fraction(StepTime.of(x).steps, fmt),
        quantize_fraction(StepTime.of(delta).steps, fmt),
        fmt,
    )
    rel_raw = position - window[0] * fmt.scale
    ell = coefficients_raw(rel_raw, wm)
    return CoefficientSet(window=window, ell=tuple(Fx.from_raw(v, fmt) for v in ell))


def _evaluate(
    samples: Sequence[float],
    quantized: Optional[Sequence[int]],
    x: StepLike,
    delta: StepLike,
    cfg: InterpolationConfig,
    wm: Optional[WeightMatrix],
    next_samples: Optional[Sequence[float]],
    next_quantized: Optional[Sequence[int]],
) -> Tuple[float, Optional[int], bool]:
    coeffs = coefficient_set(x, cfg, wm, delta=delta, has_next_frame=next_samples is not None)
    window = coeffs.window
    pos = StepTime.of(x).steps + StepTime.of(delta).steps
    flagged = pos > N - 1 or window[0] < 0 or window[-1] > N - 1

    if cfg.arithmetic is Arithmetic.FLOAT_REFERENCE:
        values = _window_values(samples, window, cfg, next_samples)
        return sum(y * ell for y, ell in zip(values, coeffs.ell)), None, flagged

    fmt = cfg.fmt
    values = _window_values(quantized, window, cfg, next_quantized)
    acc = 0
    for y, ell in zip(values, coeffs.ell):
        acc = add_raw(acc, mul_raw(y, ell.raw, fmt), fmt)
    return raw_to_real(acc, fmt), acc, flagged


def _quantize_samples(samples: Sequence[float], fmt: FxFormat) -> Tuple[int, ...]:
    return tuple(quantize_real(float(v), fmt) for v in samples)


def interpolate(
    frame: MeasuredFrame,
    x: StepLike,
    cfg: InterpolationConfig,
    wm: Optional[WeightMatrix] = None,
    *,
    delta: StepLike = 0,
    next_frame: Optional[MeasuredFrame] = None,
) -> float:
    """Evaluate the interpolant of ``frame`` at ``x + delta`` (in steps)."""
    pos = StepTime.of(x).steps + StepTime.of(delta).steps
    if pos > 2 * N - 1:
        raise ValueError(f"position {float(pos)} lies beyond the following frame")
    next_samples = next_frame.samples if next_frame is not None else None
    quantized = next_quantized = None
    if cfg.arithmetic is Arithmetic.FIXED_POINT:
        quantized = _quantize_samples(frame.samples, cfg.fmt)
        if next_frame is not None:
            next_quantized = _quantize_samples(next_frame.samples, cfg.fmt)
    value, _, _ = _evaluate(
        frame.samples, quantized, x, delta, cfg, wm, next_samples, next_quantized
    )
    return value


def correct_frame(
    frame: MeasuredFrame,
    delay_ticks: int,
    cfg: InterpolationConfig,
    wm: Optional[WeightMatrix] = None,
    *,
    next_frame: Optional[MeasuredFrame] = None,
    workers: int = 1,
    delta_steps: Optional[StepLike] = None,
) -> CorrectedFrame:
    """
    Resample ``frame`` onto the nominal grid: sample k is evaluated at k + delay.

    ``delta_steps`` overrides the tick-derived shift and is meant for tests that need
    shifts not representable as a whole number of ticks.
    """
    if cfg.arithmetic is Arithmetic.FIXED_POINT:
        wm = _check_weights(cfg, wm)
    delta = StepTime.of(delta_steps) if delta_steps is not None else delay_ticks_to_steps(delay_ticks)

    next_samples = next_frame.samples if next_frame is not None else None
    if cfg.boundary_policy is BoundaryPolicy.WRAP_PERIODIC:
        next_samples = None
    quantized = next_quantized = None
    if cfg.arithmetic is Arithmetic.FIXED_POINT:
        quantized = _quantize_samples(frame.samples, cfg.fmt)
        if next_samples is not None:
            next_quantized = _quantize_samples(next_samples, cfg.fmt)

    def evaluate_at(k: int):
        return _evaluate(
            frame.samples, quantized, k, delta, cfg, wm, next_samples, next_quantized
        )

    start = time.time()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(evaluate_at, range(N)))
    else:
        results = [evaluate_at(k) for k in range(N)]

    flags = tuple(flagged for _, _, flagged in results)
    logger.debug(
        f"Corrected frame (delay {delay_ticks} ticks, {cfg.arithmetic.value}, degree {cfg.degree}) "
        f"in {time.time() - start:.3f}s, {sum(flags)} boundary samples"
    )
    raws = None
    if cfg.arithmetic is Arithmetic.FIXED_POINT:
        raws = tuple(raw for _, raw, _ in results)
    return CorrectedFrame(
        samples=tuple(value for value, _, _ in results),
        source_delay_ticks=int(delay_ticks),
        config=cfg,
        boundary_flags=flags,
        raw_samples=raws,
    )


def benchmark_throughput(
    cfg: InterpolationConfig,
    n_frames: int = 1000,
    delay_ticks: int = 1234,
    workers: int = 1,
) -> dict:
    """Correct ``n_frames`` copies of a delayed sine frame and report the rate."""
    frame = sample_frame(TlSignalParams(), delay_ticks * Config.TICK_NS)
    wm = weights_for_degree(cfg.degree, cfg.fmt) if cfg.arithmetic is Arithmetic.FIXED_POINT else None
    logger.info(f"Benchmarking {n_frames} frames ({cfg.arithmetic.value}, degree {cfg.degree})")
    start = time.time()
    for _ in range(n_frames):
        correct_frame(frame, delay_ticks, cfg, wm, workers=workers)
    elapsed = time.time() - start
    logger.info(f"Benchmark completed in {elapsed:.2f}s")
    return {
        "frames": n_frames,
        "seconds": elapsed,
        "frames_per_second": n_frames / elapsed if elapsed > 0 else float("inf"),
    }
