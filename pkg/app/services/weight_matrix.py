"""
Time-tag mapping and the precomputed weight matrix W[i][m] = 1 / (x_i - x_m).

The weights are the only place a division is ever evaluated, and it happens once,
exactly, before quantization. Step positions are exact rationals so that the datapath
sees the same tag whatever the caller's float rounding would have been.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Iterator, Optional, Sequence, Tuple, Union

from app.config import Config
from app.services.fixed_point import Fx, FxFormat, quantize_fraction, raw_to_real

logger = logging.getLogger(__name__)


class DuplicateNodeError(ValueError):
    """Two interpolation nodes share a step position."""


class StepRangeError(ValueError):
    """Time tag or delay outside the one-period range."""


StepLike = Union["StepTime", Fraction, int]


@dataclass(frozen=True, order=True)
class StepTime:
    """A position on the step grid; the integer part is a sample index."""

    steps: Fraction

    def __post_init__(self):
        object.__setattr__(self, "steps", Fraction(self.steps))
        if self.steps < 0:
            raise StepRangeError(f"step position must be non-negative, got {self.steps}")

    @classmethod
    def of(cls, value: StepLike) -> "StepTime":
        if isinstance(value, StepTime):
            return value
        return cls(Fraction(value))

    @property
    def index(self) -> int:
        return self.steps.numerator // self.steps.denominator

    @property
    def offset(self) -> Fraction:
        return self.steps - self.index

    def __add__(self, other: StepLike) -> "StepTime":
        return StepTime(self.steps + StepTime.of(other).steps)

    def __float__(self) -> float:
        return float(self.steps)


def map_time_tag(t_ns: int) -> StepTime:
    if not 0 <= t_ns <= Config.PERIOD_NS:
        raise StepRangeError(f"time tag {t_ns} ns outside [0, {Config.PERIOD_NS}]")
    return StepTime(Fraction(t_ns, Config.STEP_NS))


def delay_ticks_to_steps(ticks: int, tick_ns: int = Config.TICK_NS) -> StepTime:
    period_ticks = Config.PERIOD_NS // tick_ns
    if not 0 <= ticks < period_ticks:
        raise StepRangeError(f"delay of {ticks} ticks outside [0, {period_ticks})")
    return StepTime(Fraction(ticks * tick_ns, Config.STEP_NS))


def tag_register_bits(max_value: int = Config.TICKS_PER_PERIOD) -> int:
    """Width of an unsigned register able to hold ``max_value``."""
    return max(1, int(max_value).bit_length())


@dataclass(frozen=True)
class WeightMatrix:
    nodes: Tuple[int, ...]
    raw: Tuple[Tuple[Optional[int], ...], ...]
    fmt: FxFormat
    # per relative position memo of quantized coefficient sets, filled by the interpolator
    coefficient_cache: Dict[int, Tuple[int, ...]] = field(
        default_factory=dict, compare=False, hash=False, repr=False
    )

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def unit_spaced(self) -> bool:
        return all(b - a == 1 for a, b in zip(self.nodes, self.nodes[1:]))

    def w(self, i: int, m: int) -> Fx:
        value = self.raw[i][m]
        if value is None:
            raise ValueError(f"W[{i}][{i}] is undefined")
        return Fx.from_raw(value, self.fmt)

    def real(self, i: int, m: int) -> Fraction:
        if i == m:
            raise ValueError(f"W[{i}][{i}] is undefined")
        return Fraction(1, self.nodes[i] - self.nodes[m])

    def dump_rows(self) -> Iterator[Tuple[int, int, int, float]]:
        for i, row in enumerate(self.raw):
            for m, value in enumerate(row):
                if value is not None:
                    yield i, m, value, raw_to_real(value, self.fmt)


def build_weights(nodes: Sequence[int], fmt: FxFormat) -> WeightMatrix:
    nodes = tuple(int(x) for x in nodes)
    if len(nodes) < 2:
        raise ValueError("at least two nodes are required")
    if len(set(nodes)) != len(nodes):
        raise DuplicateNodeError(f"duplicate interpolation node in {nodes}")
    if any(b <= a for a, b in zip(nodes, nodes[1:])):
        raise ValueError(f"nodes must be strictly increasing: {nodes}")

    raw = tuple(
        tuple(
            None if i == m else quantize_fraction(Fraction(1, xi - xm), fmt)
            for m, xm in enumerate(nodes)
        )
        for i, xi in enumerate(nodes)
    )
    logger.debug(f"Built {len(nodes)}x{len(nodes)} weight matrix at {fmt.frac_bits} fraction bits")
    return WeightMatrix(nodes=nodes, raw=raw, fmt=fmt)


@lru_cache(maxsize=128)
def weights_for_degree(degree: int, fmt: FxFormat) -> WeightMatrix:
    """Shared matrix over nodes 0..degree; valid for any unit-spaced window."""
    return build_weights(range(degree + 1), fmt)
