"""
Fixed-point scalar arithmetic emulating the interpolation datapath.

Values are scaled integers ``raw / 2**frac_bits`` held in a 64-bit two's-complement
container. Multiplication keeps the full-width product (Python integers stand in for the
128-bit intermediate) and drops the low ``frac_bits`` bits. There is no division anywhere
in this module.
"""

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Union

from pydantic import validator

from app.config import Config
from app.models import FrozenModel


class FxOverflowError(ArithmeticError):
    """Result does not fit the 64-bit container."""


class FxFormatMismatchError(ValueError):
    """Operands carry different fixed-point formats."""


class Rounding(str, Enum):
    FLOOR = "floor"
    NEAREST = "nearest"


class FxFormat(FrozenModel):
    frac_bits: int = Config.DEFAULT_FRAC_BITS
    container_bits: int = Config.CONTAINER_BITS
    rounding: Rounding = Rounding.FLOOR

    @validator("frac_bits")
    def _frac_bits_in_range(cls, v):
        if not 0 <= v <= 32:
            raise ValueError(f"frac_bits must be in [0, 32], got {v}")
        return v

    @validator("container_bits")
    def _container_is_64(cls, v):
        if v != Config.CONTAINER_BITS:
            raise ValueError(f"container_bits is fixed at {Config.CONTAINER_BITS}, got {v}")
        return v

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    @property
    def one(self) -> int:
        """Raw encoding of 1.0."""
        return self.scale

    @property
    def min_raw(self) -> int:
        return -(1 << (self.container_bits - 1))

    @property
    def max_raw(self) -> int:
        return (1 << (self.container_bits - 1)) - 1

    @property
    def resolution(self) -> float:
        """Weight of one LSB."""
        return 1.0 / self.scale


Real = Union[int, float]


def check_raw(raw: int, fmt: FxFormat) -> int:
    if raw < fmt.min_raw or raw > fmt.max_raw:
        raise FxOverflowError(
            f"raw value {raw} outside the {fmt.container_bits}-bit container"
        )
    return raw


def quantize_fraction(value: Fraction, fmt: FxFormat) -> int:
    """Quantize an exact rational to a raw integer using the format's rounding."""
    scaled = Fraction(value) * fmt.scale
    if fmt.rounding is Rounding.NEAREST:
        scaled += Fraction(1, 2)
    return check_raw(math.floor(scaled), fmt)


def quantize_real(value: Real, fmt: FxFormat) -> int:
    if isinstance(value, int):
        return check_raw(value << fmt.frac_bits, fmt)
    if not math.isfinite(value):
        raise FxOverflowError(f"cannot represent {value!r} in fixed point")
    # scaling by a power of two is exact in binary floating point
    scaled = math.ldexp(value, fmt.frac_bits)
    try:
        base = math.floor(scaled)
    except OverflowError as exc:
        raise FxOverflowError(f"cannot represent {value!r} in fixed point") from exc
    if fmt.rounding is Rounding.NEAREST and scaled - base >= 0.5:
        base += 1
    return check_raw(base, fmt)


def add_raw(a: int, b: int, fmt: FxFormat) -> int:
    return check_raw(a + b, fmt)


def sub_raw(a: int, b: int, fmt: FxFormat) -> int:
    return check_raw(a - b, fmt)


def mul_raw(a: int, b: int, fmt: FxFormat) -> int:
    product = a * b
    if fmt.rounding is Rounding.NEAREST and fmt.frac_bits > 0:
        product += 1 << (fmt.frac_bits - 1)
    # arithmetic right shift floors toward negative infinity
    return check_raw(product >> fmt.frac_bits, fmt)


def raw_to_real(raw: int, fmt: FxFormat) -> float:
    return raw / fmt.scale


@dataclass(frozen=True)
class Fx:
    raw: int
    fmt: FxFormat

    def __post_init__(self):
        check_raw(self.raw, self.fmt)

    @classmethod
    def from_raw(cls, raw: int, fmt: FxFormat) -> "Fx":
        return cls(raw, fmt)

    def _same_format(self, other: "Fx") -> FxFormat:
        if not isinstance(other, Fx):
            raise TypeError(f"expected Fx operand, got {type(other).__name__}")
        if other.fmt != self.fmt:
            raise FxFormatMismatchError(
                f"format mismatch: {self.fmt.frac_bits} vs {other.fmt.frac_bits} fraction bits"
            )
        return self.fmt

    def __add__(self, other: "Fx") -> "Fx":
        return fx_add(self, other)

    def __sub__(self, other: "Fx") -> "Fx":
        return fx_sub(self, other)

    def __mul__(self, other: "Fx") -> "Fx":
        return fx_mul(self, other)

    def __neg__(self) -> "Fx":
        return Fx(check_raw(-self.raw, self.fmt), self.fmt)

    def __float__(self) -> float:
        return fx_to_real(self)

    def __repr__(self) -> str:
        return f"Fx({self.raw} / 2^{self.fmt.frac_bits} = {fx_to_real(self)!r})"


def fx_from_real(v: Real, fmt: FxFormat) -> Fx:
    return Fx(quantize_real(v, fmt), fmt)


def fx_from_fraction(v: Fraction, fmt: FxFormat) -> Fx:
    return Fx(quantize_fraction(v, fmt), fmt)


def fx_add(a: Fx, b: Fx) -> Fx:
    fmt = a._same_format(b)
    return Fx(add_raw(a.raw, b.raw, fmt), fmt)


def fx_sub(a: Fx, b: Fx) -> Fx:
    fmt = a._same_format(b)
    return Fx(sub_raw(a.raw, b.raw, fmt), fmt)


def fx_mul(a: Fx, b: Fx) -> Fx:
    fmt = a._same_format(b)
    return Fx(mul_raw(a.raw, b.raw, fmt), fmt)


def fx_to_real(a: Fx) -> float:
    return raw_to_real(a.raw, a.fmt)
