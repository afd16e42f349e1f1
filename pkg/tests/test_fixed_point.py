import random
from fractions import Fraction

import pytest
from pydantic import ValidationError

from app.services.fixed_point import (
    Fx,
    FxFormat,
    FxFormatMismatchError,
    FxOverflowError,
    Rounding,
    fx_add,
    fx_from_fraction,
    fx_from_real,
    fx_mul,
    fx_sub,
    fx_to_real,
    mul_raw,
)


@pytest.fixture
def q12():
    return FxFormat(frac_bits=12)


class TestFxFormat:

    def test_defaults(self):
        """Test the default 12-bit floor format."""
        fmt = FxFormat()
        assert fmt.frac_bits == 12
        assert fmt.container_bits == 64
        assert fmt.rounding is Rounding.FLOOR
        assert fmt.one == 4096

    @pytest.mark.parametrize("bits", [-1, 33])
    def test_rejects_frac_bits_out_of_range(self, bits):
        """Test that fraction bits outside 0..32 are rejected."""
        with pytest.raises(ValidationError, match="frac_bits"):
            FxFormat(frac_bits=bits)

    def test_container_is_fixed_at_64_bits(self):
        with pytest.raises(ValidationError):
            FxFormat(container_bits=32)

    def test_is_immutable_and_hashable(self, q12):
        """Test that formats are frozen and usable as keys."""
        with pytest.raises(TypeError):
            q12.frac_bits = 13
        assert {q12: 1}[FxFormat(frac_bits=12)] == 1

    def test_resolution_matches_one_lsb(self, q12):
        assert q12.resolution == 0.000244140625


class TestConversion:

    @pytest.mark.parametrize("value, raw", [(1.0, 4096), (0.0, 0), (0.1, 409), (-0.1, -410)])
    def test_from_real_floors(self, q12, value, raw):
        """Test floor quantization of reals."""
        assert fx_from_real(value, q12).raw == raw

    def test_from_real_nearest(self):
        """Test nearest quantization, ties rounding up."""
        fmt = FxFormat(frac_bits=12, rounding=Rounding.NEAREST)
        assert fx_from_real(0.1, fmt).raw == 410
        assert fx_from_real(-0.1, fmt).raw == -410
        # ties go toward +infinity
        assert fx_from_real(0.5 / 4096, fmt).raw == 1
        assert fx_from_real(-0.5 / 4096, fmt).raw == 0

    def test_from_fraction_is_exact(self, q12):
        """Test quantization of exact rationals."""
        assert fx_from_fraction(Fraction(1, 3), q12).raw == 1365
        assert fx_from_fraction(Fraction(-1, 3), q12).raw == -1366

    @pytest.mark.parametrize("raw, expected", [(4096, 1.0), (1, 0.000244140625), (-2048, -0.5)])
    def test_to_real(self, q12, raw, expected):
        assert fx_to_real(Fx.from_raw(raw, q12)) == expected

    def test_round_trip_within_one_lsb_below(self, q12):
        """Test that quantizing never lands above the real value or more than one LSB below."""
        rng = random.Random(3)
        for _ in range(500):
            v = rng.uniform(-1000.0, 1000.0)
            back = fx_to_real(fx_from_real(v, q12))
            assert v - 2 ** -12 < back <= v

    def test_overflow_is_detected(self, q12):
        """Test that values beyond the 64-bit container raise."""
        with pytest.raises(FxOverflowError):
            fx_from_real(2.0 ** 52, q12)
        with pytest.raises(FxOverflowError):
            fx_from_real(float("nan"), q12)
        with pytest.raises(FxOverflowError):
            Fx.from_raw(2 ** 63, q12)


class TestArithmetic:

    def test_add_and_sub(self, q12):
        one = fx_from_real(1.0, q12)
        assert fx_add(one, one).raw == 8192
        assert fx_sub(one, one).raw == 0
        assert (one + one - one) == one

    def test_mul_examples(self, q12):
        """Test multiplication against hand-computed products."""
        one = fx_from_real(1.0, q12)
        x = fx_from_real(0.7, q12)
        tenth = fx_from_real(0.1, q12)
        assert fx_mul(one, x) == x
        assert fx_mul(Fx.from_raw(0, q12), x).raw == 0
        assert fx_mul(tenth, tenth).raw == 40
        assert fx_to_real(fx_mul(tenth, tenth)) == 0.009765625

    def test_mul_floors_negative_products(self, q12):
        """Test that negative products floor toward minus infinity."""
        # -409 * 409 / 4096 = -40.84 -> -41
        assert mul_raw(-409, 409, q12) == -41

    def test_mul_within_one_lsb_of_rational_product(self, q12):
        """Test products against the exact rational result."""
        rng = random.Random(11)
        for _ in range(500):
            a, b = rng.randint(-10 ** 6, 10 ** 6), rng.randint(-10 ** 6, 10 ** 6)
            exact = Fraction(a * b, 4096 * 4096)
            got = Fraction(fx_mul(Fx(a, q12), Fx(b, q12)).raw, 4096)
            assert 0 <= exact - got < Fraction(1, 4096)

    def test_add_sub_match_integer_oracle(self, q12):
        rng = random.Random(5)
        for _ in range(200):
            a, b, c = (rng.randint(-2 ** 40, 2 ** 40) for _ in range(3))
            fa, fb, fc = Fx(a, q12), Fx(b, q12), Fx(c, q12)
            assert ((fa + fb) + fc).raw == (fa + (fb + fc)).raw == a + b + c
            assert (fa - fb - fc).raw == a - b - c

    def test_container_overflow_never_wraps(self, q12):
        """Test that results past the container raise instead of wrapping."""
        big = Fx.from_raw(2 ** 62, q12)
        with pytest.raises(FxOverflowError):
            fx_add(big, big)
        with pytest.raises(FxOverflowError):
            fx_sub(-big - big, Fx.from_raw(1, q12))
        with pytest.raises(FxOverflowError):
            fx_mul(big, big)

    def test_mismatched_formats_are_rejected(self, q12):
        """Test that operands of different formats cannot be combined."""
        a = fx_from_real(1.0, q12)
        b = fx_from_real(1.0, FxFormat(frac_bits=16))
        with pytest.raises(FxFormatMismatchError):
            fx_add(a, b)
        with pytest.raises(FxFormatMismatchError):
            fx_mul(a, b)
