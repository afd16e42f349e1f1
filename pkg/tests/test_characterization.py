import numpy as np
import pytest

from app.services.characterization import (
    CornerReport,
    SweepAxis,
    corner_error_distribution,
    corner_error_experiment,
    corner_errors,
    cost_model,
    find_corners,
    memory_bits,
    proposed_cost,
    resolution_report,
    sweep_degree,
    sweep_fractions,
)
from app.services.fixed_point import FxFormat, Rounding
from app.services.interpolation import Arithmetic, InterpolationConfig, benchmark_throughput
from app.services.signal_model import (
    DelayDistribution,
    PdParams,
    TlSignalParams,
    inject_pd,
    sample_frame,
)
from app.services.weight_matrix import tag_register_bits

STRIDE = 1000
LSB12 = 2.0 ** -12


@pytest.fixture
def float_cfg():
    return InterpolationConfig(arithmetic=Arithmetic.FLOAT_REFERENCE)


@pytest.fixture
def no_delay():
    return DelayDistribution(mean_ns=0, sigma_ns=0)


@pytest.fixture
def late_delay():
    # about 3.64 steps, so the default PD burst sits at the far edge of the corner's window
    return DelayDistribution(mean_ns=284_380, sigma_ns=0)


class TestFindCorners:

    def test_cosine_has_one_interior_corner(self):
        """Test that the default cosine frame has its only interior extremum at step 128."""
        assert find_corners(sample_frame(TlSignalParams(), 0).samples) == [128]

    def test_ramp_has_none(self):
        assert find_corners([k * 0.01 for k in range(256)]) == []

    def test_plateaus_are_not_corners(self):
        """Test that only strict local extrema count."""
        assert find_corners([0.0, 1.0, 1.0, 0.0]) == []
        assert find_corners([0.0, 1.0, 0.0, -1.0, 0.0]) == [1, 3]

    def test_pd_adds_corners(self):
        """Test that the PD oscillation adds extrema next to the cosine minimum."""
        disturbed = inject_pd(sample_frame(TlSignalParams(), 0), PdParams())
        corners = find_corners(disturbed.samples)
        assert 128 in corners
        assert len(corners) > 1
        values = disturbed.samples
        for k in corners:
            assert (values[k] - values[k - 1]) * (values[k] - values[k + 1]) > 0

    def test_corner_errors(self):
        reference = [0.0, 1.0, 0.0, -1.0, 0.0]
        corrected = [0.0, 0.9, 0.0, -1.05, 0.0]
        report = corner_errors(corrected, reference)
        assert report.corner_steps == (1, 3)
        assert report.abs_errors == pytest.approx((0.1, 0.05))
        assert report.max_error == pytest.approx(0.1)
        assert report.to_rows()[0] == (1, report.abs_errors[0])

    def test_corner_errors_length_mismatch(self):
        with pytest.raises(ValueError):
            corner_errors([0.0] * 4, [0.0] * 5)


class TestSweeps:

    def test_degree_sweep_smooth_signal(self):
        """Test that one cycle per frame is resolved already at degree 3."""
        report = sweep_degree(grid_stride=STRIDE, degrees=range(3, 9))
        assert report.axis is SweepAxis.DEGREE
        assert [p.value for p in report.points] == list(range(3, 9))
        assert all(p.max_abs_error < 1e-3 for p in report.points)
        assert report.selected_min == 3

    def test_degree_sweep_fast_signal_has_a_knee(self):
        """Test that 57 cycles per frame push the selected degree into the swept range."""
        report = sweep_degree(grid_stride=STRIDE, degrees=range(3, 17), cycles=57)
        assert report.error_at(3) >= 1e-3
        assert report.error_at(16) < 1e-3
        assert 3 < report.selected_min <= 16

    def test_degree_sweep_workers_agree(self):
        serial = sweep_degree(grid_stride=STRIDE, degrees=range(4, 8), cycles=57)
        parallel = sweep_degree(grid_stride=STRIDE, degrees=range(4, 8), cycles=57, workers=3)
        assert serial == parallel

    def test_nothing_passing_selects_none(self):
        report = sweep_degree(threshold=1e-30, grid_stride=STRIDE * 10, degrees=[3], cycles=57)
        assert report.selected_min is None

    def test_fraction_sweep(self):
        """Test that more fraction bits shrink the fixed-point error."""
        report = sweep_fractions(grid_stride=STRIDE, frac_range=[0, 12, 24])
        assert report.axis is SweepAxis.FRAC_BITS
        assert report.error_at(0) >= 1e-3
        assert report.error_at(24) < 1e-4
        assert report.error_at(24) < report.error_at(12) / 8
        assert report.selected_min in (12, 24)
        assert report.to_rows()[1] == (12, report.error_at(12))

    @pytest.mark.parametrize("cycles", [1.5, 0.5, 0, -2])
    def test_sweeps_reject_non_whole_cycles(self, cycles):
        """Test that the reference signal must close on itself at the frame seam."""
        with pytest.raises(ValueError, match="cycles"):
            sweep_degree(grid_stride=STRIDE * 10, degrees=[3], cycles=cycles)
        with pytest.raises(ValueError, match="cycles"):
            sweep_fractions(grid_stride=STRIDE * 10, frac_range=[12], cycles=cycles)

    def test_whole_cycles_given_as_float_are_accepted(self):
        report = sweep_degree(grid_stride=STRIDE * 10, degrees=[3], cycles=2.0)
        assert report.points[0].value == 3

    def test_error_at_unknown_value(self):
        report = sweep_degree(grid_stride=STRIDE * 10, degrees=[3])
        with pytest.raises(KeyError):
            report.error_at(4)

    def test_bad_stride(self):
        with pytest.raises(ValueError):
            sweep_degree(grid_stride=0, degrees=[3])


class TestCornerExperiment:

    def test_zero_delay_fixed_point_is_within_quantization(self, no_delay):
        """Test that an undelayed frame only carries the node skew of the 12-bit chain."""
        report = corner_error_experiment(0, InterpolationConfig(), delay_dist=no_delay, pd=None)
        assert report.corner_steps == (128,)
        assert report.delay_ns == 0
        assert report.max_error < 18 * LSB12

    def test_float_reference_is_near_exact(self, float_cfg):
        report = corner_error_experiment(3, float_cfg, pd=None)
        assert report.seed == 3
        assert report.delay_ns % 10 == 0
        assert report.max_error < 1e-9

    def test_fixed_point_is_worse_than_float(self, float_cfg, no_delay):
        fixed = corner_error_experiment(0, InterpolationConfig(), delay_dist=no_delay, pd=None)
        exact = corner_error_experiment(0, float_cfg, delay_dist=no_delay, pd=None)
        assert exact.max_error < fixed.max_error

    def test_pd_is_reproducible(self, float_cfg):
        """Test that the same seed gives the same report with the PD overlay."""
        a = corner_error_experiment(11, float_cfg)
        b = corner_error_experiment(11, float_cfg)
        assert a == b
        assert isinstance(a, CornerReport)
        assert 128 in a.corner_steps

    def test_pd_inside_the_corner_window_changes_the_error(self, float_cfg, late_delay):
        """Test that a burst right after the corner leaks into its correction but stays small."""
        clean = corner_error_experiment(0, float_cfg, delay_dist=late_delay, pd=None)
        disturbed = corner_error_experiment(0, float_cfg, delay_dist=late_delay)
        assert clean.corner_steps == disturbed.corner_steps == (128,)
        assert clean.max_error < 1e-8
        assert 1e-6 < disturbed.max_error < 1e-3

    def test_pd_outside_the_corner_window_has_no_effect(self, float_cfg, no_delay):
        clean = corner_error_experiment(0, float_cfg, delay_dist=no_delay, pd=None)
        disturbed = corner_error_experiment(0, float_cfg, delay_dist=no_delay)
        assert clean.abs_errors == disturbed.abs_errors

    def test_distribution_summary(self, float_cfg):
        """Test the summary keys of a five-seed float distribution."""
        dist = corner_error_distribution(range(5), float_cfg, pd=None)
        summary = dist.summary()
        assert summary["runs"] == 5
        assert summary["over_threshold"] == 0
        assert summary["min"] <= summary["median"] <= summary["max"]
        assert [r.seed for r in dist.reports] == list(range(5))

    def test_distribution_needs_seeds(self, float_cfg):
        with pytest.raises(ValueError):
            corner_error_distribution([], float_cfg)


class TestCostModel:

    def test_direct_interpolator_counts(self):
        """Test unit counts and memory of the direct interpolator at n = 256, m = 25."""
        report = cost_model(256, 25)
        assert report.subtractors == 510
        assert report.dividers == 65280
        assert report.adders == 65280
        assert report.multipliers == 130560
        assert report.total_units == 261630
        assert report.memory_bits == 16_750_720

    def test_memory_bits(self):
        assert memory_bits(25, 256, 0) == 6400
        assert memory_bits(8, 17, 1, word_bits=32) == 168

    @pytest.mark.parametrize("degree, tag_bits", [(1, 25), (256, 0)])
    def test_rejects_degenerate_inputs(self, degree, tag_bits):
        with pytest.raises(ValueError):
            cost_model(degree, tag_bits)

    def test_proposed_datapath_is_far_smaller(self):
        """Test that the windowed datapath needs no dividers and a fraction of the units."""
        proposed = proposed_cost()
        assert proposed.dividers == 0
        assert proposed.tag_bits == 8
        assert proposed.total_units == 833
        assert proposed.memory_bits == 8 * 17 + 64 * 833
        assert proposed.total_units < cost_model(256, 25).total_units / 100
        assert proposed.as_dict()["multipliers"] == 544

    def test_resolution_report(self):
        """Test that 24 fraction bits resolve positions finer than one clock tick."""
        coarse = resolution_report(FxFormat(frac_bits=12))
        fine = resolution_report(FxFormat(frac_bits=24))
        assert coarse["value_resolution"] == 2.0 ** -12
        assert coarse["step_resolution_ns"] == pytest.approx(19.073486328125)
        assert not coarse["sub_tick"]
        assert fine["sub_tick"]
        assert coarse["tag_register_bits"] == tag_register_bits()


@pytest.mark.acceptance
class TestFullGrid:

    def test_degree_sweep_full_grid(self):
        """Test the full 2,000,000-point degree sweep on one cycle per frame."""
        report = sweep_degree(workers=4)
        assert len(report.points) == 22
        assert report.error_at(16) < 1e-3
        assert report.selected_min == 3

    def test_degree_sweep_full_grid_fast_signal(self):
        """Test that 57 cycles per frame select degree 12 on the full grid."""
        report = sweep_degree(cycles=57, workers=4)
        assert report.error_at(3) >= 1e-3
        assert report.error_at(11) >= 1e-3
        assert report.selected_min == 12

    def test_fraction_sweep_full_grid(self):
        """Test that floor rounding needs more than 12 fraction bits on the full grid."""
        report = sweep_fractions(workers=4)
        assert len(report.points) == 33
        assert 0.005 < report.error_at(12) < 0.02
        assert report.selected_min in (15, 16, 17)
        assert report.error_at(32) < 1e-6

    def test_fraction_sweep_full_grid_nearest(self):
        report = sweep_fractions(rounding=Rounding.NEAREST, frac_range=range(12, 20), workers=4)
        assert report.selected_min in (14, 15, 16)

    def test_hundred_run_corner_distribution_at_twelve_bits(self):
        """Test that 100 seeded runs at the default 12 bits stay within a few LSB of the chain skew."""
        dist = corner_error_distribution(range(100), InterpolationConfig())
        summary = dist.summary()
        assert summary["runs"] == 100
        assert summary["max"] <= 24 * LSB12

    def test_hundred_run_corner_distribution_at_twentyfour_bits(self):
        dist = corner_error_distribution(range(100), InterpolationConfig(fmt=FxFormat(frac_bits=24)))
        assert dist.summary()["over_threshold"] == 0

    def test_thousand_frame_benchmark(self):
        """Test correction throughput over 1000 frames on the default datapath."""
        result = benchmark_throughput(InterpolationConfig(), n_frames=1000)
        assert result["frames"] == 1000
        assert result["frames_per_second"] > 0
        assert np.isfinite(result["seconds"])
