"""
Transmission-line signal model: the nominal waveform, delayed frame sampling,
Gaussian measurement delay and the partial-discharge transient overlay.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Tuple

import numpy as np
from pydantic import root_validator, validator

from app.config import Config
from app.models import FrozenModel
from app.services.weight_matrix import StepRangeError

logger = logging.getLogger(__name__)

NS_PER_SECOND = 1_000_000_000


class TlSignalParams(FrozenModel):
    a_rms: float = 1.0
    freq_hz: float = Config.TL_FREQ_HZ
    phase_rad: float = 0.0

    @validator("a_rms", "freq_hz")
    def _positive(cls, v, field):
        if not v > 0 or not math.isfinite(v):
            raise ValueError(f"{field.name} must be a positive finite number, got {v}")
        return v

    @validator("phase_rad")
    def _phase_in_range(cls, v):
        if not -math.pi <= v <= math.pi:
            raise ValueError(f"phase_rad must be in [-pi, pi], got {v}")
        return v


class DelayDistribution(FrozenModel):
    mean_ns: float = Config.DELAY_MEAN_NS
    sigma_ns: float = Config.DELAY_SIGMA_NS
    clip_ns: int = Config.DELAY_CLIP_NS

    @validator("sigma_ns")
    def _sigma_non_negative(cls, v):
        if v < 0 or not math.isfinite(v):
            raise ValueError(f"sigma_ns must be a non-negative finite number, got {v}")
        return v

    @validator("clip_ns")
    def _clip_in_period(cls, v):
        if not 0 <= v < Config.PERIOD_NS:
            raise ValueError(f"clip_ns must be in [0, {Config.PERIOD_NS}), got {v}")
        return v


class PdParams(FrozenModel):
    onset_step: int = Config.PD_ONSET_STEP
    amplitude: float = Config.PD_AMPLITUDE
    decay_per_step: float = Config.PD_DECAY_PER_STEP
    oscillation_period_steps: float = Config.PD_OSCILLATION_STEPS

    @validator("onset_step")
    def _onset_in_frame(cls, v):
        if not 0 <= v < Config.SAMPLES_PER_FRAME:
            raise ValueError(f"onset_step must be in [0, {Config.SAMPLES_PER_FRAME}), got {v}")
        return v

    @root_validator(skip_on_failure=True)
    def _shape(cls, values):
        if not 0 < values["decay_per_step"] < 1:
            raise ValueError("decay_per_step must be in (0, 1)")
        if not math.isfinite(values["amplitude"]):
            raise ValueError("amplitude must be finite")
        if not values["oscillation_period_steps"] > 0:
            raise ValueError("oscillation_period_steps must be positive")
        return values


@dataclass(frozen=True)
class MeasuredFrame:
    samples: Tuple[float, ...]
    step_tags: Tuple[int, ...]
    delay_ns: int
    period_ns: int = Config.PERIOD_NS

    def __post_init__(self):
        if len(self.samples) != Config.SAMPLES_PER_FRAME:
            raise ValueError(
                f"a frame holds {Config.SAMPLES_PER_FRAME} samples, got {len(self.samples)}"
            )
        if tuple(self.step_tags) != tuple(range(Config.SAMPLES_PER_FRAME)):
            raise ValueError("step tags must be 0..255 in order")
        if self.period_ns != Config.PERIOD_NS:
            raise ValueError(f"period_ns must be {Config.PERIOD_NS}")
        if not 0 <= self.delay_ns < self.period_ns:
            raise ValueError(f"delay_ns must be in [0, {self.period_ns}), got {self.delay_ns}")

    @classmethod
    def from_samples(cls, samples: Sequence[float], delay_ns: int = 0) -> "MeasuredFrame":
        return cls(
            samples=tuple(float(v) for v in samples),
            step_tags=tuple(range(Config.SAMPLES_PER_FRAME)),
            delay_ns=int(delay_ns),
        )

    def values(self) -> np.ndarray:
        return np.asarray(self.samples, dtype=np.float64)

    def time_ns(self, index: int) -> int:
        return self.step_tags[index] * Config.STEP_NS


def frame_times_ns() -> Tuple[int, ...]:
    return tuple(k * Config.STEP_NS for k in range(Config.SAMPLES_PER_FRAME))


def tl_amplitude(params: TlSignalParams, t_ns: int) -> float:
    # whole cycles are dropped exactly so that t and t + period give identical values
    cycles = (Fraction(params.freq_hz) * t_ns / NS_PER_SECOND) % 1
    return params.a_rms * math.cos(2.0 * math.pi * float(cycles) + params.phase_rad)


def sample_frame(params: TlSignalParams, delay_ns: int) -> MeasuredFrame:
    if not 0 <= delay_ns < Config.PERIOD_NS:
        raise StepRangeError(f"delay {delay_ns} ns outside [0, {Config.PERIOD_NS})")
    samples = tuple(tl_amplitude(params, t - delay_ns) for t in frame_times_ns())
    return MeasuredFrame(
        samples=samples,
        step_tags=tuple(range(Config.SAMPLES_PER_FRAME)),
        delay_ns=int(delay_ns),
    )


def draw_delay(dist: DelayDistribution, seed: int) -> int:
    """Draw a tick-aligned, non-negative delay in nanoseconds."""
    rng = np.random.default_rng(seed)
    value = float(rng.normal(dist.mean_ns, dist.sigma_ns)) if dist.sigma_ns > 0 else dist.mean_ns
    clipped = min(max(round(value), 0), dist.clip_ns)
    # align to the tick grid without leaving [0, clip]
    aligned = (clipped + Config.TICK_NS // 2) // Config.TICK_NS * Config.TICK_NS
    return min(aligned, dist.clip_ns // Config.TICK_NS * Config.TICK_NS)


def pd_waveform(pd: PdParams, k_offset: int) -> float:
    if k_offset < 0:
        return 0.0
    return (
        pd.amplitude
        * pd.decay_per_step ** k_offset
        * math.sin(2.0 * math.pi * k_offset / pd.oscillation_period_steps)
    )


def inject_pd(frame: MeasuredFrame, pd: Optional[PdParams]) -> MeasuredFrame:
    if pd is None:
        return frame
    samples = tuple(
        v + pd_waveform(pd, k - pd.onset_step) for k, v in enumerate(frame.samples)
    )
    logger.debug(f"Injected PD transient at step {pd.onset_step} (amplitude {pd.amplitude:.3g})")
    return MeasuredFrame(
        samples=samples,
        step_tags=frame.step_tags,
        delay_ns=frame.delay_ns,
        period_ns=frame.period_ns,
    )
