import os


class Config:
    # Frame geometry - one 50 Hz period sampled 256 times
    SAMPLES_PER_FRAME = 256
    PERIOD_NS = 20_000_000
    STEP_NS = 78_125
    TL_FREQ_HZ = 50.0

    # Datapath clock - 100 MHz, 10 ns tick
    CLOCK_HZ = 100_000_000
    TICK_NS = 10
    TICKS_PER_PERIOD = 2_000_000
    SP_PER_SECOND = 50

    # Interpolation datapath defaults
    DEFAULT_DEGREE = 16
    DEFAULT_FRAC_BITS = 12
    CONTAINER_BITS = 64
    ERROR_THRESHOLD = 0.001

    # Gaussian measurement delay defaults
    DELAY_MEAN_NS = 0.0
    DELAY_SIGMA_NS = 100_000.0
    DELAY_CLIP_NS = 1_000_000

    # Partial-discharge transient used by the corner experiment. It starts just after
    # the cosine minimum at step 128 and enters that corner's window for larger delays.
    PD_ONSET_STEP = 137
    PD_AMPLITUDE = 0.2
    PD_DECAY_PER_STEP = 0.7
    PD_OSCILLATION_STEPS = 6.0

    # Characterization defaults
    DEGREE_SWEEP_RANGE = (3, 24)
    FRAC_SWEEP_RANGE = (0, 32)
    SWEEP_CHUNK_POINTS = 100_000

    # Output formatting and locations
    REAL_FORMAT = "%.17g"
    OUTPUT_DIR = os.getenv("DFC_OUTPUT_DIR", "./output")
    LOG_LEVEL = os.getenv("DFC_LOG_LEVEL", "INFO")
