"""
Cycle-level model of the measurement-delay circuit.

A sampling-pulse generator divides the clock into 20 ms periods. Each sampling pulse
(SP) arms a latch and restarts the primary counter; the first DRDY after that stops the
counter and its value becomes the period's measurement delay. If the counter runs a full
period without a DRDY the period is flagged as lost. A secondary counter counts SPs
between 1PPS pulses and reports whether the local clock produced exactly one second of
them.

Within one tick the order is: 1PPS audit, primary counter, SP generator, DRDY capture.
"""

import logging
import time
from dataclasses import dataclass, replace
from typing import Iterable, List, Optional, Sequence, Tuple

from pydantic import root_validator

from app.config import Config
from app.models import FrozenModel

logger = logging.getLogger(__name__)


class ScenarioError(ValueError):
    """Malformed DRDY / 1PPS schedule."""


class ClockConfig(FrozenModel):
    freq_hz: int = Config.CLOCK_HZ
    tick_ns: int = Config.TICK_NS
    ticks_per_period: int = Config.TICKS_PER_PERIOD
    sp_per_second: int = Config.SP_PER_SECOND

    @root_validator(skip_on_failure=True)
    def _consistent(cls, values):
        freq, tick = values["freq_hz"], values["tick_ns"]
        per_period, sps = values["ticks_per_period"], values["sp_per_second"]
        if min(freq, tick, per_period, sps) <= 0:
            raise ValueError("clock parameters must be positive")
        if tick * freq != 1_000_000_000:
            raise ValueError(f"tick_ns {tick} does not match a {freq} Hz clock")
        if tick * per_period != Config.PERIOD_NS:
            raise ValueError(f"{per_period} ticks of {tick} ns do not span one period")
        if sps * per_period != freq:
            raise ValueError(f"{sps} periods of {per_period} ticks do not span one second")
        return values


@dataclass(frozen=True)
class MdcState:
    scg_count: int
    primary_count: int
    latch: bool
    sync_counter: int
    delay_register: int
    data_lost: bool
    sync_status_ff: bool
    tick_index: int = 0

    @classmethod
    def initial(cls, clk: ClockConfig) -> "MdcState":
        # the generator is preloaded so that the first SP fires on tick 0
        return cls(
            scg_count=clk.ticks_per_period - 1,
            primary_count=0,
            latch=False,
            sync_counter=0,
            delay_register=0,
            data_lost=False,
            sync_status_ff=False,
        )


@dataclass(frozen=True)
class MdcInputs:
    drdy: bool = False
    pps: bool = False


@dataclass(frozen=True)
class MdcOutputs:
    measurement_delay_ticks: int
    data_lost: bool
    sync_status_ok: bool
    sp_fired: bool


@dataclass(frozen=True)
class PeriodRecord:
    period: int
    delay_ticks: int
    data_lost: bool
    sync_ok: bool


def mdc_step(state: MdcState, inputs: MdcInputs, clk: ClockConfig) -> Tuple[MdcState, MdcOutputs]:
    """
    Advance one tick.

    On an SP tick the outputs describe the period that just closed; on every other tick
    they mirror the live registers.
    """
    period = clk.ticks_per_period
    scg = state.scg_count
    primary = state.primary_count
    latch = state.latch
    sync_counter = state.sync_counter
    delay = state.delay_register
    lost = state.data_lost
    sync_ok = state.sync_status_ff

    if inputs.pps:
        sync_ok = sync_counter == clk.sp_per_second
        sync_counter = 0

    if latch:
        primary += 1
        if primary >= period:
            # carry out: no DRDY within the period
            lost = True
            latch = False
            primary = 0

    scg += 1
    sp_fired = scg == period
    closing_delay, closing_lost = delay, lost
    if sp_fired:
        scg = 0
        latch = True
        primary = 0
        sync_counter = min(sync_counter + 1, clk.sp_per_second + 1)
        lost = False

    if inputs.drdy and latch:
        delay = primary
        latch = False
        primary = 0

    new_state = MdcState(
        scg_count=scg,
        primary_count=primary,
        latch=latch,
        sync_counter=sync_counter,
        delay_register=delay,
        data_lost=lost,
        sync_status_ff=sync_ok,
        tick_index=state.tick_index + 1,
    )
    outputs = MdcOutputs(
        measurement_delay_ticks=closing_delay if sp_fired else delay,
        data_lost=closing_lost if sp_fired else lost,
        sync_status_ok=sync_ok,
        sp_fired=sp_fired,
    )
    return new_state, outputs


class MdcSimulator:
    """Stateful driver around ``mdc_step`` that can skip quiet stretches of ticks."""

    def __init__(self, clk: Optional[ClockConfig] = None):
        self.clk = clk or ClockConfig()
        self.state = MdcState.initial(self.clk)

    @property
    def tick(self) -> int:
        return self.state.tick_index

    def ticks_to_next_sp(self) -> int:
        """Ticks until the next SP tick; 0 means the next tick fires one."""
        return self.clk.ticks_per_period - 1 - self.state.scg_count

    def step(self, drdy: bool = False, pps: bool = False) -> MdcOutputs:
        self.state, outputs = mdc_step(self.state, MdcInputs(drdy=drdy, pps=pps), self.clk)
        return outputs

    def advance_idle(self, n_ticks: int) -> None:
        """Skip ``n_ticks`` ticks with no DRDY, no 1PPS and no SP."""
        if n_ticks <= 0:
            return
        if n_ticks > self.ticks_to_next_sp():
            raise ValueError(f"cannot skip {n_ticks} ticks across a sampling pulse")
        s = self.state
        # while latched the primary counter tracks the generator and cannot carry out
        self.state = replace(
            s,
            scg_count=s.scg_count + n_ticks,
            primary_count=s.primary_count + n_ticks if s.latch else s.primary_count,
            tick_index=s.tick_index + n_ticks,
        )


def _validate_schedule(name: str, ticks: Sequence[int], n_ticks: int) -> List[int]:
    ticks = [int(t) for t in ticks]
    for a, b in zip(ticks, ticks[1:]):
        if b <= a:
            raise ScenarioError(f"{name} schedule must be strictly increasing ({a} then {b})")
    for t in ticks:
        if not 0 <= t < n_ticks:
            raise ScenarioError(f"{name} tick {t} outside [0, {n_ticks})")
    return ticks


def run_scenario(
    drdy_schedule: Sequence[int],
    pps_schedule: Sequence[int],
    n_ticks: int,
    clk: Optional[ClockConfig] = None,
    stepwise: bool = False,
) -> List[PeriodRecord]:
    """
    Simulate ticks 0..n_ticks and return one record per completed period.

    Unless ``stepwise`` is set, runs of quiet ticks are skipped in one jump; the
    results are identical either way.
    """
    if n_ticks < 1:
        raise ScenarioError(f"n_ticks must be positive, got {n_ticks}")
    drdy = _validate_schedule("DRDY", drdy_schedule, n_ticks)
    pps = _validate_schedule("1PPS", pps_schedule, n_ticks)
    drdy_set, pps_set = set(drdy), set(pps)
    events = sorted(drdy_set | pps_set) + [n_ticks]

    sim = MdcSimulator(clk)
    records: List[PeriodRecord] = []
    start = time.time()
    logger.info(f"=== Starting MDC scenario: {n_ticks} ticks, {len(drdy)} DRDY, {len(pps)} 1PPS ===")

    next_event = 0
    while sim.tick <= n_ticks:
        if not stepwise:
            while events[next_event] < sim.tick:
                next_event += 1
            target = min(events[next_event], sim.tick + sim.ticks_to_next_sp())
            sim.advance_idle(target - sim.tick)
        t = sim.tick
        out = sim.step(drdy=t in drdy_set, pps=t in pps_set)
        if out.sp_fired and t > 0:
            records.append(
                PeriodRecord(
                    period=len(records),
                    delay_ticks=out.measurement_delay_ticks,
                    data_lost=out.data_lost,
                    sync_ok=out.sync_status_ok,
                )
            )

    logger.info(
        f"=== MDC scenario completed in {time.time() - start:.2f}s: "
        f"{len(records)} periods, {sum(r.data_lost for r in records)} lost ==="
    )
    return records


def schedule_from_delays(
    delays: Iterable[int], clk: Optional[ClockConfig] = None
) -> Tuple[List[int], int]:
    """DRDY ticks placing one ready pulse ``d`` ticks after each SP, plus the run length."""
    clk = clk or ClockConfig()
    ticks = []
    count = 0
    for k, d in enumerate(delays):
        if not 0 <= d < clk.ticks_per_period:
            raise ScenarioError(f"delay {d} outside [0, {clk.ticks_per_period})")
        ticks.append(k * clk.ticks_per_period + d)
        count = k + 1
    return ticks, count * clk.ticks_per_period


def pps_schedule(n_seconds: int, clk: Optional[ClockConfig] = None) -> List[int]:
    clk = clk or ClockConfig()
    return [s * clk.freq_hz for s in range(1, n_seconds + 1)]
