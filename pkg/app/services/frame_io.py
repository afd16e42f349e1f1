import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from app.config import Config
from app.services.characterization import CornerReport, SweepReport
from app.services.interpolation import CorrectedFrame
from app.services.mdc_sim import PeriodRecord
from app.services.signal_model import MeasuredFrame
from app.services.weight_matrix import WeightMatrix

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

FRAME_HEADER = ["index", "time_ns", "value"]
CORRECTED_HEADER = FRAME_HEADER + ["boundary"]


class FrameFormatError(ValueError):
    """Malformed frame CSV or scenario JSON."""


def fmt_real(value: float) -> str:
    return Config.REAL_FORMAT % value


def sidecar_path(frame_path: PathLike) -> Path:
    return Path(frame_path).with_suffix(".json")


def dump_json(data: Dict[str, Any]) -> str:
    """Canonical JSON text: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def read_frame_csv(path: PathLike) -> MeasuredFrame:
    """
    Read a frame CSV (``index,time_ns,value``, optionally with a ``boundary`` column).

    The delay is taken from the sidecar JSON when one sits next to the CSV.
    """
    path = Path(path)
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise FrameFormatError(f"{path}: empty file")
    header = rows[0]
    if header not in (FRAME_HEADER, CORRECTED_HEADER):
        raise FrameFormatError(f"{path}: row 1: unexpected header {header}")

    samples = []
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise FrameFormatError(f"{path}: row {line_no}: expected {len(header)} fields, got {len(row)}")
        try:
            index, time_ns, value = int(row[0]), int(row[1]), float(row[2])
        except ValueError as exc:
            raise FrameFormatError(f"{path}: row {line_no}: {exc}") from exc
        expected = line_no - 2
        if index != expected:
            raise FrameFormatError(f"{path}: row {line_no}: index {index}, expected {expected}")
        if time_ns != index * Config.STEP_NS:
            raise FrameFormatError(
                f"{path}: row {line_no}: time_ns {time_ns} is not {index * Config.STEP_NS}"
            )
        if not math.isfinite(value):
            raise FrameFormatError(f"{path}: row {line_no}: non-finite value {row[2]}")
        samples.append(value)
    if len(samples) != Config.SAMPLES_PER_FRAME:
        raise FrameFormatError(
            f"{path}: expected {Config.SAMPLES_PER_FRAME} samples, got {len(samples)}"
        )

    delay_ns = 0
    meta = sidecar_path(path)
    if meta.exists():
        raw_delay = read_json(meta).get("delay_ns", 0)
        try:
            delay_ns = int(raw_delay)
        except (TypeError, ValueError) as exc:
            raise FrameFormatError(f"{meta}: delay_ns: {exc}") from exc
    try:
        return MeasuredFrame.from_samples(samples, delay_ns=delay_ns)
    except ValueError as exc:
        raise FrameFormatError(f"{meta}: {exc}") from exc


def read_json(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise FrameFormatError(f"{path}: row {exc.lineno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(data, dict):
        raise FrameFormatError(f"{path}: row 1: expected a JSON object")
    return data


def read_scenario_json(path: PathLike) -> Tuple[List[int], List[int], int]:
    """Return ``(drdy_ticks, pps_ticks, n_ticks)``; ordering is checked by the simulator."""
    data = read_json(path)
    try:
        drdy = [int(t) for t in data.get("drdy_ticks", [])]
        pps = [int(t) for t in data.get("pps_ticks", [])]
        n_ticks = int(data["n_ticks"])
    except KeyError as exc:
        raise FrameFormatError(f"{path}: missing field {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise FrameFormatError(f"{path}: {exc}") from exc
    return drdy, pps, n_ticks


class ArtifactWriter:
    """Writes every run artefact into one output directory."""

    def __init__(self, out_dir: PathLike = Config.OUTPUT_DIR):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def _write_rows(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        path = self.out_dir / name
        count = 0
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow(fmt_real(v) if isinstance(v, float) else v for v in row)
                count += 1
        logger.info(f"Wrote {count} rows to {path}")
        return path

    def write_json(self, name: str, data: Dict[str, Any]) -> Path:
        path = self.out_dir / name
        with open(path, "w") as f:
            f.write(dump_json(data))
        logger.info(f"Wrote {path}")
        return path

    def write_frame(self, frame: MeasuredFrame, name: str = "frame.csv", meta: Optional[Dict[str, Any]] = None) -> Path:
        path = self._write_rows(
            name,
            FRAME_HEADER,
            ((k, frame.time_ns(k), v) for k, v in enumerate(frame.samples)),
        )
        sidecar = {"delay_ns": frame.delay_ns, **(meta or {})}
        self.write_json(sidecar_path(name).name, sidecar)
        return path

    def write_corrected(self, corrected: CorrectedFrame, name: str = "corrected.csv") -> Path:
        rows = (
            (k, k * Config.STEP_NS, v, int(flag))
            for k, (v, flag) in enumerate(zip(corrected.samples, corrected.boundary_flags))
        )
        return self._write_rows(name, CORRECTED_HEADER, rows)

    def write_weights(self, wm: WeightMatrix, name: str = "weights.csv") -> Path:
        return self._write_rows(name, ["i", "m", "raw", "real"], wm.dump_rows())

    def write_periods(self, records: Sequence[PeriodRecord], name: str = "periods.csv") -> Path:
        rows = ((r.period, r.delay_ticks, int(r.data_lost), int(r.sync_ok)) for r in records)
        return self._write_rows(name, ["period", "delay_ticks", "data_lost", "sync_ok"], rows)

    def write_sweep(self, report: SweepReport, name: Optional[str] = None) -> Path:
        name = name or f"sweep_{report.axis.value}.csv"
        return self._write_rows(name, ["axis_value", "max_abs_error"], report.to_rows())

    def write_corners(self, report: CornerReport, name: str = "corners.csv") -> Path:
        return self._write_rows(name, ["corner_step", "abs_error"], report.to_rows())

    def write_corner_runs(self, reports: Sequence[CornerReport], name: str = "corner_experiment.csv") -> Path:
        rows = ((r.seed, r.delay_ns, r.max_error) for r in reports)
        return self._write_rows(name, ["seed", "delay_ns", "max_error"], rows)
