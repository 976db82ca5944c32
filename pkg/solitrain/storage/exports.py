"""
File exports for simulation runs and computation reports

All writers produce byte-identical output for identical inputs: CSV floats are
written with 17 significant digits (exact round trip), JSON keys are sorted and
line endings are fixed to "\n".
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict

import numpy as np

from solitrain.errors import PreconditionError
from solitrain.services.detection import SolitonEventLog
from solitrain.services.evolution import Trajectory

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = "%.17g"


def _fmt(value: float) -> str:
    return repr(float(value))


def _check_component(trajectory: Trajectory, component: int):
    if not 0 <= component < trajectory.n_components:
        raise PreconditionError(
            f"component {component} out of range for {trajectory.n_components} component(s)"
        )


def _write_table(path: Path, header: str, columns):
    """One CSV header line, then one row per sample of the stacked columns"""
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.empty((0, len(columns)))
    if len(columns[0]):
        data = np.column_stack(columns)
    np.savetxt(path, data, fmt=CSV_FLOAT_FORMAT, delimiter=",", header=header, comments="", newline="\n")


def _write_lines(path: Path, lines):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")


def write_density_csv(path, trajectory: Trajectory, component: int = 0) -> Path:
    """
    Density matrix as CSV: first row holds z, first column holds t

    Args:
        path: Output file
        trajectory: Recorded run
        component: Component index

    Returns:
        Path written
    """
    _check_component(trajectory, component)
    path = Path(path)
    records = trajectory.density_records[component]

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t\\z,")
        np.savetxt(fh, trajectory.grid.z[None, :], fmt=CSV_FLOAT_FORMAT, delimiter=",")
        np.savetxt(fh, np.column_stack([trajectory.times, records]), fmt=CSV_FLOAT_FORMAT, delimiter=",")
    logger.debug(f"Wrote {records.shape[0]}x{records.shape[1]} density matrix to {path}")
    return path


def write_density_binary(path, trajectory: Trajectory, component: int = 0) -> Path:
    """
    Density matrix as raw little-endian float64 (rows = times) plus a text sidecar

    The sidecar `<path>.hdr` lists n_rows, n_cols, dz, dt_record, z_first and t_first
    as key=value lines.
    """
    _check_component(trajectory, component)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records = np.ascontiguousarray(trajectory.density_records[component], dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(records.tobytes(order="C"))

    times = trajectory.times
    dt_record = float(times[1] - times[0]) if len(times) > 1 else 0.0
    header = {
        "n_rows": records.shape[0],
        "n_cols": records.shape[1],
        "dz": _fmt(trajectory.grid.dz),
        "dt_record": _fmt(dt_record),
        "z_first": _fmt(trajectory.grid.z[0]),
        "t_first": _fmt(times[0]),
        "dtype": "float64-le",
    }
    sidecar = path.with_name(path.name + ".hdr")
    _write_lines(sidecar, (f"{key}={value}" for key, value in header.items()))
    logger.debug(f"Wrote binary density matrix to {path} (sidecar {sidecar})")
    return path


def read_density_binary(path) -> np.ndarray:
    """Load a matrix written by write_density_binary using its sidecar shape"""
    path = Path(path)
    sidecar = path.with_name(path.name + ".hdr")
    header = {}
    with open(sidecar, "r", encoding="utf-8") as fh:
        for line in fh:
            key, _, value = line.strip().partition("=")
            header[key] = value
    data = np.fromfile(path, dtype="<f8")
    return data.reshape(int(header["n_rows"]), int(header["n_cols"]))


def write_detector_series(path, trajectory: Trajectory) -> Path:
    """Detector-line density of every component over time"""
    path = Path(path)
    names = ["t"] + [f"n{i}" for i in range(trajectory.n_components)]
    _write_table(path, ",".join(names), [trajectory.line_times, *trajectory.line_samples])
    return path


def write_event_log(path, log: SolitonEventLog) -> Path:
    path = Path(path)
    events = log.events
    _write_table(path, "t,depth,width",
                 [[e.t for e in events], [e.depth for e in events], [e.width for e in events]])
    return path


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, Path):
        return str(value)
    return value


def write_json_report(path, report: Dict[str, Any]) -> Path:
    """Structured report as sorted, indented JSON"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_jsonable(report), sort_keys=True, indent=2, ensure_ascii=False)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text + "\n")
    logger.debug(f"Wrote report to {path}")
    return path
