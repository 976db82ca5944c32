import json
import logging

import numpy as np
import pytest

from solitrain.errors import CalibrationError, FingerprintMismatchError, PreconditionError
from solitrain.models.field import init_uniform
from solitrain.services.calibration import CalibrationTable
from solitrain.services.detection import SolitonEvent, SolitonEventLog
from solitrain.services.evolution import EvolutionConfig, evolve
from solitrain.services.protocol import BRANCH_R, CritConstants, StepProfile, StepSchedule
from solitrain.storage.backends import CSVTableBackend, create_table_backend
from solitrain.storage.exports import (
    read_density_binary, write_density_binary, write_density_csv, write_detector_series,
    write_event_log, write_json_report,
)


@pytest.fixture
def table():
    return CalibrationTable(
        branch=BRANCH_R,
        samples=[(1.0, 0.0), (2.6, 0.04), (3.0, 0.08)],
        crit=CritConstants(),
        fingerprint="abc123",
        gap_samples=[2.2],
    )


@pytest.fixture
def backend(tmp_path):
    return create_table_backend(table_dir=str(tmp_path / "tables"))


@pytest.fixture
def trajectory(small_grid):
    config = EvolutionConfig(dt=5e-3, t_final=0.2, record_stride=10, line_stride=2)
    schedule = StepSchedule.build([StepProfile(2.2, 1.0)] * 2)
    return evolve(init_uniform(small_grid, n_components=2), schedule, config, z_detector=4.0)


def test_factory_rejects_unknown_backend():
    with pytest.raises(ValueError):
        create_table_backend(backend_type="postgres")


def test_table_round_trip(backend, table):
    assert isinstance(backend, CSVTableBackend)
    path = backend.save_table(table, "table_r")
    assert path.name == "table_r.csv"
    loaded = backend.load_table("table_r", expected_fingerprint="abc123")
    assert loaded.samples == table.samples
    assert loaded.branch == BRANCH_R
    assert loaded.crit == table.crit
    assert loaded.gap_samples == [2.2]
    assert backend.list_tables() == ["table_r.csv"]


def test_table_file_layout(backend, table):
    text = backend.save_table(table, "table_r").read_text(encoding="utf-8")
    lines = text.splitlines()
    assert lines[0] == "# branch=r"
    assert lines[3] == "# fingerprint=abc123"
    assert lines[4] == "# gaps=2.2"
    assert lines[5] == "s,f"
    assert lines[6:] == ["1.0,0.0", "2.6,0.04", "3.0,0.08"]


def test_explicit_paths_bypass_table_dir(backend, table, tmp_path):
    path = backend.save_table(table, str(tmp_path / "elsewhere" / "mine.csv"))
    assert path == tmp_path / "elsewhere" / "mine.csv"
    assert backend.load_table(str(path)).samples == table.samples


def test_strict_fingerprint_mismatch(backend, table):
    backend.save_table(table, "table_r")
    with pytest.raises(FingerprintMismatchError) as excinfo:
        backend.load_table("table_r", expected_fingerprint="other")
    assert excinfo.value.found == "abc123"
    assert "--warn-fingerprint" in str(excinfo.value)


def test_warn_only_fingerprint_mismatch(backend, table, caplog):
    backend.save_table(table, "table_r")
    with caplog.at_level(logging.WARNING):
        loaded = backend.load_table("table_r", expected_fingerprint="other", strict=False)
    assert loaded.fingerprint == "abc123"
    assert "warn-only" in caplog.text


def test_tampered_table_is_rejected(backend, table):
    path = backend.save_table(table, "table_r")
    text = path.read_text(encoding="utf-8").replace("3.0,0.08", "3.0,0.01")
    path.write_text(text, encoding="utf-8")
    with pytest.raises(CalibrationError) as excinfo:
        backend.load_table("table_r")
    assert "non-monotone" in str(excinfo.value)


def test_missing_header_is_rejected(backend, tmp_path):
    path = tmp_path / "tables" / "broken.csv"
    path.parent.mkdir(parents=True)
    path.write_text("# branch=r\ns,f\n2.6,0.1\n", encoding="utf-8")
    with pytest.raises(CalibrationError) as excinfo:
        backend.load_table("broken")
    assert "c_up" in str(excinfo.value)


def test_malformed_row_reports_line_number(backend, tmp_path):
    path = tmp_path / "tables" / "broken.csv"
    path.parent.mkdir(parents=True)
    path.write_text("# branch=r\n# c_up=2.2\n# c_down=0.45\n# fingerprint=x\ns,f\n2.6,abc\n",
                    encoding="utf-8")
    with pytest.raises(CalibrationError) as excinfo:
        backend.load_table("broken")
    assert "broken.csv:6" in str(excinfo.value)


def test_missing_table(backend):
    with pytest.raises(CalibrationError):
        backend.load_table("nothing_here")


def test_density_csv_layout(tmp_path, trajectory, small_grid):
    path = write_density_csv(tmp_path / "density.csv", trajectory, component=1)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 1 + len(trajectory.times)
    header = lines[0].split(",")
    assert header[0] == "t\\z"
    assert float(header[1]) == small_grid.z[0]
    assert len(header) == 1 + small_grid.n_points
    assert float(lines[1].split(",")[0]) == 0.0
    body = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    np.testing.assert_array_equal(body[:, 0], trajectory.times)
    np.testing.assert_array_equal(body[:, 1:], trajectory.density_records[1])


def test_density_binary_round_trip(tmp_path, trajectory):
    path = write_density_binary(tmp_path / "density.bin", trajectory)
    np.testing.assert_array_equal(read_density_binary(path), trajectory.density_records[0])
    sidecar = (tmp_path / "density.bin.hdr").read_text(encoding="utf-8")
    assert "n_cols=256" in sidecar
    assert "dz=0.25" in sidecar


def test_exports_are_byte_reproducible(tmp_path, trajectory):
    first = write_density_csv(tmp_path / "a.csv", trajectory).read_bytes()
    second = write_density_csv(tmp_path / "b.csv", trajectory).read_bytes()
    assert first == second


def test_component_out_of_range(tmp_path, trajectory):
    with pytest.raises(PreconditionError):
        write_density_csv(tmp_path / "density.csv", trajectory, component=2)


def test_detector_series_columns(tmp_path, trajectory):
    lines = write_detector_series(tmp_path / "detector.csv", trajectory).read_text(encoding="utf-8").splitlines()
    assert lines[0] == "t,n0,n1"
    assert len(lines) == 1 + len(trajectory.line_times)


def test_event_log(tmp_path):
    log = SolitonEventLog(events=[SolitonEvent(t=1.5, depth=0.7, width=0.3)], window=(0.0, 2.0))
    path = write_event_log(tmp_path / "events.csv", log)
    assert path.read_text(encoding="utf-8").splitlines()[0] == "t,depth,width"
    np.testing.assert_array_equal(np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2), [[1.5, 0.7, 0.3]])


def test_empty_event_log_has_only_header(tmp_path):
    path = write_event_log(tmp_path / "events.csv", SolitonEventLog())
    assert path.read_text(encoding="utf-8") == "t,depth,width\n"


def test_json_report_is_sorted(tmp_path):
    report = {"b": np.float64(0.5), "a": {"z": np.int64(3), "y": np.array([1.0, 2.0])}, "ok": np.bool_(True)}
    path = write_json_report(tmp_path / "report.json", report)
    text = path.read_text(encoding="utf-8")
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": {"y": [1.0, 2.0], "z": 3}, "b": 0.5, "ok": True}
