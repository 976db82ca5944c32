import json

import numpy as np
import pytest

import cli
from solitrain.config import SimulationConfig
from solitrain.errors import ConfigError
from solitrain.services import calculator, calibration
from solitrain.services.calibration import CalibrationTable
from solitrain.services.protocol import BRANCH_R
from solitrain.storage.backends import create_table_backend

from conftest import fake_measurement

SMALL_RUN = """
grid: {n_points: 256, L: 64.0, z_min: -32.0}
evolution: {dt: 0.005, t_final: 1.0, record_stride: 20, line_stride: 2}
detector: {z_d: 4.0}
"""


@pytest.fixture
def env(monkeypatch, tmp_path):
    monkeypatch.setenv("SOLITON_OUTPUT_DIR", str(tmp_path / "output"))
    monkeypatch.setenv("SOLITON_TABLE_DIR", str(tmp_path / "tables"))
    monkeypatch.setenv("SOLITON_MAX_WORKERS", "2")
    monkeypatch.setenv("ENVIRONMENT", "test")
    monkeypatch.delenv("SOLITON_STRICT_FINGERPRINT", raising=False)
    return tmp_path


def save_table(tmp_path, fingerprint):
    s_values = [1.0, 2.2] + list(np.linspace(2.6, 12.2, 25))
    table = CalibrationTable(
        branch=BRANCH_R,
        samples=[(s, max(0.0, 0.1 * (s - 2.2))) for s in s_values],
        fingerprint=fingerprint,
    )
    return create_table_backend(table_dir=str(tmp_path / "tables")).save_table(table, "table_r")


def write_config(tmp_path, text, name="run.yaml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_no_command_prints_help(capsys):
    assert cli.main([]) == cli.EXIT_OK
    assert "simulate" in capsys.readouterr().out


@pytest.mark.parametrize("s_list, s_range, expected", [
    ("2.4,2.8,3.2", None, [2.4, 2.8, 3.2]),
    (None, "2.2:3.0:0.4", [2.2, 2.6, 3.0]),
    (None, "2.2:2.9:0.4", [2.2, 2.6]),
])
def test_parse_s_values(s_list, s_range, expected):
    assert cli.parse_s_values(s_list, s_range) == pytest.approx(expected)


@pytest.mark.parametrize("s_list, s_range", [
    (None, None), ("2.4", "2.2:3.0:0.4"), ("a,b", None), (None, "3.0:2.0:0.4"), (None, "2.2:3.0:0"),
])
def test_parse_s_values_errors(s_list, s_range):
    with pytest.raises(ConfigError):
        cli.parse_s_values(s_list, s_range)


def test_simulate_writes_outputs(env, capsys):
    config = write_config(env, SMALL_RUN + "schedule: {self: [[2.2, 1.0]]}\n")
    out_dir = env / "quench"
    assert cli.main(["simulate", config, "--out", str(out_dir)]) == cli.EXIT_OK

    for name in ("density_c0.csv", "detector.csv", "events_c0.csv", "frequency.json"):
        assert (out_dir / name).is_file()
    report = json.loads((out_dir / "frequency.json").read_text(encoding="utf-8"))
    assert report["s_eff"] == pytest.approx(2.2)
    assert report["blow_up"] is False
    assert report["window"] == [pytest.approx(0.4), pytest.approx(1.0)]
    assert "f = " in capsys.readouterr().out


def test_simulate_binary_to_default_output_dir(env):
    config = write_config(env, SMALL_RUN)
    assert cli.main(["simulate", config, "--binary"]) == cli.EXIT_OK
    assert (env / "output" / "density_c0.bin").is_file()
    assert (env / "output" / "density_c0.bin.hdr").is_file()


def test_simulate_blow_up_exit_code(env):
    config = write_config(env, SMALL_RUN + "initial: {n0: 4.0}\nschedule: {self: [[1.0e+308, 1.0e+308]]}\n")
    with np.errstate(all="ignore"):
        code = cli.main(["simulate", config, "--out", str(env / "blown")])
    assert code == cli.EXIT_NUMERICAL
    report = json.loads((env / "blown" / "frequency.json").read_text(encoding="utf-8"))
    assert report["blow_up"] is True


def test_unknown_config_key(env, capsys):
    config = write_config(env, SMALL_RUN + "extra: 1\n")
    assert cli.main(["simulate", config]) == cli.EXIT_VALIDATION
    assert "config.extra" in capsys.readouterr().out


def test_simulate_component_out_of_range(env):
    config = write_config(env, SMALL_RUN)
    assert cli.main(["simulate", config, "--component", "1"]) == cli.EXIT_VALIDATION


def test_calibrate_writes_table(env, monkeypatch, fake_measure, linear_response):
    monkeypatch.setattr(calibration, "measure_schedule", fake_measure(linear_response))
    assert cli.main(["calibrate", "--s-list", "1.0,2.6,3.0", "--out", "mine"]) == cli.EXIT_OK

    table = create_table_backend(table_dir=str(env / "tables")).load_table(
        "mine", expected_fingerprint=SimulationConfig().fingerprint()
    )
    assert [s for s, _ in table.samples] == [1.0, 2.6, 3.0]


def test_compute_decodes(env, monkeypatch, fake_measure, linear_response, capsys):
    monkeypatch.setattr(calculator, "measure_schedule", fake_measure(linear_response))
    table_path = save_table(env, SimulationConfig().fingerprint())
    out = env / "add.json"

    code = cli.main(["compute", "--op", "add", "1.0", "0.6", "--table", str(table_path), "--out", str(out)])
    assert code == cli.EXIT_OK
    report = json.loads(out.read_text(encoding="utf-8"))
    assert report["decoded"] == pytest.approx(1.6)
    assert report["order_check"] is True
    assert "order_check: true" in capsys.readouterr().out


def test_compute_out_of_range(env, monkeypatch, fake_measure, linear_response):
    monkeypatch.setattr(calculator, "measure_schedule", fake_measure(linear_response))
    table_path = save_table(env, SimulationConfig().fingerprint())
    code = cli.main(["compute", "--op", "add", "6", "6", "--table", str(table_path)])
    assert code == cli.EXIT_DECODE_RANGE
    assert (env / "output" / "compute_add.json").is_file()


def test_compute_blow_up(env, monkeypatch, fake_measure, linear_response):
    monkeypatch.setattr(calculator, "measure_schedule", fake_measure(linear_response, blow_up_below=100.0))
    table_path = save_table(env, SimulationConfig().fingerprint())
    assert cli.main(["compute", "--op", "add", "1", "1", "--table", str(table_path)]) == cli.EXIT_NUMERICAL


def test_compute_fingerprint_mismatch(env, monkeypatch, fake_measure, linear_response):
    monkeypatch.setattr(calculator, "measure_schedule", fake_measure(linear_response))
    table_path = save_table(env, "stale")
    args = ["compute", "--op", "add", "1.0", "0.6", "--table", str(table_path)]
    assert cli.main(args) == cli.EXIT_VALIDATION
    assert cli.main(args + ["--warn-fingerprint"]) == cli.EXIT_OK


def test_compute_bad_operands(env):
    assert cli.main(["compute", "--op", "mul", "2", "1.5"]) == cli.EXIT_VALIDATION


def test_selftest_with_oversized_step_fails(env, capsys):
    assert cli.main(["selftest", "--quick", "--dt", "0.5"]) == cli.EXIT_VALIDATION
    assert "5 check(s) failed" in capsys.readouterr().out


def test_compute_scale_below_threshold(env, capsys):
    assert cli.main(["compute", "--op", "scale", "1.0", "0.5"]) == cli.EXIT_DECODE_RANGE
    assert "cannot be decoded" in capsys.readouterr().out


def test_compute_decodes_truncated_run(env, monkeypatch, linear_response, capsys):
    def measure(schedule, config, component=0, progress_callback=None):
        total = schedule.effective_profile(0)
        return fake_measurement(linear_response(total.left / total.right), blow_up=True)

    monkeypatch.setattr(calculator, "measure_schedule", measure)
    table_path = save_table(env, SimulationConfig().fingerprint())
    out = env / "truncated.json"
    code = cli.main(["compute", "--op", "add", "1.0", "0.6", "--table", str(table_path), "--out", str(out)])
    assert code == cli.EXIT_NUMERICAL
    report = json.loads(out.read_text(encoding="utf-8"))
    assert report["decoded"] == pytest.approx(1.6)
    assert report["indicative"] is True
    assert "decoded from the truncated run" in capsys.readouterr().out
