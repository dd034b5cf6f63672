import shutil
import subprocess
import sys

import pytest

from conftest import FIXTURES
from taskenergy import cli
from taskenergy.dataset import Dataset

GOLDEN = FIXTURES / "golden"


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_no_subcommand_is_usage_error(capsys):
    code, _, err = run([], capsys)
    assert code == 2
    assert "error[usage]" in err


def test_bad_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["replay", "--trace"])
    assert info.value.code == 2
    assert "error[usage]" in capsys.readouterr().err


def test_bad_environment_is_usage_error(monkeypatch, capsys):
    monkeypatch.setenv(cli.ENV_GAMMA, "high")
    code, _, err = run(["report", "--in", "x"], capsys)
    assert code == 2
    assert err.startswith("error[usage]: environment variable PEAK_GAMMA")


def test_environment_sets_defaults(monkeypatch):
    monkeypatch.setenv(cli.ENV_GAMMA, "0.6")
    monkeypatch.setenv(cli.ENV_RAPL_MS, "500")
    args = cli.build_parser().parse_args(["replay", "--trace", "t", "--out", "o"])
    config = cli._config(args)
    assert (config.gamma, config.rapl_interval) == (0.6, 0.5)
    args = cli.build_parser().parse_args(["replay", "--trace", "t", "--out", "o", "--gamma", "0.2"])
    assert cli._config(args).gamma == 0.2  # flag beats environment


def test_invalid_gamma_flag(capsys, tmp_path):
    code, _, err = run(["replay", "--trace", str(FIXTURES / "min.trace"), "--out", str(tmp_path), "--gamma", "2"],
                       capsys)
    assert code == 2 and "error[usage]" in err


def test_missing_trace_is_io_error(capsys, tmp_path):
    code, _, err = run(["replay", "--trace", str(tmp_path / "nope"), "--out", str(tmp_path / "o")], capsys)
    assert code == 1
    assert err.startswith("error[io]")


def test_bad_trace_is_parse_error(capsys, tmp_path):
    bad = tmp_path / "bad.trace"
    bad.write_text("RAPL t=0\n")
    code, _, err = run(["replay", "--trace", str(bad), "--out", str(tmp_path / "o")], capsys)
    assert code == 1
    assert err.startswith("error[trace-parse]")


@pytest.fixture
def dataset_dir(tmp_path, capsys):
    out = tmp_path / "ds"
    code, stdout, _ = run(["replay", "--trace", str(FIXTURES / "min.trace"), "--out", str(out)], capsys)
    assert code == 0 and "wrote 10 records for 1 tasks" in stdout
    return out


@pytest.mark.parametrize("fmt", ["table", "csv", "tl"])
def test_replay_then_report_matches_golden(dataset_dir, tmp_path, capsys, fmt):
    target = tmp_path / f"r.{fmt}"
    code, _, _ = run(["report", "--in", str(dataset_dir), "--format", fmt, "--output", str(target)], capsys)
    assert code == 0
    assert target.read_bytes() == (GOLDEN / f"min_report.{fmt}").read_bytes()


def test_report_to_stdout(dataset_dir, capsys):
    code, out, _ = run(["report", "--in", str(dataset_dir)], capsys)
    assert code == 0
    assert out.encode() == (GOLDEN / "min_report.table").read_bytes()


def test_evaluate(dataset_dir, capsys):
    code, out, _ = run(["evaluate", "--in", str(dataset_dir)], capsys)
    assert code == 0
    assert "mape" in out
    code, out, _ = run(["evaluate", "--in", str(dataset_dir), "--rapl-total", "3200", "--static-total", "800",
                        "--beta", "0.97"], capsys)
    assert code == 0


def test_evaluate_zero_reference_is_metric_error(dataset_dir, capsys):
    code, _, err = run(["evaluate", "--in", str(dataset_dir), "--rapl-total", "0"], capsys)
    assert code == 1
    assert err.startswith("error[metric]")


def test_corrupt_dataset(dataset_dir, capsys):
    (dataset_dir / "records.tl").write_text("REC node=n0\n")
    code, _, err = run(["report", "--in", str(dataset_dir)], capsys)
    assert code == 1
    assert err.startswith("error[corrupt-record]")


def test_generate_builtin_and_file(tmp_path, capsys):
    trace = tmp_path / "min.trace"
    truth = tmp_path / "min.truth"
    code, _, _ = run(["generate", "--scenario", str(FIXTURES / "min.scenario.json"), "--out", str(trace),
                      "--truth", str(truth)], capsys)
    assert code == 0
    assert trace.read_bytes() == (FIXTURES / "min.trace").read_bytes()
    assert truth.read_bytes() == (FIXTURES / "min.truth").read_bytes()
    code, _, _ = run(["generate", "--scenario", "staircase", "--out", str(tmp_path / "s.trace"), "--seed", "4"],
                     capsys)
    assert code == 0


def test_generate_unknown_scenario(tmp_path, capsys):
    code, _, err = run(["generate", "--scenario", "nope", "--out", str(tmp_path / "x")], capsys)
    assert code == 2 and "error[usage]" in err


def test_calibrate_and_compare(tmp_path, capsys):
    trace = tmp_path / "cal.trace"
    run(["generate", "--scenario", "calibration", "--out", str(trace)], capsys)
    code, out, _ = run(["calibrate", "--trace", str(trace), "--sweep", "0.2,0.3,0.4"], capsys)
    assert code == 0
    assert "selected gamma 0.3" in out
    iso, loaded = tmp_path / "iso.trace", tmp_path / "loaded.trace"
    run(["generate", "--scenario", "colocated_isolated", "--out", str(iso)], capsys)
    run(["generate", "--scenario", "colocated_loaded", "--out", str(loaded)], capsys)
    code, out, _ = run(["compare", "--trace", str(iso), "--load-trace", str(loaded), "--format", "csv"], capsys)
    assert code == 0
    assert out.splitlines()[0] == "model,mape_isolated,mape_loaded,deviation_loaded_pp"


def test_bad_sweep(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["calibrate", "--trace", "t", "--sweep", "a,b"])
    assert info.value.code == 2


def test_monitor_with_rerooted_environment(tmp_path, monkeypatch, capsys):
    proc = tmp_path / "proc"
    shutil.copytree(FIXTURES / "proc", proc)
    shutil.copytree(FIXTURES / "powercap", tmp_path / "powercap")
    monkeypatch.setenv(cli.ENV_PROC_ROOT, str(proc))
    monkeypatch.setenv(cli.ENV_POWERCAP_ROOT, str(tmp_path / "powercap"))
    monkeypatch.setenv(cli.ENV_RAPL_MS, "50")
    monkeypatch.setenv(cli.ENV_POLL_MS, "50")
    out = tmp_path / "live"
    code, stdout, err = run(["monitor", "--out", str(out), "--duration", "0.3", "--idle-window", "0.2",
                             "--pods", str(FIXTURES / "pods.tl"), "--node", "fixture"], capsys)
    assert code == 0, err
    assert stdout.startswith("wrote ")
    pods = (out / "pods.tl").read_text()
    for pid in (4242, 4243, 4250):
        assert f"pid={pid} " in pods
    ds = Dataset.read(out)
    assert ds.backend == "live"
    assert ds.config.rapl_interval == 0.05


def test_monitor_without_powercap_is_startup_error(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(cli.ENV_PROC_ROOT, str(FIXTURES / "proc"))
    monkeypatch.setenv(cli.ENV_POWERCAP_ROOT, str(tmp_path / "none"))
    code, _, err = run(["monitor", "--out", str(tmp_path / "o"), "--duration", "0.1"], capsys)
    assert code == 1
    assert err.startswith("error[startup]")


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "taskenergy", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "replay" in res.stdout
