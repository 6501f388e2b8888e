import json

import numpy as np
import pytest

from nilpw.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, csv_body, load_config, main, set_dotted

FAST = ["--set", "grids.X=[{\"center\": 0, \"halfWidth\": 3, \"points\": 33}]",
        "--set", "grids.lambda=[{\"center\": 2, \"halfWidth\": 1, \"points\": 5}]",
        "--set", "grids.G=[{\"center\": 0, \"halfWidth\": 2, \"points\": 17}, "
                 "{\"center\": 0, \"halfWidth\": 2, \"points\": 17}, {\"center\": 0, \"halfWidth\": 2, \"points\": 17}]"]


def test_set_dotted_parses_json_and_strings():
    cfg = {}
    set_dotted(cfg, "a.b.c=3")
    set_dotted(cfg, "a.name=heisenberg")
    set_dotted(cfg, "a.list=[1, 2]")
    assert cfg == {"a": {"b": {"c": 3}, "name": "heisenberg", "list": [1, 2]}}


def test_config_file_merges_over_defaults(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"group": "engel", "function": {"seed": 4}}))
    cfg = load_config(path, ["epsilon=1e-6"])
    assert cfg["group"] == "engel" and cfg["function"]["seed"] == 4
    assert cfg["function"]["family"] == "random" and cfg["epsilon"] == 1e-6


def test_catalog(capsys):
    assert main(["catalog"]) == EXIT_OK
    names = [e["name"] for e in json.loads(capsys.readouterr().out)]
    assert names == ["abelian1", "abelian2", "heisenberg", "engel"]


@pytest.mark.parametrize("override, message", [
    ("group=\"poincare\"", "unknown group"),
    ("grids.X=[]", "grids.X has 0 axes"),
    ("grids.lambda=[{\"center\": 0, \"halfWidth\": 1, \"points\": 4}]", "odd point count"),
    ("grids.lambda=[{\"center\": 0, \"halfWidth\": 40, \"points\": 5}]", "Nyquist"),
    ("function.radius=2.5", "strictly inside"),
    ("epsilon=2", "epsilon"),
    ("function.family=\"spline\"", "unknown function family"),
])
def test_validation_errors_exit_1(tmp_path, capsys, override, message):
    code = main(["pw-scan", "--output", str(tmp_path), "--set", override])
    assert code == EXIT_CONFIG
    assert message in capsys.readouterr().err
    assert not (tmp_path / "pw_scan.csv").exists()


def test_io_error_exit_3(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["pw-scan", "--output", str(blocker / "sub")] + FAST) == EXIT_IO
    assert main(["pw-scan", "--config", str(tmp_path / "missing.json")]) == EXIT_IO


def test_pw_scan_writes_csv_and_figure(tmp_path):
    assert main(["pw-scan", "--output", str(tmp_path)] + FAST) == EXIT_OK
    text = (tmp_path / "pw_scan.csv").read_text().splitlines()
    assert text[0].startswith("#") and any(l.startswith("# verdict: consistent") for l in text)
    header = next(l for l in text if not l.startswith("#"))
    assert header.startswith("lambda_1 [chart],hs_norm")
    body = csv_body(tmp_path / "pw_scan.csv").splitlines()
    assert len(body) == 5
    assert (tmp_path / "pw_scan.png").stat().st_size > 0


def test_csv_body_has_no_timestamp(tmp_path):
    main(["pw-scan", "--output", str(tmp_path / "a")] + FAST)
    main(["pw-scan", "--output", str(tmp_path / "b"), "--workers", "3"] + FAST)
    assert csv_body(tmp_path / "a" / "pw_scan.csv") == csv_body(tmp_path / "b" / "pw_scan.csv")


def test_stop_after_then_resume(tmp_path):
    out = str(tmp_path / "r")
    assert main(["pw-scan", "--output", out, "--stop-after", "1"] + FAST) == EXIT_OK
    assert not (tmp_path / "r" / "pw_scan.csv").exists()
    assert main(["pw-scan", "--output", out] + FAST) == EXIT_OK
    main(["pw-scan", "--output", str(tmp_path / "fresh")] + FAST)
    assert csv_body(tmp_path / "r" / "pw_scan.csv") == csv_body(tmp_path / "fresh" / "pw_scan.csv")


def test_kernel_dump_and_route_report(tmp_path):
    assert main(["kernel", "--output", str(tmp_path)] + FAST) == EXIT_OK
    meta = json.loads((tmp_path / "kernel.bin.json").read_text())
    assert meta["shape"] == [5, 33, 33]
    raw = np.fromfile(tmp_path / "kernel.bin", dtype="<c16")
    assert raw.size == 5 * 33 * 33
    rows = csv_body(tmp_path / "kernel_route.csv").splitlines()
    assert len(rows) == 3  # lambda = 1, 2, 3


def test_probe_and_fourier(tmp_path):
    assert main(["probe-invert", "--output", str(tmp_path)] + FAST) == EXIT_OK
    rows = [r.split(",") for r in csv_body(tmp_path / "probe_invert.csv").splitlines()]
    assert len(rows) == 5 and all(float(r[2]) >= float(r[1]) for r in rows)
    assert main(["fourier", "--output", str(tmp_path), "--save-function",
                 "--set", "grids.lambda=[{\"center\": 2, \"halfWidth\": 1, \"points\": 3}]"] + FAST[:2]
                + FAST[4:]) == EXIT_OK
    assert len(csv_body(tmp_path / "fourier.csv").splitlines()) == 3 * 33 * 33
    assert (tmp_path / "function.csv").exists() and (tmp_path / "fourier.png").exists()


def test_plancherel_command(tmp_path):
    args = ["plancherel", "--output", str(tmp_path), "--set", "function.count=2",
            "--set", "grids.lambda=[{\"center\": 0, \"halfWidth\": 6, \"points\": 33}]",
            "--set", "grids.X=[{\"center\": 0, \"halfWidth\": 12, \"points\": 97}]"] + FAST[4:]
    assert main(args) == EXIT_OK
    rows = csv_body(tmp_path / "plancherel.csv").splitlines()
    assert len(rows) == 2
    ratios = [float(r.split(",")[4]) for r in rows]
    assert np.allclose(np.array(ratios) * 4 * np.pi**2, 1, atol=0.05)


def test_selftest_subset(capsys):
    assert main(["selftest", "--only", "1", "7"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 2


def test_pw_scan_zero_function(tmp_path):
    assert main(["pw-scan", "--output", str(tmp_path), "--set", "function.family=\"zero\""] + FAST) == EXIT_OK
    text = (tmp_path / "pw_scan.csv").read_text()
    assert "# verdict: zero function" in text
    rows = [r.split(",") for r in csv_body(tmp_path / "pw_scan.csv").splitlines()]
    assert all(r[2] == "1" for r in rows)
