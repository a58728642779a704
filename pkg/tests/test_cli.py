import json
import subprocess
import sys

import numpy as np
import pytest

from pdcspeckle import frameio
from pdcspeckle.cli import ANALYZE_COLUMNS, main
from pdcspeckle.fitting import sinh2_model
from pdcspeckle.sweep import FIT_COLUMNS

CONFIG = """wp_mm = 0.65
grid_nx = 16
grid_ny = 16
temporal_modes = 3
frames = 2
"""


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(CONFIG)
    return p


def error_of(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_simulate_then_analyze(tmp_path, config):
    out = tmp_path / "frames"
    assert main(["simulate", "--config", str(config), "--out", str(out),
                 "--frames", "3", "--seed", "9"]) == 0
    paths = frameio.frame_paths(out)
    assert [p.name for p in paths] == ["frame_0000.pgm", "frame_0001.pgm", "frame_0002.pgm"]
    text = (out / "config.txt").read_text()
    h = text.splitlines()[0].split("=")[1].strip()
    assert all(frameio.read_sidecar(p)["config_hash"] == h for p in paths)
    assert frameio.read_frame(paths[0]).metadata["seed"] == 9

    csv = tmp_path / "a.csv"
    assert main(["analyze", "--frames", str(out), "--out", str(csv)]) == 0
    rows = frameio.read_csv(csv)
    assert len(rows) == 3 and list(rows[0]) == ANALYZE_COLUMNS
    assert all(-1 <= float(r["c12_peak"]) <= 1 for r in rows)

    fr = frameio.read_frame(paths[0])
    h_blk, w_blk = fr.block_shape
    spec = f"2,2,{w_blk - 4},{h_blk - 4}"
    assert main(["analyze", "--frames", str(out), "--r1", spec, "--r2", "mirror",
                 "--out", str(csv)]) == 0


def test_simulate_is_deterministic(tmp_path, config):
    for d in ("a", "b"):
        main(["simulate", "--config", str(config), "--out", str(tmp_path / d), "--frames", "2"])
    for name in ("frame_0000.pgm", "frame_0001.pgm", "frame_0000.meta", "config.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_fit_sinh2_from_table(tmp_path):
    xs = np.linspace(0.2, 1.6, 8)
    rows = [{"power_MW": x, "mean_counts": y} for x, y in zip(xs, sinh2_model(xs, 31.48, 1.91))]
    src = tmp_path / "in.csv"
    frameio.write_csv(src, rows, ["power_MW", "mean_counts"])
    out = tmp_path / "fit.csv"
    assert main(["fit", "--model", "sinh2", "--in", str(src), "--out", str(out)]) == 0
    row = frameio.read_csv(out)[0]
    assert list(row) == FIT_COLUMNS
    assert row["param2"] == "sigma"
    assert float(row["value2"]) == pytest.approx(1.91, rel=5e-3)


def test_fit_with_errors_column(tmp_path):
    xs = np.array([0.8, 1.0, 1.2, 1.4])
    rows = [{"d": x, "r": 3.0 / x, "e": 0.1} for x in xs]
    src = tmp_path / "in.csv"
    frameio.write_csv(src, rows, ["d", "r", "e"])
    out = tmp_path / "fit.csv"
    assert main(["fit", "--model", "powerlaw", "--in", str(src), "--out", str(out),
                 "--yerr", "e"]) == 0
    row = frameio.read_csv(out)[0]
    assert float(row["value2"]) == pytest.approx(-1.0, abs=1e-9)


def test_sweep_command(tmp_path):
    cfg = tmp_path / "s.cfg"
    cfg.write_text(CONFIG + "sweep_kind = diameter\nsweep_diameter_mm = 1.0, 1.3\n")
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert len(frameio.read_csv(tmp_path / "o" / "sweep.csv")) == 2
    assert frameio.read_csv(tmp_path / "o" / "fits.csv")[0]["model"] == "powerlaw"


@pytest.mark.parametrize("text,category,code", [
    ("wp_mm = -1\n", "config", 3),
    ("wp_mm = 0.65\nbogus = 1\n", "config", 3),
])
def test_config_errors(tmp_path, capsys, text, category, code):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == code
    err = error_of(capsys)
    assert err["error"] == category and "line" in err["message"]


def test_missing_config(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "none.cfg"), "--out", "x"]) == 3
    assert error_of(capsys)["error"] == "config"


def test_integrity_error(tmp_path, config, capsys):
    out = tmp_path / "frames"
    main(["simulate", "--config", str(config), "--out", str(out), "--frames", "1"])
    p = out / "frame_0000.pgm"
    data = bytearray(p.read_bytes())
    data[-2] ^= 0x10
    p.write_bytes(bytes(data))
    assert main(["analyze", "--frames", str(out), "--out", str(tmp_path / "a.csv")]) == 5
    assert error_of(capsys)["error"] == "integrity"


def test_fit_errors(tmp_path, capsys):
    src = tmp_path / "in.csv"
    frameio.write_csv(src, [{"x": 1.0, "y": 2.0}, {"x": 1.0, "y": 3.0}], ["x", "y"])
    assert main(["fit", "--model", "linear", "--in", str(src), "--out",
                 str(tmp_path / "o.csv")]) == 7
    assert error_of(capsys)["error"].startswith("fit")
    assert main(["fit", "--model", "linear", "--in", str(src), "--x", "nope",
                 "--out", str(tmp_path / "o.csv")]) == 7


def test_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["fit", "--model", "cubic", "--in", "a", "--out", "b"])
    assert info.value.code == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "pdcspeckle", "analyze", "--frames",
                           str(tmp_path), "--out", str(tmp_path / "a.csv")],
                          capture_output=True, text=True)
    assert proc.returncode != 0
    assert "error" in json.loads(proc.stderr.strip())
