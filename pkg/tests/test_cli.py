import csv
import json

import pytest

from sepmotion import cli
from sepmotion.errors import NumericalError

FAST = "[grid]\nspacing = 0.1\n"

CASES = {
    "exact": (FAST + "[exact]\nk = 3\n", ["exact.csv"]),
    "clamped-scan": ("[clamped-scan]\nn_points = 31\n", ["clamped_scan.csv", "couplings.csv"]),
    "channels": (FAST + "[channels]\nn_channels = 4\nk = 2\n", ["channels.csv", "couplings.csv"]),
    "hunter": (FAST + "[hunter]\nstates = 0 1\nn_channels = 4\n",
               ["hunter_state0.csv", "hunter_state1.csv", "spikes.csv"]),
    "partition": ("[partition]\ncount = 10\n", ["partition.csv"]),
    "gcm": (FAST + "[gcm]\nn_centers = 9\n", ["gcm_weights.csv", "gcm.csv"]),
    "microscope": ("", ["microscope.csv"]),
    "rate": ("[rate]\nbetas = 1 2\n", ["rate.csv"]),
    "diagnostics": ("[diagnostics]\nbox_sizes = 5 6 7\n", ["diagnostics.csv"]),
}


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize("command", sorted(CASES))
def test_command_writes_outputs(command, tmp_path):
    text, files = CASES[command]
    out = tmp_path / "out"
    assert cli.run(command, text, out, threads=2) == 0
    assert sorted(p.name for p in out.iterdir()) == sorted(files + ["manifest.json"])
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == command and man["outputs"] == files
    assert set(man) >= {"config", "version", "backend", "threads", "wall_time_s"}
    assert man["config"]["model"]["kappa"] == 0.5
    for f in files:
        assert len(_rows(out / f)) > 0


def test_channels_bracket_exact(tmp_path):
    assert cli.run("channels", FAST + "[channels]\nn_channels = 6\nk = 1\n", tmp_path) == 0
    rows = {r["mode"]: r for r in _rows(tmp_path / "channels.csv")}
    exact = float(rows["full"]["exact"])
    assert float(rows["crude"]["energy"]) < exact < float(rows["diagonal_only"]["energy"])
    assert abs(float(rows["full"]["energy"]) - exact) < 1e-3


def test_input_errors_exit_2(tmp_path, capsys):
    out = tmp_path / "bad"
    assert cli.run("exact", "[model]\na = 2.0\n", out) == 2
    assert not out.exists()
    assert cli.run("exact", "[model]\nkappa = -1\n", out) == 2
    assert cli.run("exact", "[model]\nmass = 3\n", out) == 2
    assert cli.run("exact", "[nonsense]\nx = 1\n", out) == 2
    assert cli.run("exact", "[model]\nkappa = banana\n", out) == 2
    assert cli.run("exact", FAST, out, threads=0) == 2
    assert "input error" in capsys.readouterr().err
    assert cli.main(["exact", "--config", str(tmp_path / "missing.ini"), "--output", str(out)]) == 2


def test_numerical_error_exit_3_cleans_up(tmp_path, monkeypatch):
    out = tmp_path / "run"
    out.mkdir()
    keep = out / "notes.txt"
    keep.write_text("mine")

    def boom(cfg, out_dir, threads):
        (out_dir / "partial.csv").write_text("x\n")
        raise NumericalError("synthetic failure")

    monkeypatch.setitem(cli.RUNNERS, "exact", boom)
    assert cli.run("exact", None, out) == 3
    assert sorted(p.name for p in out.iterdir()) == ["notes.txt"]
    assert keep.read_text() == "mine"


def test_output_path_is_file(tmp_path):
    f = tmp_path / "f"
    f.write_text("")
    assert cli.run("microscope", None, f) == 2


@pytest.mark.parametrize("command", ["channels", "rate", "diagnostics", "partition"])
def test_thread_count_does_not_change_output(command, tmp_path):
    text, files = CASES[command]
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.run(command, text, a, threads=1) == 0
    assert cli.run(command, text, b, threads=4) == 0
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_main_entry(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[microscope]\nlevels = 0\n")
    assert cli.main(["microscope", "--config", str(ini), "--output", str(tmp_path / "o")]) == 0
    assert len(_rows(tmp_path / "o" / "microscope.csv")) == 1
