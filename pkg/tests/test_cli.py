import csv
import hashlib
import shutil
import subprocess
import sys

import numpy as np
import pytest

from hypradon import cli
from hypradon.io import read_rsg, write_rsg
from hypradon.kernel import QuadratureError

EVENTS_8HZ = "0.5 0.625 1.0 8\n0.9 0.5 1.0 8\n1.3 0.416667 1.0 8\n"


def run(*argv):
    return cli.main([str(a) for a in argv])


def synth(path, n, spec=None):
    d = 2.048 / n
    extra = ["--spec", spec] if spec else []
    assert run("synth", "-o", path, "--nt", n, "--dt", d, "--nx", n, "--dx", d, *extra) == 0


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "ev8.txt").write_text(EVENTS_8HZ)
    synth(root / "g64.rsg", 64, root / "ev8.txt")
    return root


def test_console_script_help():
    exe = shutil.which("hypradon")
    cmd = [exe] if exe else [sys.executable, "-m", "hypradon.cli"]
    res = subprocess.run(cmd + ["--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "forward" in res.stdout


@pytest.mark.parametrize("sub", list(cli.COMMANDS))
def test_subcommand_help(sub, capsys):
    assert run(sub, "--help") == 0
    assert "usage" in capsys.readouterr().out


@pytest.mark.parametrize("flags", [
    ["--splits", "x"], ["--splits", "1,-1"], ["--qmin", "0.9", "--qmax", "0.1"], ["--window-threshold", "1.5"],
    ["--oversample", "0.5"], ["--taumin", "100"], ["--ntau", "0"], ["--bogus"], ["--threads", "0"],
    ["--nq", "1"],
])
def test_invalid_flags_exit_2_without_output(work, flags, capsys):
    out = work / "never.rsg"
    assert run("forward", work / "g64.rsg", "-o", out, *flags) == 2
    assert not out.exists()
    assert capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["render", "{in}", "-o", "{out}", "--clip", "10"],
    ["interpolate", "{in}", "--prefix", "{out}", "--missing", "1.0"],
    ["synth", "-o", "{out}", "--noise", "-1"],
    ["synth", "-o", "{out}", "--nt", "64", "--dt", "0.032", "--nx", "64", "--dx", "0.032"],
])
def test_invalid_settings_exit_2(work, argv):
    out = work / "bad_out"
    args = [a.format(**{"in": work / "g64.rsg", "out": out}) for a in argv]
    assert run(*args) == 2
    assert not list(work.glob("bad_out*"))


def test_missing_and_corrupt_input_exit_3(work, tmp_path):
    assert run("forward", tmp_path / "nope.rsg", "-o", tmp_path / "x.rsg") == 3
    bad = tmp_path / "bad.rsg"
    bad.write_bytes((work / "g64.rsg").read_bytes()[:-3])
    assert run("forward", bad, "-o", tmp_path / "x.rsg") == 3
    assert not (tmp_path / "x.rsg").exists()
    ragged = tmp_path / "r.csv"
    ragged.write_text("1,2\n3\n")
    assert run("render", ragged, "-o", tmp_path / "x.pgm") == 3


def test_numerical_failure_exit_4(work, tmp_path, monkeypatch):
    def boom(*a, **k):
        raise QuadratureError("did not converge")

    monkeypatch.setattr(cli, "plan", boom)
    assert run("forward", work / "g64.rsg", "-o", tmp_path / "x.rsg") == 4
    assert not (tmp_path / "x.rsg").exists()


def test_synth_is_bit_exact(tmp_path):
    synth(tmp_path / "a.rsg", 128)
    synth(tmp_path / "b.rsg", 128)
    a, b = (tmp_path / "a.rsg").read_bytes(), (tmp_path / "b.rsg").read_bytes()
    assert a == b
    assert hashlib.sha256(a).hexdigest() == hashlib.sha256(b).hexdigest()
    grid, data = read_rsg(tmp_path / "a.rsg")
    assert grid.shape == (128, 128) and data.dtype == np.float32


def test_render_is_deterministic(work, tmp_path):
    assert run("render", work / "g64.rsg", "-o", tmp_path / "a.pgm") == 0
    assert run("render", work / "g64.rsg", "-o", tmp_path / "b.pgm", "--clip", "99") == 0
    a = (tmp_path / "a.pgm").read_bytes()
    assert a == (tmp_path / "b.pgm").read_bytes()
    assert a.startswith(b"P5\n64 64\n65535\n") and len(a) == len(b"P5\n64 64\n65535\n") + 2 * 64 * 64


def test_adjoint_of_zero_panel_is_zero(work, tmp_path):
    assert run("forward", work / "g64.rsg", "-o", tmp_path / "p.rsg") == 0
    grid, _ = read_rsg(tmp_path / "p.rsg")
    write_rsg(tmp_path / "z.rsg", grid, np.zeros(grid.shape))
    for method in ("logpolar", "direct"):
        out = tmp_path / f"a_{method}.rsg"
        assert run("adjoint", tmp_path / "z.rsg", "--like", work / "g64.rsg", "-o", out, "--method", method) == 0
        g, d = read_rsg(out)
        assert g == read_rsg(work / "g64.rsg")[0] and not d.any()


def test_dottest_reports_small_discrepancy(capsys):
    assert run("dottest", "-n", "64") == 0
    err = capsys.readouterr().err
    value = float(err.split("dot_test_relative_discrepancy=")[1].split()[0])
    assert value <= 1e-10


def test_forward_methods_agree(tmp_path, capsys):
    (tmp_path / "ev8.txt").write_text(EVENTS_8HZ)
    synth(tmp_path / "g.rsg", 256, tmp_path / "ev8.txt")
    assert run("forward", tmp_path / "g.rsg", "-o", tmp_path / "lp.rsg") == 0
    assert run("forward", tmp_path / "g.rsg", "-o", tmp_path / "dr.rsg", "--method", "direct") == 0
    capsys.readouterr()
    assert run("compare", tmp_path / "lp.rsg", tmp_path / "dr.rsg") == 0
    err = capsys.readouterr().err
    value = float(err.split("normalized_max_error=")[1].split()[0])
    assert value <= 5e-3
    assert "relative_l2=" in err


def test_compare_rejects_shape_mismatch(work, tmp_path):
    synth(tmp_path / "g48.rsg", 48, work / "ev8.txt")
    assert run("compare", tmp_path / "g48.rsg", work / "g64.rsg") == 2


def test_demultiple_with_boundary_above_all_energy(work, tmp_path):
    mute = tmp_path / "mute.txt"
    mute.write_text("0.0 5.0\n3.0 5.0\n")
    prefix = tmp_path / "dm_"
    assert run("demultiple", work / "g64.rsg", "--mute", mute, "--prefix", prefix, "--iters", 3) == 0
    _, mult = read_rsg(f"{prefix}multiples.rsg")
    _, sub = read_rsg(f"{prefix}subtracted.rsg")
    _, orig = read_rsg(work / "g64.rsg")
    assert not mult.any()
    assert np.array_equal(sub, orig)
    _, panel = read_rsg(f"{prefix}panel.rsg")
    assert panel.any()


def test_interpolate_with_full_mask_and_with_mask_file(work, tmp_path, capsys):
    prefix = tmp_path / "ip_"
    assert run("interpolate", work / "g64.rsg", "--prefix", prefix, "--missing", 0.0, "--iters", 3,
               "--truth", work / "g64.rsg") == 0
    assert "masked_relative_l2" not in capsys.readouterr().err
    grid, _ = read_rsg(work / "g64.rsg")
    m = np.ones(grid.shape)
    m[:, ::2] = 0
    write_rsg(tmp_path / "m.rsg", grid, m)
    assert run("interpolate", work / "g64.rsg", "--prefix", prefix, "--mask", tmp_path / "m.rsg",
               "--iters", 3, "--truth", work / "g64.rsg") == 0
    assert "masked_relative_l2=" in capsys.readouterr().err
    g2, rec = read_rsg(f"{prefix}reconstructed.rsg")
    assert g2 == grid and rec[:, 0::2].any()


def test_bench_writes_csv(tmp_path):
    out = tmp_path / "bench.csv"
    assert run("bench", "--sizes", "16,32", "--repeats", 1, "--direct-max", 16, "-o", out) == 0
    rows = list(csv.DictReader(out.open()))
    assert list(rows[0]) == ["N", "method", "seconds", "ratio_vs_direct"]
    assert [(r["N"], r["method"]) for r in rows] == [("16", "logpolar"), ("16", "direct"),
                                                     ("32", "logpolar"), ("32", "direct")]
    assert float(rows[0]["seconds"]) > 0 and float(rows[0]["ratio_vs_direct"]) > 0
    assert rows[3]["seconds"] == "nan"


def test_thread_count_does_not_change_results(work, tmp_path):
    assert run("forward", work / "g64.rsg", "-o", tmp_path / "a.rsg", "--threads", 1) == 0
    assert run("--threads", 2, "forward", work / "g64.rsg", "-o", tmp_path / "b.rsg") == 0
    assert (tmp_path / "a.rsg").read_bytes() == (tmp_path / "b.rsg").read_bytes()


def test_stats_go_to_stderr(work, tmp_path, capsys):
    assert run("forward", work / "g64.rsg", "-o", tmp_path / "a.rsg", "--stats") == 0
    io = capsys.readouterr()
    assert io.out == ""
    lines = io.err.strip().splitlines()
    assert lines[0] == "stage,seconds"
    stages = {ln.split(",")[0] for ln in lines[1:]}
    assert {"total", "gridding", "fft", "interpolation"} <= stages
