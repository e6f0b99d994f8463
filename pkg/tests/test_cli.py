"""End-to-end checks of the command-line surface: artifact formats, exit
codes, byte-stable reruns, and audit wiring."""

import json
from pathlib import Path

import numpy as np
import pytest

from ffcolor.cli import PALETTE, main, read_ppm, write_ppm
from ffcolor.field import LabelField
from ffcolor.lattice import Window
from ffcolor.reduction import MNet


COL3 = "3 2\n1 2\n1 3\n2 1\n2 3\n3 1\n3 2\n"
COL2 = "2 2\n1 2\n2 1\n"


def run(*argv):
    return main([str(a) for a in argv])


# -- pixmap round trip ---------------------------------------------------------

def test_ppm_roundtrip():
    rng = np.random.default_rng(0)
    for shape in ((1, 1), (7, 3), (40, 25)):
        grid = rng.integers(0, 6, size=shape)
        p = Path("/tmp/ffcolor-test-rt.ppm")
        write_ppm(p, grid)
        assert np.array_equal(read_ppm(p), grid)


def test_ppm_rejects_foreign_pixels(tmp_path):
    p = tmp_path / "x.ppm"
    write_ppm(p, np.ones((4, 4), dtype=int))
    raw = bytearray(p.read_bytes())
    raw[-3:] = b"\x01\x02\x03"
    p.write_bytes(bytes(raw))
    from ffcolor.cli import ConfigError
    with pytest.raises(ConfigError):
        read_ppm(p)


def test_ppm_1d_is_one_row_high(tmp_path):
    p = tmp_path / "line.ppm"
    write_ppm(p, np.array([1, 2, 3]))
    head = p.read_bytes().split(b"\n")[:2]
    assert head == [b"P6", b"3 1"]


# -- color ---------------------------------------------------------------------

def test_baseline4_image_has_exactly_four_pixel_values(tmp_path):
    out = tmp_path / "base"
    assert run("color", "--construction", "baseline4", "--d", "2",
               "--window", "0,0,256,256", "--seed", "7", "--out", out) == 0
    colors = read_ppm(tmp_path / "base.ppm")
    assert sorted(np.unique(colors)) == [1, 2, 3, 4]
    man = json.loads((tmp_path / "base.json").read_text())
    assert man["seed"] == 7 and man["construction"] == "baseline4"
    assert man["version"] and man["valid_fraction"] == 1.0


def test_same_command_twice_is_byte_identical(tmp_path):
    args = ("color", "--construction", "three2d", "--d", "2",
            "--window", "0,0,96,96", "--seed", "3", "--cap", "256")
    blobs = []
    for sub in ("a", "b"):
        out = tmp_path / sub / "run"
        assert run(*args, "--out", out) == 0
        blobs.append(tuple((out.parent / n).read_bytes() for n in
                           ("run.ppm", "run.json", "run.radii.csv")))
    assert blobs[0] == blobs[1]


def test_three2d_refuses_d3():
    assert run("color", "--construction", "three2d", "--d", "3",
               "--window", "0,0,0,8,8,8", "--seed", "1",
               "--out", "/tmp/ffcolor-test-no") == 2


def test_bad_window_string_is_config_error(tmp_path):
    assert run("color", "--construction", "baseline4", "--d", "2",
               "--window", "0,0,banana,8", "--out", tmp_path / "x") == 2
    assert run("color", "--construction", "baseline4", "--d", "2",
               "--window", "0,0,8", "--out", tmp_path / "x") == 2


def test_unknown_construction_exits_2(capsys):
    with pytest.raises(SystemExit) as e:
        run("color", "--construction", "pentagon", "--window", "0,0,8,8")
    assert e.value.code == 2


def test_radius_budget_exit_and_flagged_manifest(tmp_path):
    out = tmp_path / "bud"
    assert run("color", "--construction", "four", "--d", "2",
               "--window", "0,0,64,64", "--seed", "5", "--out", out,
               "--radius-budget", "1000") == 3
    man = json.loads((tmp_path / "bud.json").read_text())
    assert man["budget_exceeded"]["kind"] == "radius"
    assert man["budget_exceeded"]["limit"] == 1000
    assert not (tmp_path / "bud.ppm").exists()


def test_tower_d2_manifest_carries_color_counts(tmp_path):
    out = tmp_path / "tw"
    assert run("color", "--construction", "tower", "--d", "2",
               "--window", "0,0,64,64", "--seed", "2", "--out", out) == 0
    man = json.loads((tmp_path / "tw.json").read_text())
    ks = man["constants"]["n_k"]
    assert len(ks) == 3 and ks[0] > man["constants"]["delta"] ** 2
    counts = {int(k): v for k, v in man["color_counts"].items()}
    assert sum(counts.values()) == 64 * 64
    assert max(counts) <= 5


# -- verify ----------------------------------------------------------------------

def test_verify_passes_on_pipeline_output_and_fails_on_corruption(tmp_path):
    out = tmp_path / "f4"
    assert run("color", "--construction", "four", "--d", "2",
               "--window", "0,0,96,96", "--seed", "5", "--out", out) == 0
    img = tmp_path / "f4.ppm"
    assert run("verify", "--image", img, "--json", tmp_path / "rep.json") == 0
    rep = json.loads((tmp_path / "rep.json").read_text())
    assert rep["passed"] and rep["violations_total"] == 0

    colors = read_ppm(img)
    x, y = 40, 40
    colors[x, y] = colors[x + 1, y]
    bad = tmp_path / "bad.ppm"
    write_ppm(bad, colors)
    assert run("verify", "--image", bad, "--json", tmp_path / "bad.json") == 1
    rep = json.loads((tmp_path / "bad.json").read_text())
    assert rep["violations_total"] >= 1
    hits = {tuple(v["at"][0]) for v in rep["violations_sample"]}
    assert (x, y) in hits or (x + 1, y) in hits


def test_verify_three_coloring_checks_heights(tmp_path):
    out = tmp_path / "tg"
    assert run("color", "--construction", "threegen", "--d", "2",
               "--window", "0,0,300,300", "--seed", "3", "--maxlevel", "2",
               "--margin", "128", "--out", out) == 0
    assert run("verify", "--image", tmp_path / "tg.ppm",
               "--kind", "three-coloring") == 0


def test_verify_net_flags_covering_gap(tmp_path):
    f = LabelField(6)
    nw = MNet(1, 2, "l1", f).window(Window((0,), (400,)), f)
    core = ~nw.tainted
    ind = nw.indicator & core
    grid = np.where(ind, 1, 0)[core.nonzero()[0]]
    good = tmp_path / "net.ppm"
    write_ppm(good, grid)
    assert run("verify", "--image", good, "--kind", "net", "--m", "2") == 0
    pts = np.flatnonzero(grid)
    grid[pts[len(pts) // 2]] = 0
    bad = tmp_path / "gap.ppm"
    write_ppm(bad, grid)
    assert run("verify", "--image", bad, "--kind", "net", "--m", "2") == 1


# -- stats -----------------------------------------------------------------------

def test_stats_survival_is_nonincreasing_with_censor_marker(tmp_path):
    out = tmp_path / "b4.csv"
    assert run("stats", "--construction", "baseline4", "--samples", "300",
               "--cap", "64", "--seed", "3", "--out", out,
               "--plot", tmp_path / "pts.csv") == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "r,count_gt,total,survival"
    surv = [float(ln.split(",")[3]) for ln in lines[1:]]
    assert all(a >= b for a, b in zip(surv, surv[1:]))
    assert lines[-1].startswith(">64,")
    pts = (tmp_path / "pts.csv").read_text().splitlines()
    assert pts[0] == "r,survival" and len(pts) > 3


def test_stats_threegen_is_fully_censored_at_desk_caps(tmp_path):
    out = tmp_path / "tg.csv"
    assert run("stats", "--construction", "threegen", "--samples", "3",
               "--cap", "256", "--seed", "1", "--out", out) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[-1] == ">256,3,3,1"


def test_stats_rerun_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert run("stats", "--construction", "tower", "--d", "1",
                   "--samples", "100", "--seed", "4", "--out", out) == 0
    assert a.read_bytes() == b.read_bytes()


# -- sft -------------------------------------------------------------------------

def test_sft_classify_text(tmp_path, capsys):
    s3 = tmp_path / "c3.txt"
    s3.write_text(COL3)
    assert run("sft", "classify", s3) == 0
    assert capsys.readouterr().out.strip() == "non-lattice, w=(1,2), gcd=1"
    s2 = tmp_path / "c2.txt"
    s2.write_text(COL2)
    assert run("sft", "classify", s2) == 0
    assert capsys.readouterr().out.strip() == "lattice"


def test_sft_generate_writes_members_and_refuses_lattice(tmp_path):
    s3 = tmp_path / "c3.txt"
    s3.write_text(COL3)
    out = tmp_path / "run.txt"
    assert run("sft", "generate", s3, "--length", "5000", "--seed", "9",
               "--out", out) == 0
    letters = [int(x) for x in out.read_text().split()]
    assert len(letters) == 5000
    assert all(a != b for a, b in zip(letters, letters[1:]))

    again = tmp_path / "run2.txt"
    assert run("sft", "generate", s3, "--length", "5000", "--seed", "9",
               "--out", again) == 0
    assert out.read_bytes() == again.read_bytes()

    s2 = tmp_path / "c2.txt"
    s2.write_text(COL2)
    assert run("sft", "generate", s2, "--length", "10", "--seed", "1",
               "--out", tmp_path / "no.txt") == 4
    assert not (tmp_path / "no.txt").exists()


def test_sft_missing_specfile_is_config_error(tmp_path):
    assert run("sft", "classify", tmp_path / "absent.txt") == 2


def test_palette_is_injective():
    assert len({PALETTE[k] for k in PALETTE}) == len(PALETTE)
