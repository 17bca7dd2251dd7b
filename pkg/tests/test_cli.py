import json
import os
import subprocess
import sys

import numpy as np
import pytest

from cslsel.arraystore import read_array, write_array
from cslsel.cli import main


@pytest.fixture
def synth(tmp_path):
    p, g = tmp_path / "p.npy", tmp_path / "g.npy"
    assert main(["synth", "--height", "32", "--width", "40", "--seed", "3", "--out-probs", str(p), "--out-gt", str(g)]) == 0
    return p, g


def _select(tmp_path, probs, *extra):
    w, lab, m = tmp_path / "w.npy", tmp_path / "l.npy", tmp_path / "sel.json"
    rc = main(["select", "--probs", str(probs), "--out-weights", str(w), "--out-labels", str(lab), "--manifest", str(m), *extra])
    return rc, w, lab, m


def test_select_outputs(tmp_path, synth):
    rc, w, lab, m = _select(tmp_path, synth[0])
    assert rc == 0
    weights, labels = read_array(w), read_array(lab)
    assert weights.shape == labels.shape == (32, 40)
    assert weights.dtype == np.float64 and labels.dtype == np.int32
    assert weights.min() >= 0 and weights.max() <= 1
    assert labels.min() >= 0 and labels.max() < 8
    man = json.loads(m.read_text())
    assert man["subcommand"] == "select"
    assert man["params"]["alpha"] == 8.0
    assert man["params"]["hard_rule"] == "and"
    assert man["params"]["metric"] == "residual-dispersion"
    assert set(man["outputs"]) == {"weights", "labels"}
    assert man["wall_time_s"] >= 0 and man["tool_version"]


def test_select_flags(tmp_path, synth):
    for extra in (["--metric", "entropy", "--normalize"], ["--hard-rule", "or", "--alpha", "4"], ["--class-specific"]):
        assert _select(tmp_path, synth[0], *extra)[0] == 0


def test_select_fallback_warns(tmp_path, capsys):
    a = np.random.default_rng(0).uniform(0.5, 1.0, size=(6, 6))
    p = tmp_path / "k2.npy"
    write_array(np.stack([a, 1 - a]), p)
    rc, *_ = _select(tmp_path, p)
    assert rc == 0
    assert "warning" in capsys.readouterr().err


def test_bad_input_exit_2_and_no_files(tmp_path, capsys):
    p = tmp_path / "bad.npy"
    write_array(np.full((3, 4, 4), 0.5), p)  # sums to 1.5
    rc, w, lab, m = _select(tmp_path, p)
    assert rc == 2
    assert "error" in capsys.readouterr().err
    assert not w.exists() and not lab.exists() and not m.exists()
    garbage = tmp_path / "garbage.npy"
    garbage.write_bytes(b"hello")
    assert _select(tmp_path, garbage)[0] == 2
    assert main(["select", "--probs", str(p)]) == 2  # missing required flags


def test_missing_input_is_io_error(tmp_path):
    assert _select(tmp_path, tmp_path / "nope.npy")[0] == 3


def test_unwritable_output_is_io_error(tmp_path, synth):
    out = tmp_path / "no-dir" / "w.npy"
    rc = main(["select", "--probs", str(synth[0]), "--out-weights", str(out), "--out-labels", str(tmp_path / "l.npy")])
    assert rc == 3
    assert not (tmp_path / "l.npy").exists()


def test_mask(tmp_path):
    H, W = 64, 64
    weights = np.ones((H, W))
    weights[:, :32] = 0.5
    img = np.random.default_rng(0).random((3, H, W)).astype(np.float32) + 1
    wp, ip = tmp_path / "w.npy", tmp_path / "i.npy"
    write_array(weights, wp)
    write_array(img, ip)
    oi, om = tmp_path / "oi.npy", tmp_path / "om.npy"
    args = ["mask", "--weights", str(wp), "--image", str(ip), "--patch-size", "8", "--seed", "5", "--out-image", str(oi), "--out-mask", str(om)]
    assert main(args) == 0
    mask = read_array(om).astype(bool)
    assert read_array(om).dtype == np.uint8
    assert not mask[:, :32].any()
    out = read_array(oi)
    assert np.all(out[:, mask] == 0) and np.array_equal(out[:, ~mask], img[:, ~mask])
    first = om.read_bytes()
    assert main(args) == 0
    assert om.read_bytes() == first
    # ratio 0 leaves the image untouched
    assert main(args[:-4] + ["--ratio", "0", "--out-image", str(oi), "--out-mask", str(om)]) == 0
    assert read_array(oi).tobytes() == img.tobytes()
    # shape mismatch
    write_array(img[:, :10], ip)
    assert main(args) == 2


def test_seed_from_environment(tmp_path, monkeypatch):
    def run(name):
        p = tmp_path / f"{name}.npy"
        assert main(["synth", "--height", "8", "--width", "8", "--out-probs", str(p), "--out-gt", str(tmp_path / "g.npy"), "--manifest", str(tmp_path / f"{name}.json")]) == 0
        return p.read_bytes(), json.loads((tmp_path / f"{name}.json").read_text())

    monkeypatch.setenv("CSL_SEED", "17")
    a, man = run("a")
    assert man["seed"] == 17 and "17" in man["argv"]
    monkeypatch.delenv("CSL_SEED")
    b, man_b = run("b")
    assert man_b["seed"] == 0
    assert a != b
    monkeypatch.setenv("CSL_SEED", "x")
    assert main(["synth", "--out-probs", str(tmp_path / "c.npy"), "--out-gt", str(tmp_path / "g.npy")]) == 2


def test_eval_and_compare(tmp_path, synth, capsys):
    probs, gt = synth
    _, w, lab, _ = _select(tmp_path, probs)
    capsys.readouterr()
    assert main(["eval", "--weights", str(w), "--pred-labels", str(lab), "--gt", str(gt)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert 0 < rep["hard_sampling_rate"] < 1
    out = tmp_path / "cmp.json"
    rc = main(["compare", "--probs", str(probs), "--gt", str(gt), "--method", "thr:threshold:0.95", "--method", "csl:csl", "--out", str(out)])
    assert rc == 0
    table = json.loads(out.read_text())
    assert [m["name"] for m in table["methods"]] == ["csl", "thr"]
    assert main(["compare", "--probs", str(probs), "--gt", str(gt), "--method", "a:csl", "--format", "text"]) == 0
    assert main(["compare", "--probs", str(probs), "--gt", str(gt), "--method", "bogus"]) == 2
    assert main(["eval", "--weights", str(w), "--pred-labels", str(lab), "--gt", str(probs)]) == 2


def test_loss(tmp_path, capsys):
    p = np.full((2, 1, 1), 0.5)
    pp, tp, wp = tmp_path / "p.npy", tmp_path / "t.npy", tmp_path / "w.npy"
    write_array(p, pp)
    write_array(np.zeros((1, 1), np.int32), tp)
    write_array(np.ones((1, 1)), wp)
    capsys.readouterr()
    assert main(["loss", "--probs", str(pp), "--target", str(tp), "--weights", str(wp)]) == 0
    assert abs(float(capsys.readouterr().out) - np.log(2)) <= 1e-12
    assert main(["loss", "--probs", str(pp), "--target", str(tp), "--weights", str(wp), "--json", "--probs-masked", str(pp)]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["lambda1"] == 0.5 and d["lambda2"] == 0.5 and d["pixel_norm"] == "all_pixels"


def test_replay_check(tmp_path, synth, capsys):
    rc, w, lab, m = _select(tmp_path, synth[0])
    before = w.read_bytes()
    w.unlink()
    assert main(["replay", "--manifest", str(m), "--check"]) == 0
    assert w.read_bytes() == before
    # tamper with the recorded hash
    man = json.loads(m.read_text())
    man["outputs"]["weights"]["sha256"] = "0" * 64
    m.write_text(json.dumps(man))
    assert main(["replay", "--manifest", str(m), "--check"]) == 1
    m.write_text("{}")
    assert main(["replay", "--manifest", str(m)]) == 2


def test_console_entry_point(tmp_path):
    env = dict(os.environ, CSL_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-m", "cslsel", "--version"], capture_output=True, text=True, env=env)
    assert out.returncode == 0 and "cslsel" in out.stdout


def test_colliding_outputs_rejected(tmp_path, synth):
    w = tmp_path / "same.npy"
    rc = main(["select", "--probs", str(synth[0]), "--out-weights", str(w), "--out-labels", str(w)])
    assert rc == 2
    assert not w.exists()
