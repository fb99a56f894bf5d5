import json

import numpy as np
import pytest

from tvtomo.cli import main

CONFIG = """
[grid]
dims = [16, 16, 16]

[geometry]
num_angles = 7
angle_min = -60.0
angle_max = 60.0
psf_sigma = 0.6

[phantom]
kind = "balls"
count = 3
size_range = [3.0, 5.0]
contrast_range = [1.0, 1.5]
seed = 5

[noise]
dose_per_pixel = 30.0
seed = 3

[rule]
diameters = [2.0, 3.0]
translations = 25
seed = 9

[solver]
multipliers = [1.0]
max_iters = 25

[analysis]
threshold = 0.5
"""


@pytest.fixture()
def workspace(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text(CONFIG)
    return tmp_path, cfg


def run_cli(capsys, *args):
    code = main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_full_pipeline(workspace, capsys):
    ws, cfg = workspace
    for cmd in ("phantom", "simulate", "choose", "reconstruct", "analyze"):
        code, out, err = run_cli(capsys, cmd, "--config", cfg, "--out", ws)
        assert code == 0, (cmd, err)
        doc = json.loads(out)
        assert doc["command"] == cmd

    assert (ws / "phantom.raw").exists()
    assert (ws / "data.raw").exists()
    assert (ws / "choose_report.json").exists()
    assert (ws / "recon_00.raw").exists()
    assert (ws / "hit_table.csv").exists()
    assert (ws / "ideal_rule.csv").exists()

    table = json.loads((ws / "hit_table.json").read_text())
    assert table["rows"][0]["true_hits"] >= 2


def test_significance_subcommand(workspace, capsys):
    ws, cfg = workspace
    for cmd in ("phantom", "simulate", "choose", "reconstruct"):
        code, _, _ = run_cli(capsys, cmd, "--config", cfg, "--out", ws)
        assert code == 0

    # carve the strongest component out of the reconstruction as the feature
    from tvtomo.analysis import connected_components
    from tvtomo.fileio import read_volume, write_volume
    from tvtomo.grid import Volume

    rec = read_volume(ws / "recon_00")
    comps = connected_components(rec, 0.5, 6)
    assert comps.count >= 1
    sizes = [c.size for c in comps.components]
    keep = comps.components[int(np.argmax(sizes))]
    flat = np.zeros(rec.num_voxels)
    flat[keep] = rec.flat()[keep]
    feat = Volume(np.ascontiguousarray(flat.reshape(rec.dims, order="F")),
                  rec.voxel_size, rec.origin)
    write_volume(feat, ws / "feature")

    code, out, err = run_cli(capsys, "significance", "--config", cfg,
                             "--out", ws, "--feature", "feature")
    assert code == 0, err
    doc = json.loads(out)
    assert doc["s_lambda"] > 0
    assert 0.0 <= doc["tail_probability"] <= 2.0
    saved = json.loads((ws / "significance.json").read_text())
    assert saved["s_lambda"] == doc["s_lambda"]


def test_error_goes_to_stderr_as_json(workspace, capsys):
    ws, cfg = workspace
    code, out, err = run_cli(capsys, "analyze", "--config", cfg, "--out", ws)
    assert code == 1
    assert out == ""
    doc = json.loads(err)
    assert doc["error"]["category"] == "validation"
    assert "run" in doc["error"]["message"]


def test_bad_config_reports_path(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[grid]\ndims = [4, 4]\n")
    code, out, err = run_cli(capsys, "phantom", "--config", cfg, "--out", tmp_path)
    assert code == 1
    doc = json.loads(err)
    assert doc["error"]["category"] == "format"
    assert "grid.dims" in doc["error"]["message"]


def test_seed_override_changes_outputs(workspace, capsys, tmp_path):
    ws, cfg = workspace
    a = tmp_path / "a"
    b = tmp_path / "b"
    c = tmp_path / "c"
    for out_dir, seed in ((a, "1"), (b, "1"), (c, "2")):
        out_dir.mkdir()
        code, _, _ = run_cli(capsys, "phantom", "--config", cfg,
                             "--out", out_dir, "--seed", seed)
        assert code == 0
    assert (a / "phantom.raw").read_bytes() == (b / "phantom.raw").read_bytes()
    assert (a / "phantom.raw").read_bytes() != (c / "phantom.raw").read_bytes()


def test_reruns_bitwise_identical(workspace, capsys):
    ws, cfg = workspace
    run_cli(capsys, "phantom", "--config", cfg, "--out", ws)
    run_cli(capsys, "simulate", "--config", cfg, "--out", ws)
    first = (ws / "data.raw").read_bytes()
    first_hdr = (ws / "data.json").read_bytes()
    run_cli(capsys, "simulate", "--config", cfg, "--out", ws)
    assert (ws / "data.raw").read_bytes() == first
    assert (ws / "data.json").read_bytes() == first_hdr


def test_explicit_lambdas_flag(workspace, capsys):
    ws, cfg = workspace
    run_cli(capsys, "phantom", "--config", cfg, "--out", ws)
    run_cli(capsys, "simulate", "--config", cfg, "--out", ws)
    code, out, _ = run_cli(capsys, "reconstruct", "--config", cfg, "--out", ws,
                           "--lambdas", "0.05,0.2")
    assert code == 0
    doc = json.loads(out)
    assert [it["lambda"] for it in doc["items"]] == [0.05, 0.2]
    assert (ws / "recon_01.raw").exists()


def test_unexpected_arguments_rejected(capsys):
    with pytest.raises(SystemExit):
        main(["frobnicate", "--config", "x"])
