import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from tvtomo.service import create_app

CONFIG = {
    "grid": {"dims": [16, 16, 16]},
    "geometry": {"num_angles": 7, "angle_min": -60.0, "angle_max": 60.0,
                 "psf_sigma": 0.6},
    "phantom": {"kind": "balls", "count": 3, "size_range": [3.0, 5.0],
                "contrast_range": [1.0, 1.5], "seed": 5},
    "noise": {"dose_per_pixel": 30.0, "seed": 3},
    "rule": {"diameters": [2.0, 3.0], "translations": 25, "seed": 9},
    "solver": {"multipliers": [1.0], "max_iters": 25},
    "analysis": {"threshold": 0.5},
}


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


def post(client, path, ws, **extra):
    body = {"workspace": str(ws), "config": CONFIG, **extra}
    return client.post(path, json=body)


def test_health(client):
    r = client.get("/health")
    assert r.status_code == 200
    doc = r.json()
    assert doc["status"] == "ok"
    assert doc["version"]


def test_pipeline_endpoints(client, tmp_path):
    for path in ("/phantom", "/simulate", "/choose", "/reconstruct", "/analyze"):
        r = post(client, path, tmp_path)
        assert r.status_code == 200, (path, r.text)
        doc = r.json()
        assert doc["ok"] is True
        assert doc["summary"]["command"] == path.strip("/")
    assert (tmp_path / "hit_table.json").exists()


def test_significance_endpoint(client, tmp_path):
    for path in ("/phantom", "/simulate", "/choose", "/reconstruct"):
        assert post(client, path, tmp_path).status_code == 200

    from tvtomo.analysis import connected_components
    from tvtomo.fileio import read_volume, write_volume
    from tvtomo.grid import Volume

    rec = read_volume(tmp_path / "recon_00")
    comps = connected_components(rec, 0.5, 6)
    sizes = [c.size for c in comps.components]
    keep = comps.components[int(np.argmax(sizes))]
    flat = np.zeros(rec.num_voxels)
    flat[keep] = rec.flat()[keep]
    write_volume(Volume(np.ascontiguousarray(flat.reshape(rec.dims, order="F")),
                        rec.voxel_size, rec.origin), tmp_path / "feature")

    r = post(client, "/significance", tmp_path, feature="feature")
    assert r.status_code == 200, r.text
    doc = r.json()["summary"]
    assert doc["s_lambda"] > 0
    assert 0.0 <= doc["tail_probability"] <= 2.0


def test_validation_error_maps_to_422(client, tmp_path):
    r = post(client, "/analyze", tmp_path)
    assert r.status_code == 422
    doc = r.json()
    assert doc["error"]["category"] == "validation"


def test_format_error_maps_to_422(client, tmp_path):
    bad = {k: dict(v) for k, v in CONFIG.items()}
    bad["grid"] = {"dims": [16, 16]}
    r = client.post("/phantom", json={"workspace": str(tmp_path), "config": bad})
    assert r.status_code == 422
    doc = r.json()
    assert doc["error"]["category"] == "format"
    assert "grid.dims" in doc["error"]["message"]


def test_capacity_error_maps_to_413(client, tmp_path):
    bad = {k: dict(v) for k, v in CONFIG.items()}
    bad["phantom"] = {"kind": "balls", "count": 500, "size_range": [6.0, 8.0],
                      "contrast_range": [1.0, 1.0], "seed": 0}
    r = client.post("/phantom", json={"workspace": str(tmp_path), "config": bad})
    assert r.status_code == 413
    assert r.json()["error"]["category"] == "capacity"


def test_extra_fields_rejected(client, tmp_path):
    r = client.post("/phantom", json={"workspace": str(tmp_path),
                                      "config": CONFIG, "bogus": 1})
    assert r.status_code == 422


def test_config_xor_config_path(client, tmp_path):
    r = client.post("/phantom", json={"workspace": str(tmp_path)})
    assert r.status_code == 422
    cfg_file = tmp_path / "run.json"
    cfg_file.write_text(json.dumps(CONFIG))
    r = client.post("/phantom", json={"workspace": str(tmp_path),
                                      "config": CONFIG,
                                      "config_path": str(cfg_file)})
    assert r.status_code == 422


def test_config_path_toml(client, tmp_path):
    toml_text = """
[grid]
dims = [16, 16, 16]

[geometry]
num_angles = 7
angle_min = -60.0
angle_max = 60.0

[phantom]
count = 3
size_range = [3.0, 5.0]
contrast_range = [1.0, 1.5]

[noise]
dose_per_pixel = 30.0
"""
    p = tmp_path / "run.toml"
    p.write_text(toml_text)
    r = client.post("/phantom", json={"workspace": str(tmp_path),
                                      "config_path": str(p)})
    assert r.status_code == 200, r.text


def test_seed_override_via_request(client, tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    a.mkdir()
    b.mkdir()
    assert post(client, "/phantom", a, seed=77).status_code == 200
    assert post(client, "/phantom", b, seed=78).status_code == 200
    ra = (a / "phantom.raw").read_bytes()
    rb = (b / "phantom.raw").read_bytes()
    assert ra != rb
