import json
import math

import numpy as np
import pytest

import diffeo_op as d


def test_polygon_mesh_and_map():
    poly, params = d.sample_polygon("pentagon", 3)
    assert poly.shape == (5, 2) and len(params) == 5
    v, t = d.mesh_polygon(poly, 0.5)
    assert v.shape[1] == 2 and t.shape[1] == 3
    m = d.harmonic_map(v, t)
    assert m["fold_count"] == 0
    assert m["residual"] < 1e-8
    f = m["shared_coords"]
    assert f.min() >= -1e-12 and f.max() <= 1 + 1e-12
    for corner in ([0, 0], [1, 0], [1, 1], [0, 1]):
        assert np.min(np.linalg.norm(f - corner, axis=1)) == 0.0


def test_darcy_solution_is_positive_inside():
    v, t = d.mesh_polygon(np.array([[0, 0], [10, 0], [9, 6], [5, 10], [1, 6]], float), 0.8)
    u, residual = d.solve_darcy(v, t, 0.5, 0.5)
    assert residual < 1e-10
    assert u.min() >= -1e-12 and u.max() > 0


def test_generate_sample_shapes():
    s = d.generate_sample({"resolution": 16, "h": 0.5, "seed": 2}, 0)
    assert s["param_field"].shape == (16, 16)
    assert s["physics_points"].shape == (16, 16, 2)
    assert s["solution_field"].shape == (16, 16)
    # The lattice includes the boundary, where u vanishes.
    assert np.abs(s["solution_field"][0, :]).max() < 1e-9
    again = d.generate_sample({"resolution": 16, "h": 0.5, "seed": 2}, 0)
    assert np.array_equal(s["solution_field"], again["solution_field"])


def test_ncc_and_dds():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(8, 9, 2))
    b = rng.normal(size=(8, 9, 2))
    assert d.ncc(a, a) == pytest.approx(1.0, abs=1e-12)
    assert d.ncc(a, -a) == pytest.approx(-1.0, abs=1e-12)
    assert d.ncc(a, b) == pytest.approx(d.ncc(b, a), abs=1e-15)
    assert d.dds(a, [a, 3 * a + 1]) == pytest.approx(1.0, abs=1e-12)


def test_volume_map():
    r = d.certify_pocket_part(samples=2000, seed=1)
    assert r["min_det"] > 0 and r["max_fd_rel_error"] < 1e-6
    p = np.array([[100.0, 50.0, 5.0], [300.0, 120.0, 20.0]])
    q = d.volume_parameterize(p)
    assert np.allclose(d.volume_parameterize(q, inverse=True), p, atol=1e-10)


def test_errors_are_typed():
    with pytest.raises(d.DiffeoError):
        d.sample_polygon("heptagon", 1)
    with pytest.raises(ValueError):
        d.mesh_polygon(np.zeros((4, 3)), 0.1)


def test_pipeline_round_trip(tmp_path):
    data = tmp_path / "data"
    summary = d.gen(out=data, n=4, resolution=16, h=0.6, seed=5)
    assert summary["n"] == 4
    model = {"fourier_layers": 1, "width": 4, "modes": [4, 4], "proj_hidden": 8, "epochs": 2, "batch_size": 2}
    t = d.train(data=data, out=tmp_path / "run", n_train=3, model=model)
    assert t["epochs_completed"] == 2
    e = d.evaluate(checkpoint=tmp_path / "run" / "checkpoint.bin", data=data, out=tmp_path / "ev")
    assert e["n"] == 4 and math.isfinite(e["mean_rel_l2"])
    pred = d.predict(str(tmp_path / "run" / "checkpoint.bin"), str(data), 1)
    assert pred.shape == (16, 16)
    r = d.dds_report(train_data=data, candidates=data, out=tmp_path / "dds")
    assert r["n"] == 4
    written = json.loads((tmp_path / "ev" / "eval.json").read_text())
    assert written["n"] == 4
