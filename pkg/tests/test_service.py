"""Service tests: every endpoint against the library it wraps."""
import math

import numpy as np
import pytest
from fastapi.testclient import TestClient

from truncvol import (
    CmseProblem,
    FaJumpLaw,
    Merton,
    SamplingGrid,
    rv,
    simulate,
    solve_levy_mse,
    solve_root_F,
    solve_vn,
    solve_wh,
)
from truncvol.service import create_app

H_5MIN = 1.0 / (252 * 6.5 * 12)

MERTON_JSON = {
    "kind": "merton",
    "sigma": 0.4,
    "jumps": {"intensity": 100.0, "jump_mean": 0.0,
              "jump_std": 0.021398024625545645},
}
GRID_JSON = {"t_horizon": 1.0 / 12.0, "n": 128}


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


def test_health(client):
    body = client.get("/health").json()
    assert body["status"] == "ok"


def test_solve_vn_matches_library(client):
    r = client.post("/solve/vn", json={"n": 100})
    assert r.status_code == 200
    assert r.json()["value"] == pytest.approx(solve_vn(100), rel=1e-14)


def test_solve_vn_rejects_small_n(client):
    assert client.post("/solve/vn", json={"n": 1}).status_code == 422


def test_solve_wh_matches_library(client):
    r = client.post("/solve/wh", json={"h": H_5MIN})
    body = r.json()
    assert body["w"] == pytest.approx(solve_wh(H_5MIN), rel=1e-14)
    assert body["sqrt_log_inv_h"] == pytest.approx(
        math.sqrt(math.log(1 / H_5MIN)), rel=1e-14)


def test_root_f_matches_library(client):
    payload = {"sigma": 0.4, "grid": {"t_horizon": 1.0 / 12.0, "n": 64},
               "jumps": [0.0] * 60 + [0.05, -0.04, 0.03, 0.0]}
    r = client.post("/solve/root-f", json=payload)
    assert r.status_code == 200
    problem = CmseProblem(0.4, np.array(payload["jumps"]),
                          SamplingGrid(1.0 / 12.0, 64))
    assert r.json()["threshold"] == pytest.approx(solve_root_F(problem), rel=1e-12)


def test_root_f_bad_bracket_is_422(client):
    payload = {"sigma": 0.4, "grid": {"t_horizon": 1.0 / 12.0, "n": 16},
               "config": {"bracket_lo": 1e-8, "bracket_hi": 2e-8}}
    r = client.post("/solve/root-f", json=payload)
    assert r.status_code == 422
    assert r.json()["detail"]["error"] == "no_sign_change"


def test_levy_mse_matches_library(client):
    payload = {"sigma": 0.4, "grid": {"t_horizon": 1.0 / 12.0, "n": 1638},
               "law": {"intensity": 100.0, "jump_mean": 0.0,
                       "jump_std": 0.021398024625545645}}
    r = client.post("/solve/levy-mse", json=payload)
    expected = solve_levy_mse(
        0.4, SamplingGrid(1.0 / 12.0, 1638),
        FaJumpLaw(100.0, 0.0, 0.021398024625545645))
    assert r.json()["threshold"] == pytest.approx(expected, rel=1e-12)


def test_simulate_matches_library_and_is_deterministic(client):
    payload = {"model": MERTON_JSON, "grid": GRID_JSON, "seed": 777}
    a = client.post("/simulate", json=payload).json()
    b = client.post("/simulate", json=payload).json()
    assert a == b
    path = simulate(Merton(0.4, FaJumpLaw(100.0, 0.0, 0.021398024625545645)),
                    SamplingGrid(1.0 / 12.0, 128), 777)
    assert np.allclose(a["dx"], path.dx, rtol=0, atol=0)
    assert a["iv_total"] == path.iv_total


def test_estimate_trv_infinite_threshold_equals_rv(client):
    rng = np.random.default_rng(5)
    dx = rng.normal(0, 0.01, 200).tolist()
    r = client.post("/estimate", json={
        "dx": dx, "t_horizon": 1.0 / 12.0, "estimator": "trv", "eps": 1e300})
    assert r.json()["iv_hat"] == pytest.approx(rv(np.array(dx)), rel=1e-15)
    assert r.json()["kept"] == 200


def test_estimate_registry_estimator(client):
    payload = {"model": MERTON_JSON, "grid": GRID_JSON, "seed": 3}
    sim = client.post("/simulate", json=payload).json()
    r = client.post("/estimate", json={
        "dx": sim["dx"], "t_horizon": 1.0 / 12.0, "estimator": "2mc_k",
        "m": sim["m"], "dn": sim["dn"], "iv_i": sim["iv_i"]})
    body = r.json()
    assert body["iterations"] >= 1
    assert body["loss"] is not None


def test_estimate_oracle_requires_ground_truth(client):
    r = client.post("/estimate", json={
        "dx": [0.1, 0.2], "t_horizon": 1.0, "estimator": "orc"})
    assert r.status_code == 422
    assert r.json()["detail"]["error"] == "missing_ground_truth"


def test_estimate_unknown_estimator(client):
    r = client.post("/estimate", json={
        "dx": [0.1, 0.2], "t_horizon": 1.0, "estimator": "nope"})
    assert r.status_code == 422


def test_experiment_runs_and_is_deterministic(client):
    payload = {"model": MERTON_JSON, "grid": GRID_JSON, "n_paths": 5,
               "base_seed": 31, "estimators": ["rv", "2mc_k", "orc"]}
    a = client.post("/experiment", json=payload).json()
    b = client.post("/experiment", json={**payload, "threads": 3}).json()
    assert a == b
    assert [row["estimator"] for row in a["rows"]] == ["rv", "2mc_k", "orc"]
    assert a["n_paths"] == 5


def test_experiment_caps_paths(client):
    payload = {"model": MERTON_JSON, "grid": GRID_JSON, "n_paths": 10**9,
               "base_seed": 1}
    assert client.post("/experiment", json=payload).status_code == 422


def test_vn_curve_endpoint(client):
    r = client.post("/vn-curve", json={"n_values": [100, 1000, 10000]})
    points = r.json()["points"]
    assert [p[0] for p in points] == [100, 1000, 10000]
    assert points[0][1] == pytest.approx(solve_vn(100), rel=1e-14)


def test_model_discriminator_rejects_unknown_kind(client):
    bad = {"model": {"kind": "bogus", "sigma": 1.0}, "grid": GRID_JSON, "seed": 0}
    assert client.post("/simulate", json=bad).status_code == 422
