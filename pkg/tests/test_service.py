"""HTTP annotation API: lifecycle, validation, label hygiene, equivalence."""

import json

import pytest
from fastapi.testclient import TestClient

from failure_scout.data import SyntheticSpec, generate_synthetic, load_dataset, save_dataset
from failure_scout.engine import OracleAnnotator, SessionConfig, run_session
from failure_scout.service import create_app

SPEC = SyntheticSpec(n=60, d=4, n_classes=2, n_patterns=2, pattern_size=6,
                     noise_misclassified=6, cluster_spread=0.5,
                     cluster_separation=10.0, seed=17)

CREATE = dict(theta=0.25, batch_size=5, m=3, knn=5, budget=0.5, seed=0,
              strategy="DS")


@pytest.fixture(scope="module")
def data_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("svc") / "svc.jsonl"
    save_dataset(generate_synthetic(SPEC), path)
    return path


@pytest.fixture()
def client():
    return TestClient(create_app())


def create_session(client, data_path, **overrides):
    body = {"dataset_path": str(data_path), **CREATE, **overrides}
    resp = client.post("/sessions", json=body)
    assert resp.status_code == 201, resp.text
    return resp.json()


def assert_no_true_labels(payload):
    text = json.dumps(payload)
    assert "true_label" not in text


def test_create_and_read(client, data_path):
    created = create_session(client, data_path)
    assert created["phase"] == "awaiting_labels"
    assert len(created["batch"]) == 5
    for item in created["batch"]:
        assert set(item) == {"id", "pseudolabel", "display"}
    assert_no_true_labels(created)

    state = client.get(f"/sessions/{created['session_id']}").json()
    assert state["phase"] == "awaiting_labels"
    assert state["queried_count"] == 0
    assert state["max_queries"] == 30
    assert [b["id"] for b in state["pending_batch"]] == \
        [b["id"] for b in created["batch"]]
    assert_no_true_labels(state)


def test_unknown_session(client):
    assert client.get("/sessions/nope").status_code == 404
    assert client.post("/sessions/nope/labels", json={"labels": []}).status_code == 404
    assert client.delete("/sessions/nope").status_code == 404


def test_create_rejects_missing_file(client, tmp_path):
    resp = client.post("/sessions", json={"dataset_path": str(tmp_path / "no.jsonl"),
                                          **CREATE})
    assert resp.status_code == 400
    assert "no.jsonl" in resp.json()["detail"]


def test_partial_submission_names_missing_ids(client, data_path):
    created = create_session(client, data_path)
    batch = [b["id"] for b in created["batch"]]
    labels = [{"id": i, "true_label": 0} for i in batch[:-1]]
    resp = client.post(f"/sessions/{created['session_id']}/labels",
                       json={"labels": labels})
    assert resp.status_code == 422
    assert str(batch[-1]) in resp.json()["detail"]


def test_unexpected_and_duplicate_ids_rejected(client, data_path):
    created = create_session(client, data_path)
    sid = created["session_id"]
    batch = [b["id"] for b in created["batch"]]
    outside = next(i for i in range(SPEC.n) if i not in batch)
    labels = [{"id": i, "true_label": 0} for i in batch[:-1]]
    resp = client.post(f"/sessions/{sid}/labels",
                       json={"labels": labels + [{"id": outside, "true_label": 0}]})
    assert resp.status_code == 422
    assert "unexpected" in resp.json()["detail"]
    resp = client.post(f"/sessions/{sid}/labels",
                       json={"labels": [{"id": batch[0], "true_label": 0}] * 5})
    assert resp.status_code == 422


def test_label_range_checked(client, data_path):
    created = create_session(client, data_path)
    labels = [{"id": b["id"], "true_label": 9} for b in created["batch"]]
    resp = client.post(f"/sessions/{created['session_id']}/labels",
                       json={"labels": labels})
    assert resp.status_code == 422


def drive_to_completion(client, data_path, truth_labels, **overrides):
    created = create_session(client, data_path, **overrides)
    sid = created["session_id"]
    batch = [b["id"] for b in created["batch"]]
    responses = []
    while batch:
        labels = [{"id": i, "true_label": int(truth_labels[i])} for i in batch]
        resp = client.post(f"/sessions/{sid}/labels", json={"labels": labels})
        assert resp.status_code == 200, resp.text
        payload = resp.json()
        assert_no_true_labels(payload)
        responses.append(payload)
        batch = [b["id"] for b in payload["batch"]]
    assert responses[-1]["phase"] == "finished"
    return sid, responses


def test_full_session_and_engine_equivalence(client, data_path):
    ds = load_dataset(data_path, require_true_labels=True)
    truth_labels = ds.true_labels()
    sid, responses = drive_to_completion(client, data_path, truth_labels)

    cfg = SessionConfig(batch_size=CREATE["batch_size"], budget=CREATE["budget"],
                        theta=CREATE["theta"], m_threshold=CREATE["m"],
                        k_nn=CREATE["knn"], seed=CREATE["seed"], strategy="DS")
    headless = run_session(ds, None, cfg, OracleAnnotator(ds))

    assert len(responses) == len(headless.rounds)
    for resp, log in zip(responses, headless.rounds):
        assert resp["queried_count"] == log.queried_cum
        assert resp["new_confirmed"] == [list(p) for p in log.new_patterns]

    state = client.get(f"/sessions/{sid}").json()
    api_patterns = [tuple(p["members"]) for p in state["confirmed_patterns"]]
    engine_patterns = [m for _, _, m in headless.confirmations()]
    assert api_patterns == engine_patterns
    assert state["queried_count"] == headless.queried_total


def test_pattern_confirmed_through_api(client, data_path):
    ds = load_dataset(data_path, require_true_labels=True)
    sid, responses = drive_to_completion(client, data_path, ds.true_labels(),
                                         budget=1.0)
    confirmed = [p for r in responses for p in r["new_confirmed"]]
    assert confirmed, "full-budget session should confirm at least one pattern"
    assert all(len(p) >= CREATE["m"] for p in confirmed)


def test_finished_session_rejects_labels(client, data_path):
    ds = load_dataset(data_path, require_true_labels=True)
    sid, _ = drive_to_completion(client, data_path, ds.true_labels())
    resp = client.post(f"/sessions/{sid}/labels",
                       json={"labels": [{"id": 0, "true_label": 0}]})
    assert resp.status_code == 409


def test_delete_session(client, data_path):
    created = create_session(client, data_path)
    sid = created["session_id"]
    assert client.delete(f"/sessions/{sid}").status_code == 204
    assert client.get(f"/sessions/{sid}").status_code == 404


def test_round_snapshots_written(client, data_path, tmp_path):
    snap = tmp_path / "snaps"
    ds = load_dataset(data_path, require_true_labels=True)
    sid, responses = drive_to_completion(client, data_path, ds.true_labels(),
                                         snapshot_dir=str(snap))
    files = sorted(snap.glob(f"{sid}-round*.json"))
    assert len(files) == len(responses)
    first = json.loads(files[0].read_text())
    assert first["round"] == 0 and len(first["chosen"]) == 5
