"""HTTP facade: guideline listing, /check, /feedback, /metrics, replay."""

import json
import shutil
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from rxcritic.service_api import create_app

DATA = Path(__file__).resolve().parents[1] / "src" / "rxcritic" / "data"

RECORD = json.loads((DATA / "demo" / "patient_sim001.json").read_text())


@pytest.fixture()
def kb_dir(tmp_path):
    d = tmp_path / "kb"
    d.mkdir()
    shutil.copy(DATA / "dyslipaemia_like.gdl", d / "dyslipaemia_like.gdl")
    return d


@pytest.fixture()
def client(kb_dir, tmp_path):
    app = create_app(kb_dir, tmp_path / "feedback.jsonl")
    return TestClient(app)


def test_guidelines_listing(client):
    body = client.get("/guidelines").json()
    assert len(body) == 1
    entry = body[0]
    assert entry["name"] == "dyslipaemia_like"
    assert entry["counts"] == {
        "criteria": 28,
        "treatments": 15,
        "recommendations": 17,
        "rules": 73,
    }
    assert entry["fingerprint"]


def test_empty_server_lists_nothing(tmp_path):
    empty = tmp_path / "none"
    empty.mkdir()
    client = TestClient(create_app(empty, tmp_path / "log.jsonl"))
    assert client.get("/guidelines").json() == []


def test_two_kbs_sorted_by_name(kb_dir, tmp_path):
    shutil.copy(DATA / "conflict_pair" / "cv_risk_additive.gdl", kb_dir / "additive.gdl")
    client = TestClient(create_app(kb_dir, tmp_path / "log.jsonl"))
    names = [entry["name"] for entry in client.get("/guidelines").json()]
    assert names == sorted(names) == ["cv_risk_additive", "dyslipaemia_like"]


def _check(client, prescription_items, record=RECORD, fingerprint=None):
    body = {
        "guideline": "dyslipaemia_like",
        "record": record,
        "prescription": {"items": prescription_items},
    }
    if fingerprint is not None:
        body["fingerprint"] = fingerprint
    return client.post("/check", json=body)


def test_check_criticizes_second_line_drug(client):
    response = _check(client, [{"treatment": "ezetimibe_10"}])
    assert response.status_code == 200
    body = response.json()
    assert body["verdict"]["status"] == "criticized"
    (criticism,) = body["verdict"]["criticisms"]
    assert criticism["ctype"] == "not_first_line"
    assert criticism["proposals"] == ["simvastatin_40"]
    assert body["verdict_id"]


def test_check_is_200_when_silent_and_pure(client):
    first = _check(client, [{"treatment": "simvastatin_40"}])
    second = _check(client, [{"treatment": "simvastatin_40"}])
    assert first.status_code == second.status_code == 200
    assert first.json()["verdict"] == second.json()["verdict"]


def test_unknown_guideline_404(client):
    response = client.post(
        "/check",
        json={"guideline": "ghost", "record": RECORD, "prescription": {"items": []}},
    )
    assert response.status_code == 404


def test_schema_violation_400(client):
    bad = {**RECORD, "facts": {**RECORD["facts"], "ldl_cholesterol": "high"}}
    response = _check(client, [{"treatment": "simvastatin_40"}], record=bad)
    assert response.status_code == 400
    assert "ldl_cholesterol" in response.json()["detail"]


def test_stale_fingerprint_409(client):
    response = _check(client, [{"treatment": "simvastatin_40"}], fingerprint="0" * 64)
    assert response.status_code == 409


def test_missing_form_facts_reported_with_hints(client):
    record = {
        "patient_id": "p-form",
        "facts": {
            k: v
            for k, v in RECORD["facts"].items()
            if k
            not in (
                "dyslipaemia_type", "cv_risk", "diet_status", "smoker",
                "family_early_mi", "alcohol_abuse", "myopathy_history",
                "statin_intolerance", "sedentary",
            )
        },
    }
    response = _check(client, [{"treatment": "simvastatin_40"}], record=record)
    body = response.json()
    assert response.status_code == 200
    assert body["verdict"]["status"] == "silent"
    assert body["verdict"]["missing_data"]
    hinted = [h["criterion"] for h in body["form_hints"]]
    assert hinted[0] == "dyslipaemia_type"
    enum_hint = body["form_hints"][0]
    assert enum_hint["kind"] == "enum" and len(enum_hint["options"]) == 3


def _submit_feedback(client, verdict_id, **overrides):
    payload = {
        "verdict_id": verdict_id,
        "expected_alert": True,
        "justified": True,
        "explanations_appropriate": True,
    }
    payload.update(overrides)
    return client.post("/feedback", json=payload)


def test_feedback_and_metrics_flow(client):
    raised = _check(client, [{"treatment": "ezetimibe_10"}]).json()
    assert _submit_feedback(client, raised["verdict_id"]).status_code == 200
    metrics = client.get("/metrics").json()
    assert metrics["matrix"] == {"tp": 1, "fp": 0, "tn": 0, "fn": 0}

    silent = _check(client, [{"treatment": "simvastatin_40"}]).json()
    assert _submit_feedback(
        client, silent["verdict_id"], expected_alert=False, justified=True,
        explanations_appropriate=None,
    ).status_code == 200
    metrics = client.get("/metrics").json()
    assert metrics["matrix"] == {"tp": 1, "fp": 0, "tn": 1, "fn": 0}
    assert metrics["appropriateness"] == 1.0


def test_feedback_unknown_verdict_404(client):
    assert _submit_feedback(client, "nope").status_code == 404


def test_feedback_incomplete_answers_422(client):
    raised = _check(client, [{"treatment": "ezetimibe_10"}]).json()
    response = client.post(
        "/feedback", json={"verdict_id": raised["verdict_id"], "expected_alert": True}
    )
    assert response.status_code == 422  # pydantic: justified missing
    response = _submit_feedback(
        client, raised["verdict_id"], explanations_appropriate=None
    )
    assert response.status_code == 422  # raised alerts need the appropriateness answer


def test_zero_feedback_metrics_undefined(client):
    metrics = client.get("/metrics").json()
    assert metrics["matrix"] == {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
    assert metrics["sensitivity"] is None
    assert metrics["appropriateness"] is None


def test_replaying_the_log_reproduces_metrics(kb_dir, tmp_path):
    log = tmp_path / "feedback.jsonl"
    client = TestClient(create_app(kb_dir, log))
    raised = _check(client, [{"treatment": "ezetimibe_10"}]).json()
    _submit_feedback(client, raised["verdict_id"])
    silent = _check(client, [{"treatment": "simvastatin_40"}]).json()
    _submit_feedback(client, silent["verdict_id"], expected_alert=False,
                     explanations_appropriate=None)
    before = client.get("/metrics").json()

    replayed = TestClient(create_app(kb_dir, log))
    assert replayed.get("/metrics").json() == before


def test_kb_reload_invalidates_stale_verdicts(kb_dir, tmp_path):
    app = create_app(kb_dir, tmp_path / "feedback.jsonl")
    client = TestClient(app)
    raised = _check(client, [{"treatment": "ezetimibe_10"}]).json()

    source = (kb_dir / "dyslipaemia_like.gdl").read_text()
    (kb_dir / "dyslipaemia_like.gdl").write_text(
        source.replace("strength A;", "strength B;", 1)
    )
    app.state.rxcritic.reload_kbs()

    assert _submit_feedback(client, raised["verdict_id"]).status_code == 409
    fresh = client.get("/guidelines").json()[0]["fingerprint"]
    assert fresh != raised["fingerprint"]
    assert _check(client, [{"treatment": "simvastatin_40"}],
                  fingerprint=raised["fingerprint"]).status_code == 409
