"""HTTP facade for guideline loading, prescription checking, and feedback.

The server holds compiled rule sets for every `.gdl` file in its knowledge
directory.  `/check` is pure (criticism is data, so it answers 200 whether
silent or criticized); `/feedback` appends to a line-delimited log whose
replay reproduces `/metrics` exactly.  Every response carries the rule-set
fingerprint, and stale references are refused with 409 after a KB reload.
"""

from __future__ import annotations

import datetime
import json
import os
import threading
import uuid
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .critique_engine import critique, verdict_to_doc
from .eval_verify import (
    GoldLabel,
    UndefinedMetricError,
    classify_attempt,
    matrix_from_cells,
    metrics,
)
from .gdl_parser import parse_guideline
from .kb_model import SchemaError
from .patient_model import (
    UnknownDrugCodesError,
    form_schema,
    load_record,
    parse_prescription,
    resolve_prescription,
)
from .rule_compiler import RuleSet, compile_guideline

KB_DIR_ENV = "RXCRITIC_KB_DIR"


@dataclass
class _StoredVerdict:
    guideline: str
    fingerprint: str
    raised: bool
    patient_id: str
    prescription: list[str]


class CheckRequest(BaseModel):
    guideline: str
    record: dict
    prescription: dict
    fingerprint: str | None = None


class FeedbackRequest(BaseModel):
    verdict_id: str
    expected_alert: bool
    justified: bool
    explanations_appropriate: bool | None = None
    comment: str = Field(default="", max_length=4000)


class ServerState:
    """Knowledge bases, issued verdicts, and the append-only feedback log."""

    def __init__(self, kb_dir: Path, log_path: Path):
        self.kb_dir = kb_dir
        self.log_path = log_path
        self.rulesets: dict[str, RuleSet] = {}
        self.verdicts: dict[str, _StoredVerdict] = {}
        self.feedback: list[dict] = []
        self._append_lock = threading.Lock()
        self.reload_kbs()
        self._replay_log()

    def reload_kbs(self) -> None:
        rulesets: dict[str, RuleSet] = {}
        for path in sorted(self.kb_dir.glob("*.gdl")):
            guideline = parse_guideline(path.read_text(encoding="utf-8"))
            rulesets[guideline.name] = compile_guideline(guideline)
        self.rulesets = rulesets

    def _replay_log(self) -> None:
        if not self.log_path.exists():
            return
        with self.log_path.open(encoding="utf-8") as f:
            self.feedback = [json.loads(line) for line in f if line.strip()]

    def append_feedback(self, entry: dict) -> None:
        with self._append_lock:
            self.log_path.parent.mkdir(parents=True, exist_ok=True)
            with self.log_path.open("a", encoding="utf-8") as f:
                f.write(json.dumps(entry, ensure_ascii=False) + "\n")
            self.feedback.append(entry)


def create_app(kb_dir: Path | str, log_path: Path | str, static_dir: Path | str | None = None) -> FastAPI:
    state = ServerState(Path(kb_dir), Path(log_path))
    app = FastAPI(title="rxcritic", version="0.1.0")
    app.state.rxcritic = state

    @app.get("/guidelines")
    def list_guidelines():
        out = []
        for name in sorted(state.rulesets):
            rs = state.rulesets[name]
            g = rs.guideline
            out.append(
                {
                    "name": name,
                    "strategy": g.strategy.value,
                    "counts": {
                        "criteria": len(g.criteria),
                        "treatments": len(g.treatments),
                        "recommendations": len(g.recommendations),
                        "rules": len(rs.rules),
                    },
                    "fingerprint": rs.fingerprint,
                }
            )
        return out

    @app.post("/check")
    def check(request: CheckRequest):
        rs = state.rulesets.get(request.guideline)
        if rs is None:
            raise HTTPException(404, f"unknown guideline {request.guideline!r}")
        if request.fingerprint is not None and request.fingerprint != rs.fingerprint:
            raise HTTPException(409, "guideline fingerprint changed; reload the knowledge base")
        try:
            record = load_record(request.record, rs.guideline)
            prescription = parse_prescription(request.prescription)
            resolved = resolve_prescription(prescription, _dictionary(), rs.guideline)
        except (SchemaError, UnknownDrugCodesError) as exc:
            raise HTTPException(400, str(exc)) from None
        verdict = critique(rs, record, resolved)
        verdict_id = uuid.uuid4().hex
        state.verdicts[verdict_id] = _StoredVerdict(
            guideline=request.guideline,
            fingerprint=rs.fingerprint,
            raised=verdict.raised,
            patient_id=record.patient_id,
            prescription=[item.treatment_id for item in resolved.items],
        )
        hints = [
            {
                "criterion": field.criterion_id,
                "kind": field.kind.value,
                "options": list(field.options),
                "unit": field.unit,
            }
            for field in form_schema(rs.guideline, record)
        ]
        return {
            "verdict_id": verdict_id,
            "fingerprint": rs.fingerprint,
            "verdict": verdict_to_doc(verdict),
            "form_hints": hints,
        }

    @app.post("/feedback")
    def feedback(request: FeedbackRequest):
        stored = state.verdicts.get(request.verdict_id)
        if stored is None:
            raise HTTPException(404, f"unknown verdict id {request.verdict_id!r}")
        current = state.rulesets.get(stored.guideline)
        if current is None or current.fingerprint != stored.fingerprint:
            raise HTTPException(409, "verdict refers to a reloaded knowledge base")
        if stored.raised and request.explanations_appropriate is None:
            return JSONResponse(
                status_code=422,
                content={"detail": "explanations_appropriate is required when an alert was raised"},
            )
        entry = {
            "feedback_id": uuid.uuid4().hex,
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "verdict_id": request.verdict_id,
            "guideline": stored.guideline,
            "fingerprint": stored.fingerprint,
            "patient_id": stored.patient_id,
            "prescription": stored.prescription,
            "alert_raised": stored.raised,  # recorded server-side, never client-supplied
            "expected_alert": request.expected_alert,
            "justified": request.justified,
            "explanations_appropriate": request.explanations_appropriate,
            "comment": request.comment,
        }
        state.append_feedback(entry)
        return {"feedback_id": entry["feedback_id"]}

    @app.get("/metrics")
    def live_metrics():
        cells = []
        appropriate = 0
        for entry in state.feedback:
            gold = GoldLabel(
                should_alert=entry["expected_alert"],
                alert_justified_if_raised=entry["justified"],
                explanation_appropriate=(
                    entry["explanations_appropriate"] if entry["expected_alert"] else None
                ),
            )
            cell = classify_attempt(entry["alert_raised"], gold)
            cells.append(cell)
            if cell == "tn" or (cell == "tp" and gold.explanation_appropriate is True):
                appropriate += 1
        matrix = matrix_from_cells(cells)
        doc = {
            "matrix": {"tp": matrix.tp, "fp": matrix.fp, "tn": matrix.tn, "fn": matrix.fn},
            "total": matrix.total,
            "sensitivity": None,
            "specificity": None,
            "appropriateness": None,
        }
        try:
            m = metrics(matrix)
            doc["sensitivity"] = {"value": m.sensitivity.value, "half_width": m.sensitivity.half_width}
            doc["specificity"] = {"value": m.specificity.value, "half_width": m.specificity.half_width}
        except UndefinedMetricError:
            pass
        if matrix.total:
            doc["appropriateness"] = appropriate / matrix.total
        return doc

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


def _dictionary():
    from .bundle import bundled_drug_dictionary

    return bundled_drug_dictionary()


def resolve_kb_dir(cli_value: str | None) -> Path:
    """`--kb` wins; fall back to the RXCRITIC_KB_DIR environment variable."""
    if cli_value:
        return Path(cli_value)
    env = os.environ.get(KB_DIR_ENV)
    if env:
        return Path(env)
    raise SystemExit(f"no knowledge directory: pass --kb or set {KB_DIR_ENV}")
