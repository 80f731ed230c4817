"""Coded patient records, prescriptions, and the drug-code dictionary.

Records hold typed facts keyed by criterion id (the engine does not care
whether a fact came from the record, the inclusion form, or the lab feed;
only the form workflow does) plus a treatment history with outcomes.
Documents are JSON with ISO-8601 dates; the drug dictionary is a CSV mapping
raw prescription codes to guideline treatments.
"""

from __future__ import annotations

import csv
import datetime
import io
import json
from dataclasses import dataclass
from typing import Mapping

from .gdl_parser import fingerprint_of
from .kb_model import (
    Criterion,
    CriterionKind,
    FactSource,
    Guideline,
    HistoryEntry,
    Intensity,
    KBError,
    Outcome,
    SchemaError,
)

DICTIONARY_HEADER = ("code", "treatment_id", "drug_class")


class UnknownDrugCodesError(KBError):
    """One or more prescription codes missing from the dictionary."""

    def __init__(self, codes: list[str]):
        self.codes = codes
        super().__init__("unknown drug code(s): " + ", ".join(codes))


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    facts: Mapping[str, object]
    history: tuple[HistoryEntry, ...] = ()

    def __post_init__(self) -> None:
        dates = [e.start_date for e in self.history if e.start_date is not None]
        if dates != sorted(dates):
            raise KBError("history dates must be non-decreasing")
        seen_later: set[str] = set()
        for entry in reversed(self.history):
            if entry.outcome is Outcome.ONGOING and entry.target in seen_later:
                raise KBError(
                    f"ongoing entry for {entry.target!r} is not the latest one"
                )
            seen_later.add(entry.target)


@dataclass(frozen=True)
class PrescriptionItem:
    """One prescribed drug: either a declared treatment id or a raw code."""

    treatment: str | None = None
    code: str | None = None
    intensity: Intensity | None = None

    def __post_init__(self) -> None:
        if (self.treatment is None) == (self.code is None):
            raise KBError("prescription item needs exactly one of treatment or code")


@dataclass(frozen=True)
class Prescription:
    items: tuple[PrescriptionItem, ...]


@dataclass(frozen=True)
class ResolvedItem:
    treatment_id: str
    drug_class: str
    intensity: Intensity | None = None


@dataclass(frozen=True)
class ResolvedPrescription:
    """Prescription with every item mapped to a declared treatment, pinned to
    the guideline it was resolved against."""

    items: tuple[ResolvedItem, ...]
    fingerprint: str


@dataclass(frozen=True)
class DrugDictionary:
    """Raw drug code -> (treatment id, drug class)."""

    entries: Mapping[str, tuple[str, str]]

    @classmethod
    def from_csv(cls, text: str) -> "DrugDictionary":
        reader = csv.reader(io.StringIO(text))
        try:
            header = tuple(next(reader))
        except StopIteration:
            raise SchemaError("drug dictionary is empty") from None
        if header != DICTIONARY_HEADER:
            raise SchemaError(
                f"drug dictionary header must be {','.join(DICTIONARY_HEADER)}"
            )
        entries: dict[str, tuple[str, str]] = {}
        for row in reader:
            if not row:
                continue
            if len(row) != 3:
                raise SchemaError(f"malformed dictionary row: {row!r}")
            code, treatment_id, drug_class = (cell.strip() for cell in row)
            if code in entries:
                raise SchemaError(f"duplicate drug code {code!r}")
            entries[code] = (treatment_id, drug_class)
        return cls(entries)

    def lookup(self, code: str) -> tuple[str, str] | None:
        return self.entries.get(code)


# ---------------------------------------------------------------------------
# Record loading
# ---------------------------------------------------------------------------

def _check_fact(criterion: Criterion, value: object) -> object:
    if criterion.kind is CriterionKind.FLAG:
        if not isinstance(value, bool):
            raise SchemaError(f"fact {criterion.id!r} must be true or false, got {value!r}")
        return value
    if criterion.kind is CriterionKind.ENUM:
        if not isinstance(value, str) or value not in criterion.values:
            raise SchemaError(
                f"bad-enum-value: fact {criterion.id!r} must be one of "
                f"{list(criterion.values)}, got {value!r}"
            )
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"fact {criterion.id!r} must be a number, got {value!r}")
    return float(value)


def _parse_history_entry(raw: Mapping, g: Guideline) -> HistoryEntry:
    target = raw.get("target")
    if not isinstance(target, str):
        raise SchemaError(f"history entry needs a target treatment or class: {raw!r}")
    if g.has_treatment(target):
        covers = frozenset((target,))
    elif target in g.drug_classes:
        covers = frozenset(t.id for t in g.treatments if t.drug_class == target)
    else:
        raise SchemaError(f"history target {target!r} is not a treatment or drug class")
    try:
        outcome = Outcome(raw.get("outcome"))
    except ValueError:
        raise SchemaError(f"bad history outcome {raw.get('outcome')!r}") from None
    start_date = None
    if raw.get("start_date") is not None:
        try:
            start_date = datetime.date.fromisoformat(raw["start_date"])
        except (TypeError, ValueError):
            raise SchemaError(f"bad ISO date {raw.get('start_date')!r}") from None
    return HistoryEntry(target, outcome, start_date=start_date, covers=covers)


def load_record(document: str | Mapping, g: Guideline) -> PatientRecord:
    """Parse and type-check a patient record document against `g`.

    Unknown criterion ids and ill-typed values raise :class:`SchemaError`
    naming the offending field.
    """
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"record is not valid JSON: {exc}") from None
    if not isinstance(document, Mapping):
        raise SchemaError("record document must be a JSON object")
    patient_id = document.get("patient_id", "")
    if not isinstance(patient_id, str) or not patient_id:
        raise SchemaError("record needs a non-empty patient_id")
    raw_facts = document.get("facts", {})
    if not isinstance(raw_facts, Mapping):
        raise SchemaError("facts must be an object keyed by criterion id")
    facts: dict[str, object] = {}
    for key, value in raw_facts.items():
        if not g.has_criterion(key):
            raise SchemaError(f"unknown criterion {key!r} in record facts")
        facts[key] = _check_fact(g.criterion(key), value)
    raw_history = document.get("history", [])
    if not isinstance(raw_history, list):
        raise SchemaError("history must be a list")
    history = tuple(_parse_history_entry(e, g) for e in raw_history)
    return PatientRecord(patient_id, facts, history)


def serialize_record(record: PatientRecord, g: Guideline) -> str:
    """Canonical JSON for a record; facts follow declaration order."""
    facts = {c.id: record.facts[c.id] for c in g.criteria if c.id in record.facts}
    doc = {
        "patient_id": record.patient_id,
        "facts": facts,
        "history": [
            {
                "target": e.target,
                "outcome": e.outcome.value,
                "start_date": e.start_date.isoformat() if e.start_date else None,
            }
            for e in record.history
        ],
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


# ---------------------------------------------------------------------------
# Inclusion form
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FormField:
    """One inclusion-form input: the criterion and its value domain."""

    criterion_id: str
    kind: CriterionKind
    options: tuple[str, ...] = ()  # enum values
    unit: str = ""                 # quantity unit label


def form_schema(g: Guideline, record: PatientRecord) -> list[FormField]:
    """Form-source criteria still missing from the record, declaration order."""
    fields = []
    for c in g.criteria:
        if c.source is not FactSource.FORM or record.facts.get(c.id) is not None:
            continue
        fields.append(FormField(c.id, c.kind, options=c.values, unit=c.unit))
    return fields


# ---------------------------------------------------------------------------
# Prescription resolution
# ---------------------------------------------------------------------------

def parse_prescription(document: str | Mapping) -> Prescription:
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"prescription is not valid JSON: {exc}") from None
    if not isinstance(document, Mapping) or not isinstance(document.get("items"), list):
        raise SchemaError("prescription document needs an items list")
    items = []
    for raw in document["items"]:
        if not isinstance(raw, Mapping):
            raise SchemaError(f"malformed prescription item: {raw!r}")
        intensity = None
        if raw.get("intensity") is not None:
            try:
                intensity = Intensity(raw["intensity"])
            except ValueError:
                raise SchemaError(f"bad intensity {raw['intensity']!r}") from None
        items.append(
            PrescriptionItem(
                treatment=raw.get("treatment"),
                code=raw.get("code"),
                intensity=intensity,
            )
        )
    return Prescription(tuple(items))


def resolve_prescription(
    p: Prescription,
    dictionary: DrugDictionary | None,
    g: Guideline,
) -> ResolvedPrescription:
    """Map every item to a declared treatment.

    Unresolvable codes are collected and reported together rather than
    failing on the first.
    """
    resolved: list[ResolvedItem] = []
    unknown: list[str] = []
    for item in p.items:
        if item.treatment is not None:
            if not g.has_treatment(item.treatment):
                unknown.append(item.treatment)
                continue
            treatment = g.treatment(item.treatment)
            resolved.append(ResolvedItem(treatment.id, treatment.drug_class, item.intensity))
            continue
        hit = dictionary.lookup(item.code) if dictionary else None  # type: ignore[arg-type]
        if hit is None:
            unknown.append(item.code)  # type: ignore[arg-type]
            continue
        treatment_id, drug_class = hit
        if not g.has_treatment(treatment_id):
            unknown.append(item.code)  # type: ignore[arg-type]
            continue
        declared = g.treatment(treatment_id)
        if declared.drug_class != drug_class:
            raise SchemaError(
                f"dictionary maps {item.code!r} to class {drug_class!r} but the "
                f"guideline declares {treatment_id!r} as {declared.drug_class!r}"
            )
        resolved.append(ResolvedItem(declared.id, declared.drug_class, item.intensity))
    if unknown:
        raise UnknownDrugCodesError(unknown)
    return ResolvedPrescription(tuple(resolved), fingerprint_of(g))
