"""Evaluate critiquing rules against a patient record and prescription.

Two routes produce a verdict:

* :func:`critique` runs the compiled rule set — the production path;
* :func:`interpret` computes the same decision directly from the guideline,
  with no rule machinery — the independent oracle used to validate compiled
  knowledge bases.

Both are permissive about missing data: a criticism is raised only when its
condition is definitely true, and facts that would let the engine decide are
surfaced in the verdict's `missing_data` so the physician can be asked.  The
two routes must agree on (status, multiset of (criticism type, target)) for
every patient and prescription; the verifier sweeps this exhaustively.
"""

from __future__ import annotations

import datetime
import enum
from dataclasses import dataclass, replace

from .gdl_parser import fingerprint_of
from .kb_model import (
    Criticism,
    CriticismType,
    Guideline,
    KBError,
    Recommendation,
    Truth,
    eval_condition,
    history_failed,
    kleene_and,
    kleene_not,
    kleene_or,
    unresolved_criteria,
)
from .patient_model import PatientRecord, ResolvedItem, ResolvedPrescription
from .rule_compiler import RuleSet


class FingerprintMismatchError(KBError):
    """The prescription was resolved against a different guideline revision."""


class VerdictStatus(enum.Enum):
    SILENT = "silent"
    CRITICIZED = "criticized"


@dataclass(frozen=True)
class Verdict:
    """What the physician sees: one top-severity criticism per criticized
    drug (lower-severity ones are retained in `secondary`), plus the facts
    that were missing while deciding."""

    status: VerdictStatus
    criticisms: tuple[Criticism, ...]
    secondary: tuple[Criticism, ...]
    missing_data: tuple[str, ...]
    fingerprint: str

    def __post_init__(self) -> None:
        silent = self.status is VerdictStatus.SILENT
        if silent != (not self.criticisms):
            raise KBError("verdict status must be silent exactly when no criticism holds")

    @property
    def raised(self) -> bool:
        return self.status is VerdictStatus.CRITICIZED


def comparison_key(verdict: Verdict) -> tuple[str, tuple[tuple[str, str], ...]]:
    """Projection the oracle-equivalence check compares."""
    pairs = sorted((c.ctype.value, c.target) for c in verdict.criticisms)
    return (verdict.status.value, tuple(pairs))


def _check_fingerprint(expected: str, got: str) -> None:
    if expected != got:
        raise FingerprintMismatchError(
            f"prescription resolved against fingerprint {got[:12]}…, "
            f"rules carry {expected[:12]}…"
        )


def _make_verdict(
    fired: dict[str, dict[CriticismType, Criticism]],
    missing: list[str],
    g: Guideline,
    fingerprint: str,
) -> Verdict:
    order = {c.id: i for i, c in enumerate(g.criteria)}
    missing_data = tuple(sorted(set(missing), key=lambda c: order.get(c, len(order))))
    top: list[Criticism] = []
    rest: list[Criticism] = []
    for target in fired:
        ranked = sorted(fired[target].values(), key=lambda c: c.ctype.severity)
        top.append(ranked[0])
        rest.extend(ranked[1:])
    sort_key = lambda c: (c.ctype.severity, c.target)
    top.sort(key=sort_key)
    rest.sort(key=sort_key)
    status = VerdictStatus.CRITICIZED if top else VerdictStatus.SILENT
    return Verdict(status, tuple(top), tuple(rest), missing_data, fingerprint)


# ---------------------------------------------------------------------------
# Rule route
# ---------------------------------------------------------------------------

def _refine_proposals(
    criticism: Criticism,
    item: ResolvedItem,
    g: Guideline,
    evaluate,
) -> Criticism:
    """Rebase the criticism onto the concrete prescribed drug and drop
    proposals that have failed or are contraindicated for this patient."""
    proposals = criticism.proposals
    if criticism.ctype in (CriticismType.NOT_RECOMMENDED, CriticismType.NOT_FIRST_LINE):
        kept = []
        for tid in proposals:
            if tid == item.treatment_id or evaluate.failed(tid):
                continue
            contra = g.treatment(tid).contraindication
            if contra is not None and evaluate(contra) is Truth.TRUE:
                continue
            kept.append(tid)
        proposals = tuple(kept)
    return replace(criticism, target=item.treatment_id, proposals=proposals)


class _Evaluator:
    """Facts+history bound evaluation with memoization over shared subtrees."""

    def __init__(self, record: PatientRecord, as_of, failure_window_days):
        self.facts = record.facts
        self.history = record.history
        self.as_of = as_of
        self.window = failure_window_days
        self._memo: dict = {}

    def __call__(self, expr) -> Truth:
        hit = self._memo.get(expr)
        if hit is None:
            hit = eval_condition(
                expr, self.facts, self.history,
                as_of=self.as_of, failure_window_days=self.window,
            )
            self._memo[expr] = hit
        return hit

    def failed(self, treatment_id: str) -> bool:
        return history_failed(
            self.history, treatment_id, as_of=self.as_of, failure_window_days=self.window
        )


def critique(
    rs: RuleSet,
    record: PatientRecord,
    prescription: ResolvedPrescription,
    *,
    as_of: datetime.date | None = None,
    failure_window_days: int | None = None,
) -> Verdict:
    """Run the compiled rules; a rule contributes a criticism exactly when its
    matcher matches a prescribed item and its condition is definitely true."""
    _check_fingerprint(rs.fingerprint, prescription.fingerprint)
    if not prescription.items:
        return _make_verdict({}, [], rs.guideline, rs.fingerprint)
    evaluate = _Evaluator(record, as_of, failure_window_days)
    fired: dict[str, dict[CriticismType, Criticism]] = {}
    missing: list[str] = []
    for item in prescription.items:
        for rule in rs.rules:
            if not rule.prescribed.matches(item.treatment_id, item.drug_class):
                continue
            value = evaluate(rule.when)
            if value is Truth.TRUE:
                criticism = _refine_proposals(rule.criticism, item, rs.guideline, evaluate)
                fired.setdefault(item.treatment_id, {}).setdefault(criticism.ctype, criticism)
            elif value is Truth.UNKNOWN:
                missing.extend(unresolved_criteria(rule.when, record.facts))
    # conditions of the recommendations govern what is allowed, so their open
    # questions are data worth asking for even when every rule stayed quiet
    for rec in rs.guideline.recommendations:
        if evaluate(rec.when) is Truth.UNKNOWN:
            missing.extend(unresolved_criteria(rec.when, record.facts))
    return _make_verdict(fired, missing, rs.guideline, rs.fingerprint)


# ---------------------------------------------------------------------------
# Oracle route
# ---------------------------------------------------------------------------

def _oracle_criticism(
    ctype: CriticismType,
    item: ResolvedItem,
    rec: Recommendation | None,
    g: Guideline,
    evaluate: _Evaluator,
) -> Criticism:
    if ctype is CriticismType.CONTRAINDICATED:
        return Criticism(ctype, item.treatment_id,
                         f"{item.treatment_id} has a guideline contraindication that "
                         "applies to this patient.")
    if ctype is CriticismType.ALREADY_FAILED:
        return Criticism(ctype, item.treatment_id,
                         f"{item.treatment_id} was already tried for this patient "
                         "without success.")
    assert rec is not None
    if ctype is CriticismType.NOT_FIRST_LINE:
        line = rec.line_of(item.treatment_id)
        candidates = [i.treatment for i in sorted(rec.recommends, key=lambda i: i.line)
                      if i.line < line]  # type: ignore[operator]
        explanation = (f"{item.treatment_id} is ranked behind untried earlier-line "
                       "options in this context.")
    else:
        candidates = list(rec.at_line(1))
        explanation = (f"No {item.drug_class} drug is recommended for this "
                       "patient's context.")
    kept = []
    for tid in candidates:
        if tid == item.treatment_id or evaluate.failed(tid):
            continue
        contra = g.treatment(tid).contraindication
        if contra is not None and evaluate(contra) is Truth.TRUE:
            continue
        kept.append(tid)
    return Criticism(ctype, item.treatment_id, explanation, proposals=tuple(kept),
                     strength=rec.strength, excerpt=rec.excerpt)


def interpret(
    g: Guideline,
    record: PatientRecord,
    prescription: ResolvedPrescription,
    *,
    as_of: datetime.date | None = None,
    failure_window_days: int | None = None,
) -> Verdict:
    """Classify each prescribed item straight from the guideline: the allowed
    set is the union, over recommendations that definitely match, of the
    treatments at their current frontier line."""
    fingerprint = fingerprint_of(g)
    _check_fingerprint(fingerprint, prescription.fingerprint)
    if not prescription.items:
        return _make_verdict({}, [], g, fingerprint)
    evaluate = _Evaluator(record, as_of, failure_window_days)

    matches = {rec.id: evaluate(rec.when) for rec in g.recommendations}

    def contra3(treatment_id: str) -> Truth:
        contra = g.treatment(treatment_id).contraindication
        return Truth.FALSE if contra is None else evaluate(contra)

    def nonviable3(treatment_id: str) -> Truth:
        if evaluate.failed(treatment_id):
            return Truth.TRUE
        return contra3(treatment_id)

    def exhausted_below3(rec: Recommendation, line: int) -> Truth:
        return kleene_and(
            nonviable3(i.treatment) for i in rec.recommends if i.line < line
        )

    def allowed_as_treatment3(treatment_id: str) -> Truth:
        terms = []
        for rec in g.recommendations:
            line = rec.line_of(treatment_id)
            if line is None:
                continue
            terms.append(kleene_and([matches[rec.id], exhausted_below3(rec, line)]))
        return kleene_or(terms)

    def allowed_as_class3(drug_class: str) -> Truth:
        terms = []
        for rec in g.recommendations:
            entries = [i for i in rec.recommends
                       if g.treatment(i.treatment).drug_class == drug_class]
            if not entries:
                continue
            frontier = kleene_or(exhausted_below3(rec, i.line) for i in entries)
            terms.append(kleene_and([matches[rec.id], frontier]))
        return kleene_or(terms)

    fired: dict[str, dict[CriticismType, Criticism]] = {}
    missing: list[str] = []
    for item in prescription.items:
        tid = item.treatment_id
        contra_value = contra3(tid)
        if contra_value is Truth.UNKNOWN:
            contra_expr = g.treatment(tid).contraindication
            if contra_expr is not None:
                missing.extend(unresolved_criteria(contra_expr, record.facts))
        verdict_type: CriticismType | None = None
        source_rec: Recommendation | None = None
        if contra_value is Truth.TRUE:
            verdict_type = CriticismType.CONTRAINDICATED
        elif evaluate.failed(tid):
            verdict_type = CriticismType.ALREADY_FAILED
        else:
            nfl_trigger = kleene_or(
                kleene_and([
                    matches[rec.id],
                    kleene_not(exhausted_below3(rec, rec.line_of(tid))),  # type: ignore[arg-type]
                ])
                for rec in g.recommendations
                if (rec.line_of(tid) or 1) > 1
            )
            if nfl_trigger is Truth.TRUE and allowed_as_treatment3(tid) is Truth.FALSE:
                verdict_type = CriticismType.NOT_FIRST_LINE
                source_rec = next(
                    rec for rec in g.recommendations
                    if (rec.line_of(tid) or 1) > 1
                    and matches[rec.id] is Truth.TRUE
                    and exhausted_below3(rec, rec.line_of(tid)) is Truth.FALSE  # type: ignore[arg-type]
                )
            else:
                off_list = [rec for rec in g.recommendations
                            if item.drug_class not in g.classes_of(rec)]
                nr_trigger = kleene_or(matches[rec.id] for rec in off_list)
                if (nr_trigger is Truth.TRUE
                        and allowed_as_class3(item.drug_class) is Truth.FALSE):
                    verdict_type = CriticismType.NOT_RECOMMENDED
                    source_rec = next(rec for rec in off_list
                                      if matches[rec.id] is Truth.TRUE)
        if verdict_type is not None:
            criticism = _oracle_criticism(verdict_type, item, source_rec, g, evaluate)
            fired.setdefault(tid, {})[verdict_type] = criticism
    for rec in g.recommendations:
        if matches[rec.id] is Truth.UNKNOWN:
            missing.extend(unresolved_criteria(rec.when, record.facts))
    return _make_verdict(fired, missing, g, fingerprint)


# ---------------------------------------------------------------------------
# Verdict document (CLI and HTTP payloads)
# ---------------------------------------------------------------------------

def criticism_to_doc(c: Criticism) -> dict:
    return {
        "ctype": c.ctype.value,
        "target": c.target,
        "explanation": c.explanation,
        "proposals": list(c.proposals),
        "strength": c.strength.value if c.strength else None,
        "excerpt": c.excerpt,
    }


def verdict_to_doc(v: Verdict) -> dict:
    return {
        "status": v.status.value,
        "criticisms": [criticism_to_doc(c) for c in v.criticisms],
        "secondary": [criticism_to_doc(c) for c in v.secondary],
        "missing_data": list(v.missing_data),
        "fingerprint": v.fingerprint,
    }
