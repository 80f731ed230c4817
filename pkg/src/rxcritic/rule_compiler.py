"""Translate a guideline into an explicit set of critiquing rules.

Each rule pairs a patient condition with a prescribed-treatment matcher and
the criticism to show when both hold.  Four clauses generate the set:

  (a) one CONTRAINDICATED rule per treatment declaring a contraindication;
  (b) one ALREADY_FAILED rule per treatment, firing on a failure in history;
  (c) per recommendation, one NOT_RECOMMENDED rule for every drug class the
      recommendation does not list, matching prescriptions by class;
  (d) per recommendation, one NOT_FIRST_LINE rule for every listed treatment
      ranked above line 1, firing while lower lines are not exhausted
      (a line is exhausted when each of its treatments has failed or is
      contraindicated for this patient).

Several recommendations may match one patient; the engine is permissive and
treats the union of their current options as acceptable.  Clauses (c) and (d)
therefore carry a negated "some other recommendation currently allows this
drug (class)" conjunct, expanded at compile time into plain condition
expressions so the engine needs no special-case logic.

Compilation is deterministic: byte-identical output across runs.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

from .gdl_parser import fingerprint_of, parse_guideline, serialize_guideline
from .kb_model import (
    And,
    Comparison,
    ConditionExpr,
    Criticism,
    CriticismType,
    CurrentlyOn,
    FlagTest,
    Grade,
    Guideline,
    KBError,
    Not,
    Or,
    Recommendation,
    TriedAndFailed,
)

RULESET_VERSION = 1


class MatchBy(enum.Enum):
    TREATMENT = "treatment"
    DRUG_CLASS = "drug_class"


@dataclass(frozen=True)
class TreatmentMatcher:
    """Which prescribed items a rule applies to."""

    match_by: MatchBy
    value: str

    def matches(self, treatment_id: str, drug_class: str) -> bool:
        if self.match_by is MatchBy.TREATMENT:
            return self.value == treatment_id
        return self.value == drug_class


@dataclass(frozen=True)
class CritiquingRule:
    id: str
    when: ConditionExpr
    prescribed: TreatmentMatcher
    criticism: Criticism
    provenance: str  # recommendation id, or "global" for clauses (a)/(b)


@dataclass(frozen=True)
class RuleSet:
    guideline_name: str
    rules: tuple[CritiquingRule, ...]
    fingerprint: str
    guideline: Guideline  # embedded so compiled artifacts are self-sufficient

    def __post_init__(self) -> None:
        ids = [r.id for r in self.rules]
        if len(set(ids)) != len(ids):
            raise KBError("rule ids are not unique")
        keys = {(r.when, r.prescribed, r.criticism.ctype) for r in self.rules}
        if len(keys) != len(self.rules):
            raise KBError("rule set contains duplicate (when, prescribed, ctype) triples")

    def rule(self, rule_id: str) -> CritiquingRule:
        for r in self.rules:
            if r.id == rule_id:
                return r
        raise KeyError(f"unknown rule id {rule_id!r}")


# ---------------------------------------------------------------------------
# Condition builders (None stands for the constant-true condition)
# ---------------------------------------------------------------------------

def _conj(parts: list[ConditionExpr | None]) -> ConditionExpr | None:
    real = [p for p in parts if p is not None]
    if not real:
        return None
    if len(real) == 1:
        return real[0]
    return And(tuple(real))


def _disj(parts: list[ConditionExpr | None]) -> ConditionExpr | None:
    real: list[ConditionExpr] = []
    for p in parts:
        if p is None:  # constant true absorbs the disjunction
            return None
        real.append(p)
    if len(real) == 1:
        return real[0]
    return Or(tuple(real))


def _nonviable(g: Guideline, treatment_id: str) -> ConditionExpr:
    """failed(t), or failed(t) ∨ contraindication(t) when one is declared."""
    t = g.treatment(treatment_id)
    failed = TriedAndFailed(t.id)
    if t.contraindication is None:
        return failed
    return Or((failed, t.contraindication))


def exhausted_below(g: Guideline, rec: Recommendation, line: int) -> ConditionExpr | None:
    """Every treatment at every line strictly below `line` has failed or is
    contraindicated.  None (constant true) when nothing sits below."""
    return _conj([_nonviable(g, i.treatment) for i in rec.recommends if i.line < line])


def _treatment_allowed_terms(
    g: Guideline, treatment_id: str, exclude: Recommendation | None
) -> list[ConditionExpr]:
    """One term per other recommendation listing the treatment: that
    recommendation matches and the treatment's line is the current frontier."""
    terms = []
    for rec in g.recommendations:
        if rec is exclude:
            continue
        line = rec.line_of(treatment_id)
        if line is None:
            continue
        terms.append(_conj([rec.when, exhausted_below(g, rec, line)]))
    return terms  # type: ignore[return-value]


def _class_allowed_terms(g: Guideline, drug_class: str) -> list[ConditionExpr]:
    """One term per recommendation listing the class: it matches and some
    listed member of the class sits at the current frontier line."""
    terms = []
    for rec in g.recommendations:
        entries = [i for i in rec.recommends
                   if g.treatment(i.treatment).drug_class == drug_class]
        if not entries:
            continue
        gate = _disj([exhausted_below(g, rec, i.line) for i in entries])
        terms.append(_conj([rec.when, gate]))
    return terms  # type: ignore[return-value]


def _with_suppression(base: ConditionExpr, terms: list[ConditionExpr]) -> ConditionExpr:
    if not terms:
        return base
    blocked = _disj(list(terms))
    assert blocked is not None
    return _conj([base, Not(blocked)])  # type: ignore[return-value]


# ---------------------------------------------------------------------------
# Compilation
# ---------------------------------------------------------------------------

def _ordinal(line: int) -> str:
    return {2: "second", 3: "third", 4: "fourth"}.get(line, f"line-{line}")


def _line_one(rec: Recommendation) -> tuple[str, ...]:
    return rec.at_line(1)


def compile_guideline(g: Guideline) -> RuleSet:
    """Compile `g` into its critiquing rules, deterministically."""
    emitted: dict[tuple, CritiquingRule] = {}

    def emit(when, matcher, criticism, provenance):
        key = (when, matcher, criticism.ctype)
        rule = CritiquingRule(
            id=f"{provenance}:{criticism.ctype.value}:{matcher.value}",
            when=when,
            prescribed=matcher,
            criticism=criticism,
            provenance=provenance,
        )
        existing = emitted.get(key)
        if existing is None or provenance < existing.provenance:
            emitted[key] = rule

    for t in g.treatments:
        if t.contraindication is not None:
            emit(
                t.contraindication,
                TreatmentMatcher(MatchBy.TREATMENT, t.id),
                Criticism(
                    CriticismType.CONTRAINDICATED,
                    target=t.id,
                    explanation=f"{t.id} has a guideline contraindication that applies to this patient.",
                ),
                "global",
            )
        emit(
            TriedAndFailed(t.id),
            TreatmentMatcher(MatchBy.TREATMENT, t.id),
            Criticism(
                CriticismType.ALREADY_FAILED,
                target=t.id,
                explanation=f"{t.id} was already tried for this patient without success.",
            ),
            "global",
        )

    all_classes = g.drug_classes
    for rec in g.recommendations:
        listed_classes = g.classes_of(rec)
        proposals = _line_one(rec)
        for cls in all_classes:
            if cls in listed_classes:
                continue
            when = _with_suppression(rec.when, _class_allowed_terms(g, cls))
            emit(
                when,
                TreatmentMatcher(MatchBy.DRUG_CLASS, cls),
                Criticism(
                    CriticismType.NOT_RECOMMENDED,
                    target=cls,
                    explanation=(
                        f"No {cls} drug is recommended for this patient's context."
                    ),
                    proposals=proposals,
                    strength=rec.strength,
                    excerpt=rec.excerpt,
                ),
                rec.id,
            )
        for item in rec.recommends:
            if item.line == 1:
                continue
            frontier = exhausted_below(g, rec, item.line)
            assert frontier is not None  # lines are contiguous, so line>1 has lower entries
            base = _conj([rec.when, Not(frontier)])
            assert base is not None
            when = _with_suppression(
                base, _treatment_allowed_terms(g, item.treatment, exclude=rec)
            )
            lower = sorted(
                (i for i in rec.recommends if i.line < item.line),
                key=lambda i: i.line,
            )
            emit(
                when,
                TreatmentMatcher(MatchBy.TREATMENT, item.treatment),
                Criticism(
                    CriticismType.NOT_FIRST_LINE,
                    target=item.treatment,
                    explanation=(
                        f"{item.treatment} is a {_ordinal(item.line)}-line option in this "
                        "context and earlier-line alternatives remain untried."
                    ),
                    proposals=tuple(i.treatment for i in lower),
                    strength=rec.strength,
                    excerpt=rec.excerpt,
                ),
                rec.id,
            )

    rules = sorted(
        emitted.values(),
        key=lambda r: (
            r.provenance,
            r.prescribed.value,
            r.prescribed.match_by.value,
            r.criticism.ctype.severity,
            r.criticism.target,
        ),
    )
    return RuleSet(
        guideline_name=g.name,
        rules=tuple(rules),
        fingerprint=fingerprint_of(g),
        guideline=g,
    )


def expected_rule_count(g: Guideline) -> int:
    """Closed-form size of the compiled set, before deduplication."""
    contras = sum(1 for t in g.treatments if t.contraindication is not None)
    failures = len(g.treatments)
    classes = set(g.drug_classes)
    not_recommended = sum(len(classes - g.classes_of(rec)) for rec in g.recommendations)
    not_first_line = sum(
        1 for rec in g.recommendations for i in rec.recommends if i.line > 1
    )
    return contras + failures + not_recommended + not_first_line


def explain_rule(rs: RuleSet, rule_id: str) -> str:
    """Human-readable rendering of one rule's criticism; deterministic."""
    rule = rs.rule(rule_id)
    c = rule.criticism
    parts = [f"[{c.ctype.value}] {c.explanation}"]
    if c.strength is not None:
        parts.append(f"Recommendation grade {c.strength.value}.")
    if c.excerpt:
        parts.append(f'Guideline text: "{c.excerpt}"')
    if c.proposals:
        parts.append("Consider instead: " + ", ".join(c.proposals) + ".")
    parts.append(f"(rule {rule.id})")
    return " ".join(parts)


# ---------------------------------------------------------------------------
# Serialization: versioned document, conditions in prefix notation
# ---------------------------------------------------------------------------

def expr_to_prefix(expr: ConditionExpr) -> list:
    if isinstance(expr, FlagTest):
        return ["flag", expr.criterion]
    if isinstance(expr, Comparison):
        return ["cmp", expr.criterion, expr.op, expr.value]
    if isinstance(expr, TriedAndFailed):
        return ["failed", expr.treatment]
    if isinstance(expr, CurrentlyOn):
        return ["ongoing", expr.treatment]
    if isinstance(expr, Not):
        return ["not", expr_to_prefix(expr.operand)]
    if isinstance(expr, And):
        return ["and", *[expr_to_prefix(op) for op in expr.operands]]
    if isinstance(expr, Or):
        return ["or", *[expr_to_prefix(op) for op in expr.operands]]
    raise TypeError(f"not a condition expression: {expr!r}")


def prefix_to_expr(node: list) -> ConditionExpr:
    head, *rest = node
    if head == "flag":
        return FlagTest(rest[0])
    if head == "cmp":
        return Comparison(rest[0], rest[1], rest[2])
    if head == "failed":
        return TriedAndFailed(rest[0])
    if head == "ongoing":
        return CurrentlyOn(rest[0])
    if head == "not":
        return Not(prefix_to_expr(rest[0]))
    if head == "and":
        return And(tuple(prefix_to_expr(n) for n in rest))
    if head == "or":
        return Or(tuple(prefix_to_expr(n) for n in rest))
    raise ValueError(f"unknown condition operator {head!r}")


def dump_ruleset(rs: RuleSet) -> str:
    doc = {
        "ruleset_version": RULESET_VERSION,
        "guideline_name": rs.guideline_name,
        "fingerprint": rs.fingerprint,
        "rules": [
            {
                "id": r.id,
                "provenance": r.provenance,
                "when": expr_to_prefix(r.when),
                "prescribed": {"match_by": r.prescribed.match_by.value,
                               "value": r.prescribed.value},
                "criticism": {
                    "ctype": r.criticism.ctype.value,
                    "target": r.criticism.target,
                    "explanation": r.criticism.explanation,
                    "proposals": list(r.criticism.proposals),
                    "strength": r.criticism.strength.value if r.criticism.strength else None,
                    "excerpt": r.criticism.excerpt,
                },
            }
            for r in rs.rules
        ],
        "guideline_gdl": serialize_guideline(rs.guideline),
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def load_ruleset(text: str) -> RuleSet:
    doc = json.loads(text)
    version = doc.get("ruleset_version")
    if version != RULESET_VERSION:
        raise KBError(f"unsupported ruleset version {version!r}")
    guideline = parse_guideline(doc["guideline_gdl"])
    if fingerprint_of(guideline) != doc["fingerprint"]:
        raise KBError("ruleset fingerprint does not match embedded guideline")
    rules = []
    for r in doc["rules"]:
        crit = r["criticism"]
        rules.append(
            CritiquingRule(
                id=r["id"],
                when=prefix_to_expr(r["when"]),
                prescribed=TreatmentMatcher(MatchBy(r["prescribed"]["match_by"]),
                                            r["prescribed"]["value"]),
                criticism=Criticism(
                    ctype=CriticismType(crit["ctype"]),
                    target=crit["target"],
                    explanation=crit["explanation"],
                    proposals=tuple(crit["proposals"]),
                    strength=Grade(crit["strength"]) if crit["strength"] else None,
                    excerpt=crit["excerpt"],
                ),
                provenance=r["provenance"],
            )
        )
    return RuleSet(
        guideline_name=doc["guideline_name"],
        rules=tuple(rules),
        fingerprint=doc["fingerprint"],
        guideline=guideline,
    )
