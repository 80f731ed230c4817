"""Domain model for guideline-driven prescription critiquing.

A guideline couples three vocabularies: decision criteria (coded patient
attributes), drug treatments grouped into classes, and recommendations that
rank treatments into lines of therapy for a patient context.  Conditions are
boolean trees over criterion atoms and treatment-history atoms, evaluated
under strong Kleene three-valued logic: a missing fact yields UNKNOWN rather
than a guess, and downstream critiquing rules act on definite truth only.

Everything here is immutable after construction and safe to share between
threads; :func:`eval_condition` is pure.
"""

from __future__ import annotations

import datetime
import enum
import operator
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence, Union


class KBError(ValueError):
    """A guideline value violates a structural invariant."""


class SchemaError(KBError):
    """Patient data does not type-check against the guideline's criteria."""


# ---------------------------------------------------------------------------
# Three-valued logic
# ---------------------------------------------------------------------------

class Truth(enum.Enum):
    """Strong Kleene truth value; UNKNOWN marks missing information."""

    FALSE = 0
    UNKNOWN = 1
    TRUE = 2

    @classmethod
    def of(cls, value: bool) -> "Truth":
        return cls.TRUE if value else cls.FALSE


def kleene_not(v: Truth) -> Truth:
    return Truth(2 - v.value)


def kleene_and(values: Iterable[Truth]) -> Truth:
    result = Truth.TRUE
    for v in values:
        if v.value < result.value:
            result = v
        if result is Truth.FALSE:
            return result
    return result


def kleene_or(values: Iterable[Truth]) -> Truth:
    result = Truth.FALSE
    for v in values:
        if v.value > result.value:
            result = v
        if result is Truth.TRUE:
            return result
    return result


# ---------------------------------------------------------------------------
# Vocabulary enums
# ---------------------------------------------------------------------------

class CriterionKind(enum.Enum):
    FLAG = "flag"
    ENUM = "enum"
    QUANTITY = "number"


class FactSource(enum.Enum):
    """Where a criterion's value comes from during a consultation."""

    RECORD = "record"   # extracted from the patient record automatically
    FORM = "form"       # entered by the physician on the inclusion form
    LAB = "lab"         # laboratory result feed


class Strategy(enum.Enum):
    WATERFALL = "waterfall"
    STAR = "star"


class Intensity(enum.Enum):
    LOW = "low"
    MID = "mid"
    HIGH = "high"


class Grade(enum.Enum):
    A = "A"
    B = "B"
    C = "C"


class CriticismType(enum.Enum):
    """Why a prescribed drug is being criticized, most severe first."""

    CONTRAINDICATED = "contraindicated"
    ALREADY_FAILED = "already_failed"
    NOT_FIRST_LINE = "not_first_line"
    NOT_RECOMMENDED = "not_recommended"

    @property
    def severity(self) -> int:
        """Rank in the total severity order; lower is more severe."""
        return _SEVERITY[self]


_SEVERITY = {
    CriticismType.CONTRAINDICATED: 0,
    CriticismType.ALREADY_FAILED: 1,
    CriticismType.NOT_FIRST_LINE: 2,
    CriticismType.NOT_RECOMMENDED: 3,
}


class Outcome(enum.Enum):
    """How a past course of treatment ended (or that it is still running)."""

    ONGOING = "ongoing"
    SUCCESS = "success"
    FAILURE = "failure"
    STOPPED_ADVERSE = "stopped_adverse"


# ---------------------------------------------------------------------------
# Condition expressions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FlagTest:
    """Atom: the flag criterion is set."""

    criterion: str


@dataclass(frozen=True)
class Comparison:
    """Atom: compare a criterion's value against a literal."""

    criterion: str
    op: str  # one of = != < <= > >=
    value: Union[bool, float, str]


@dataclass(frozen=True)
class TriedAndFailed:
    """Atom: the treatment (or its class) was tried and ended in failure."""

    treatment: str


@dataclass(frozen=True)
class CurrentlyOn:
    """Atom: the patient has an ongoing course of the treatment."""

    treatment: str


@dataclass(frozen=True)
class Not:
    operand: "ConditionExpr"


@dataclass(frozen=True)
class And:
    operands: tuple["ConditionExpr", ...]

    def __post_init__(self) -> None:
        if len(self.operands) < 2:
            raise KBError("conjunction needs at least two operands")


@dataclass(frozen=True)
class Or:
    operands: tuple["ConditionExpr", ...]

    def __post_init__(self) -> None:
        if len(self.operands) < 2:
            raise KBError("disjunction needs at least two operands")


ConditionExpr = Union[FlagTest, Comparison, TriedAndFailed, CurrentlyOn, Not, And, Or]

_COMPARE = {
    "=": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}

COMPARISON_OPS = tuple(_COMPARE)
ORDER_OPS = ("<", "<=", ">", ">=")


def atoms_in(expr: ConditionExpr) -> Iterator[ConditionExpr]:
    """Yield every atom of `expr` in pre-order."""
    stack = [expr]
    while stack:
        node = stack.pop()
        if isinstance(node, Not):
            stack.append(node.operand)
        elif isinstance(node, (And, Or)):
            stack.extend(reversed(node.operands))
        else:
            yield node


def criteria_in(expr: ConditionExpr) -> list[str]:
    """Criterion ids referenced by `expr`, in first-mention order."""
    seen: dict[str, None] = {}
    for atom in atoms_in(expr):
        if isinstance(atom, (FlagTest, Comparison)):
            seen.setdefault(atom.criterion, None)
    return list(seen)


def treatments_in(expr: ConditionExpr) -> list[str]:
    seen: dict[str, None] = {}
    for atom in atoms_in(expr):
        if isinstance(atom, (TriedAndFailed, CurrentlyOn)):
            seen.setdefault(atom.treatment, None)
    return list(seen)


# ---------------------------------------------------------------------------
# Guideline constituents
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Criterion:
    """A coded patient attribute the guideline branches on."""

    id: str
    kind: CriterionKind
    source: FactSource
    values: tuple[str, ...] = ()   # enumeration kinds only
    unit: str = ""                 # quantity kinds only

    def __post_init__(self) -> None:
        if self.kind is CriterionKind.ENUM and not self.values:
            raise KBError(f"enum criterion {self.id!r} declares no values")
        if self.kind is CriterionKind.QUANTITY and not self.unit:
            raise KBError(f"quantity criterion {self.id!r} has an empty unit")
        if self.kind is not CriterionKind.ENUM and self.values:
            raise KBError(f"criterion {self.id!r} is not an enum but has values")
        if len(set(self.values)) != len(self.values):
            raise KBError(f"enum criterion {self.id!r} repeats a value")


@dataclass(frozen=True)
class Treatment:
    id: str
    drug_class: str
    intensity: Intensity | None = None
    contraindication: ConditionExpr | None = None


@dataclass(frozen=True)
class RecommendedTreatment:
    treatment: str
    line: int


@dataclass(frozen=True)
class Recommendation:
    """In context `when`, recommend these treatments at these therapy lines."""

    id: str
    when: ConditionExpr
    recommends: tuple[RecommendedTreatment, ...]
    strength: Grade | None = None
    excerpt: str | None = None

    def __post_init__(self) -> None:
        if not self.recommends:
            raise KBError(f"recommendation {self.id!r} recommends nothing")
        lines = {r.line for r in self.recommends}
        if lines != set(range(1, max(lines) + 1)):
            raise KBError(
                f"recommendation {self.id!r} has non-contiguous therapy lines {sorted(lines)}"
            )
        ids = [r.treatment for r in self.recommends]
        if len(set(ids)) != len(ids):
            raise KBError(f"recommendation {self.id!r} lists a treatment twice")

    def at_line(self, line: int) -> tuple[str, ...]:
        return tuple(r.treatment for r in self.recommends if r.line == line)

    def below_line(self, line: int) -> tuple[str, ...]:
        return tuple(r.treatment for r in self.recommends if r.line < line)

    def line_of(self, treatment: str) -> int | None:
        for r in self.recommends:
            if r.treatment == treatment:
                return r.line
        return None


def condition_problems(
    expr: ConditionExpr,
    criteria: Mapping[str, Criterion],
    treatments: Mapping[str, "Treatment"],
) -> list[str]:
    """Static type errors in `expr` against the declared vocabularies."""
    problems = []
    for atom in atoms_in(expr):
        if isinstance(atom, FlagTest):
            crit = criteria.get(atom.criterion)
            if crit is None:
                problems.append(f"undefined criterion {atom.criterion!r}")
            elif crit.kind is not CriterionKind.FLAG:
                problems.append(
                    f"bare test on {atom.criterion!r} requires a flag criterion"
                )
        elif isinstance(atom, Comparison):
            crit = criteria.get(atom.criterion)
            if crit is None:
                problems.append(f"undefined criterion {atom.criterion!r}")
                continue
            if crit.kind is CriterionKind.QUANTITY:
                if isinstance(atom.value, bool) or not isinstance(atom.value, (int, float)):
                    problems.append(
                        f"comparison on quantity {atom.criterion!r} needs a numeric literal"
                    )
            elif atom.op in ORDER_OPS:
                problems.append(
                    f"ordering operator {atom.op!r} is not defined on {crit.kind.value} "
                    f"criterion {atom.criterion!r}"
                )
            elif crit.kind is CriterionKind.FLAG:
                if not isinstance(atom.value, bool):
                    problems.append(
                        f"comparison on flag {atom.criterion!r} needs true or false"
                    )
            else:  # enum
                if not isinstance(atom.value, str):
                    problems.append(
                        f"comparison on enum {atom.criterion!r} needs one of its values"
                    )
                elif atom.value not in crit.values:
                    problems.append(
                        f"{atom.value!r} is not a declared value of enum {atom.criterion!r}"
                    )
        elif isinstance(atom, (TriedAndFailed, CurrentlyOn)):
            if atom.treatment not in treatments:
                problems.append(f"undefined treatment {atom.treatment!r}")
    return problems


@dataclass(frozen=True)
class Guideline:
    """A parsed knowledge base: criteria, treatments, ranked recommendations."""

    name: str
    strategy: Strategy
    criteria: tuple[Criterion, ...]
    treatments: tuple[Treatment, ...]
    recommendations: tuple[Recommendation, ...]
    stage_criterion: str | None = None   # waterfall ordering key

    def __post_init__(self) -> None:
        crit_ids = [c.id for c in self.criteria]
        treat_ids = [t.id for t in self.treatments]
        rec_ids = [r.id for r in self.recommendations]
        for label, ids in (("criterion", crit_ids), ("treatment", treat_ids),
                           ("recommendation", rec_ids)):
            dupes = {i for i in ids if ids.count(i) > 1}
            if dupes:
                raise KBError(f"duplicate {label} id(s): {sorted(dupes)}")
        overlap = set(crit_ids) & set(treat_ids)
        if overlap:
            raise KBError(f"identifier(s) declared as both criterion and treatment: {sorted(overlap)}")
        criteria = {c.id: c for c in self.criteria}
        treatments = {t.id: t for t in self.treatments}
        if self.stage_criterion is not None:
            if self.strategy is not Strategy.WATERFALL:
                raise KBError("stage criterion is only meaningful for waterfall strategy")
            if self.stage_criterion not in criteria:
                raise KBError(f"undefined stage criterion {self.stage_criterion!r}")
        for t in self.treatments:
            if t.contraindication is not None:
                problems = condition_problems(t.contraindication, criteria, treatments)
                if problems:
                    raise KBError(f"treatment {t.id!r} contraindication: " + "; ".join(problems))
        for rec in self.recommendations:
            problems = condition_problems(rec.when, criteria, treatments)
            if problems:
                raise KBError(f"recommendation {rec.id!r} condition: " + "; ".join(problems))
            unknown = [r.treatment for r in rec.recommends if r.treatment not in treatments]
            if unknown:
                raise KBError(f"recommendation {rec.id!r} recommends undeclared {unknown}")
        object.__setattr__(self, "_criteria_by_id", criteria)
        object.__setattr__(self, "_treatments_by_id", treatments)

    def criterion(self, criterion_id: str) -> Criterion:
        return self._criteria_by_id[criterion_id]  # type: ignore[attr-defined]

    def treatment(self, treatment_id: str) -> Treatment:
        return self._treatments_by_id[treatment_id]  # type: ignore[attr-defined]

    def has_criterion(self, criterion_id: str) -> bool:
        return criterion_id in self._criteria_by_id  # type: ignore[attr-defined]

    def has_treatment(self, treatment_id: str) -> bool:
        return treatment_id in self._treatments_by_id  # type: ignore[attr-defined]

    @property
    def drug_classes(self) -> tuple[str, ...]:
        """Distinct drug classes, in first-declaration order."""
        seen: dict[str, None] = {}
        for t in self.treatments:
            seen.setdefault(t.drug_class, None)
        return tuple(seen)

    def classes_of(self, recommendation: Recommendation) -> set[str]:
        return {self.treatment(r.treatment).drug_class for r in recommendation.recommends}


# ---------------------------------------------------------------------------
# Criticisms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Criticism:
    """One reason the engine objects to a prescribed item.

    `target` is a treatment id, or a drug class for class-wide rules; verdicts
    always rewrite it to the concrete prescribed treatment.
    """

    ctype: CriticismType
    target: str
    explanation: str
    proposals: tuple[str, ...] = ()
    strength: Grade | None = None
    excerpt: str | None = None

    def __post_init__(self) -> None:
        if self.target in self.proposals:
            raise KBError(f"criticism of {self.target!r} proposes the criticized target")
        if not self.explanation:
            raise KBError("criticism explanation must not be empty")


# ---------------------------------------------------------------------------
# Treatment history
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HistoryEntry:
    """A past or ongoing course of treatment with its outcome.

    `target` names a treatment or a whole drug class; `covers` is the set of
    treatment ids the entry speaks for (filled in by the record loader when
    the target is a class).
    """

    target: str
    outcome: Outcome
    start_date: datetime.date | None = None
    covers: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if not self.covers:
            object.__setattr__(self, "covers", frozenset((self.target,)))


def _within_window(
    entry: HistoryEntry,
    as_of: datetime.date | None,
    window_days: int | None,
) -> bool:
    if window_days is None or entry.start_date is None:
        return True
    reference = as_of or datetime.date.today()
    return (reference - entry.start_date).days <= window_days


def history_failed(
    history: Sequence[HistoryEntry],
    treatment_id: str,
    *,
    as_of: datetime.date | None = None,
    failure_window_days: int | None = None,
) -> bool:
    """True iff some failure entry covers the treatment (inside the window)."""
    return any(
        e.outcome is Outcome.FAILURE
        and treatment_id in e.covers
        and _within_window(e, as_of, failure_window_days)
        for e in history
    )


def history_ongoing(history: Sequence[HistoryEntry], treatment_id: str) -> bool:
    return any(e.outcome is Outcome.ONGOING and treatment_id in e.covers for e in history)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def eval_condition(
    expr: ConditionExpr,
    facts: Mapping[str, object],
    history: Sequence[HistoryEntry] = (),
    *,
    as_of: datetime.date | None = None,
    failure_window_days: int | None = None,
) -> Truth:
    """Evaluate `expr` under Kleene semantics.

    Atoms over absent facts yield UNKNOWN; history atoms are computed from
    `history` and are never unknown.  Raises :class:`SchemaError` when a fact
    value's type contradicts the atom applied to it.
    """
    if isinstance(expr, FlagTest):
        value = facts.get(expr.criterion)
        if value is None:
            return Truth.UNKNOWN
        if not isinstance(value, bool):
            raise SchemaError(f"flag test on {expr.criterion!r} but fact is {value!r}")
        return Truth.of(value)
    if isinstance(expr, Comparison):
        value = facts.get(expr.criterion)
        if value is None:
            return Truth.UNKNOWN
        literal = expr.value
        if isinstance(literal, bool) or isinstance(value, bool):
            if not isinstance(literal, bool) or not isinstance(value, bool):
                raise SchemaError(f"boolean comparison mismatch on {expr.criterion!r}")
        elif isinstance(literal, (int, float)):
            if not isinstance(value, (int, float)):
                raise SchemaError(f"numeric comparison on {expr.criterion!r} but fact is {value!r}")
        elif not isinstance(value, str):
            raise SchemaError(f"enum comparison on {expr.criterion!r} but fact is {value!r}")
        return Truth.of(_COMPARE[expr.op](value, literal))
    if isinstance(expr, TriedAndFailed):
        return Truth.of(history_failed(
            history, expr.treatment, as_of=as_of, failure_window_days=failure_window_days
        ))
    if isinstance(expr, CurrentlyOn):
        return Truth.of(history_ongoing(history, expr.treatment))
    if isinstance(expr, Not):
        return kleene_not(eval_condition(
            expr.operand, facts, history, as_of=as_of, failure_window_days=failure_window_days
        ))
    if isinstance(expr, And):
        return kleene_and(
            eval_condition(op, facts, history, as_of=as_of, failure_window_days=failure_window_days)
            for op in expr.operands
        )
    if isinstance(expr, Or):
        return kleene_or(
            eval_condition(op, facts, history, as_of=as_of, failure_window_days=failure_window_days)
            for op in expr.operands
        )
    raise TypeError(f"not a condition expression: {expr!r}")


def unresolved_criteria(expr: ConditionExpr, facts: Mapping[str, object]) -> list[str]:
    """Criteria referenced by `expr` whose facts are absent, in mention order."""
    return [c for c in criteria_in(expr) if facts.get(c) is None]
