"""Evaluation harness and knowledge-base verifier.

One half reproduces the usability-study pipeline: simulated cases with gold
labels run through the engine, confusion-matrix cells, sensitivity and
specificity with Wald 95% intervals, an appropriateness rate, and the
four-point satisfaction table.  The other half stress-tests knowledge bases:
the patient-profile space is discretized (quantities collapse to one
representative per interval induced by the thresholds the guideline actually
compares against), then swept against every single-drug prescription and
single-failure history, checking coverage, rule satisfiability, and —
the build gate — that the compiled rules and the direct interpreter never
disagree.
"""

from __future__ import annotations

import itertools
import json
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

from .critique_engine import comparison_key, critique, interpret
from .kb_model import (
    And,
    Comparison,
    Criterion,
    CriterionKind,
    CurrentlyOn,
    FactSource,
    FlagTest,
    Grade,
    Guideline,
    HistoryEntry,
    KBError,
    Not,
    Or,
    Outcome,
    Recommendation,
    RecommendedTreatment,
    Strategy,
    Treatment,
    TriedAndFailed,
    Truth,
    atoms_in,
    eval_condition,
)
from .patient_model import PatientRecord, Prescription, ResolvedItem, ResolvedPrescription
from .rule_compiler import RuleSet, compile_guideline

DEFAULT_PROFILE_CAP = 200_000
Z_95 = 1.96

LIKERT_SCALE = ("strong_agree", "weak_agree", "weak_disagree", "strong_disagree")


class UndefinedMetricError(KBError):
    def __init__(self, metric: str):
        self.metric = metric
        super().__init__(f"metric {metric!r} is undefined (zero denominator)")


class ProfileCapError(KBError):
    def __init__(self, size: int, cap: int):
        self.size = size
        self.cap = cap
        super().__init__(f"profile space holds {size} assignments, above the cap of {cap}")


# ---------------------------------------------------------------------------
# Simulated cases and gold labels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GoldLabel:
    """What the evaluating physician said about one prescription attempt."""

    should_alert: bool
    alert_justified_if_raised: bool = False
    explanation_appropriate: bool | None = None

    def __post_init__(self) -> None:
        if not self.should_alert and self.explanation_appropriate is not None:
            raise KBError("explanation_appropriate is only recorded for expected alerts")


@dataclass(frozen=True)
class Attempt:
    prescription: Prescription
    gold: GoldLabel


@dataclass(frozen=True)
class SimulatedCase:
    case_id: str
    record: PatientRecord
    attempts: tuple[Attempt, ...]

    def __post_init__(self) -> None:
        if not self.attempts:
            raise KBError(f"case {self.case_id!r} has no prescription attempts")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise KBError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def classify_attempt(raised: bool, gold: GoldLabel) -> str:
    """Cell for one attempt; an unexpected alert the physician endorsed
    still counts as a true positive."""
    if raised:
        if gold.should_alert or gold.alert_justified_if_raised:
            return "tp"
        return "fp"
    return "fn" if gold.should_alert else "tn"


@dataclass(frozen=True)
class AttemptTrace:
    case_id: str
    attempt_index: int
    raised: bool
    cell: str
    gold: GoldLabel
    criticisms: tuple[tuple[str, str], ...]  # (ctype, target) pairs


def matrix_from_cells(cells: Iterable[str]) -> ConfusionMatrix:
    counts = {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
    for cell in cells:
        counts[cell] += 1
    return ConfusionMatrix(**counts)


def load_cases(text: str, g: Guideline) -> list[SimulatedCase]:
    """Read simulated cases from a line-delimited JSON document."""
    from .patient_model import load_record, parse_prescription

    cases = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        doc = json.loads(line)
        record = load_record(doc["record"], g)
        attempts = tuple(
            Attempt(
                parse_prescription(a["prescription"]),
                GoldLabel(
                    should_alert=a["gold"]["should_alert"],
                    alert_justified_if_raised=a["gold"].get("alert_justified_if_raised", False),
                    explanation_appropriate=a["gold"].get("explanation_appropriate"),
                ),
            )
            for a in doc["attempts"]
        )
        cases.append(SimulatedCase(doc["case_id"], record, attempts))
    return cases


def run_cases(
    rs: RuleSet,
    cases: Sequence[SimulatedCase],
    dictionary=None,
) -> tuple[ConfusionMatrix, list[AttemptTrace]]:
    """Critique every attempt of every case and tally the confusion matrix."""
    from .patient_model import resolve_prescription

    traces: list[AttemptTrace] = []
    for case in cases:
        for index, attempt in enumerate(case.attempts):
            resolved = resolve_prescription(attempt.prescription, dictionary, rs.guideline)
            verdict = critique(rs, case.record, resolved)
            cell = classify_attempt(verdict.raised, attempt.gold)
            traces.append(
                AttemptTrace(
                    case_id=case.case_id,
                    attempt_index=index,
                    raised=verdict.raised,
                    cell=cell,
                    gold=attempt.gold,
                    criticisms=tuple((c.ctype.value, c.target) for c in verdict.criticisms),
                )
            )
    return matrix_from_cells(t.cell for t in traces), traces


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricWithCI:
    value: float
    half_width: float
    low: float
    high: float
    n: int


def _wald(p: float, n: int) -> MetricWithCI:
    half = Z_95 * math.sqrt(p * (1.0 - p) / n)
    return MetricWithCI(p, half, max(0.0, p - half), min(1.0, p + half), n)


def wald_half_width(p: float, n: int) -> float:
    return Z_95 * math.sqrt(p * (1.0 - p) / n)


@dataclass(frozen=True)
class EvalMetrics:
    sensitivity: MetricWithCI
    specificity: MetricWithCI


def metrics(m: ConfusionMatrix) -> EvalMetrics:
    """Sensitivity tp/(tp+fn) and specificity tn/(tn+fp), Wald 95% CIs."""
    if m.tp + m.fn == 0:
        raise UndefinedMetricError("sensitivity")
    if m.tn + m.fp == 0:
        raise UndefinedMetricError("specificity")
    return EvalMetrics(
        sensitivity=_wald(m.tp / (m.tp + m.fn), m.tp + m.fn),
        specificity=_wald(m.tn / (m.tn + m.fp), m.tn + m.fp),
    )


def appropriateness(traces: Sequence[AttemptTrace]) -> float:
    """Share of attempts handled well: an appropriate criticism was raised,
    or the system was silent with good reason."""
    if not traces:
        raise UndefinedMetricError("appropriateness")
    good = sum(
        1
        for t in traces
        if (t.cell == "tp" and t.gold.explanation_appropriate is True) or t.cell == "tn"
    )
    return good / len(traces)


# ---------------------------------------------------------------------------
# Satisfaction questionnaire
# ---------------------------------------------------------------------------

def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


@dataclass(frozen=True)
class LikertRow:
    question: str
    counts: tuple[int, int, int, int]  # strong/weak agreement, weak/strong disagreement

    def answered(self) -> int:
        return sum(self.counts)


@dataclass(frozen=True)
class LikertTable:
    rows: tuple[LikertRow, ...]
    respondents: int

    def __post_init__(self) -> None:
        for row in self.rows:
            if row.answered() > self.respondents:
                raise KBError(f"question {row.question!r} has more answers than respondents")

    def percentages(self) -> dict[str, tuple[int, int, int, int]]:
        """Row percentages of the full panel, rounded half-up; GPs who skipped
        a question leave its row short of 100."""
        return {
            row.question: tuple(
                round_half_up(100.0 * c / self.respondents) for c in row.counts
            )
            for row in self.rows
        }


def aggregate_likert(
    responses: Sequence[Mapping[str, str]],
    questions: Sequence[str] | None = None,
) -> LikertTable:
    """Tally per-respondent answers (question -> scale point) into a table."""
    if questions is None:
        seen: dict[str, None] = {}
        for response in responses:
            for q in response:
                seen.setdefault(q, None)
        questions = list(seen)
    counts = {q: [0, 0, 0, 0] for q in questions}
    for response in responses:
        for question, answer in response.items():
            if answer not in LIKERT_SCALE:
                raise KBError(f"answer {answer!r} is outside the 4-point scale")
            if question in counts:
                counts[question][LIKERT_SCALE.index(answer)] += 1
    rows = tuple(LikertRow(q, tuple(counts[q])) for q in questions)  # type: ignore[arg-type]
    return LikertTable(rows, respondents=len(responses))


# ---------------------------------------------------------------------------
# Profile enumeration (interval abstraction over quantities)
# ---------------------------------------------------------------------------

def _quantity_cuts(g: Guideline, criterion_id: str) -> list[tuple[float, int]]:
    """Boundaries induced by every comparison on the criterion.  A cut
    (t, 0) separates x<t from x>=t; (t, 1) separates x<=t from x>t."""
    cuts: set[tuple[float, int]] = set()
    conditions = [rec.when for rec in g.recommendations]
    conditions.extend(
        t.contraindication for t in g.treatments if t.contraindication is not None
    )
    for expr in conditions:
        for atom in atoms_in(expr):
            if isinstance(atom, Comparison) and atom.criterion == criterion_id:
                t = float(atom.value)  # type: ignore[arg-type]
                if atom.op in ("<", ">="):
                    cuts.add((t, 0))
                elif atom.op in (">", "<="):
                    cuts.add((t, 1))
                else:  # = or != isolate the exact value
                    cuts.add((t, 0))
                    cuts.add((t, 1))
    return sorted(cuts)


def quantity_representatives(g: Guideline, criterion_id: str) -> tuple[float, ...]:
    """One probe value per interval of the threshold partition, honoring each
    operator's open/closed side so every comparison is exercised both ways."""
    cuts = _quantity_cuts(g, criterion_id)
    if not cuts:
        return (0.0,)
    reps: list[float] = []
    first_value, first_kind = cuts[0]
    reps.append(first_value - 1.0 if first_kind == 0 else first_value)
    for i, (value, kind) in enumerate(cuts):
        if kind == 0:
            # region starts at the cut value itself
            reps.append(value)
        else:
            # region starts strictly above: probe the midpoint to the next cut
            nxt = cuts[i + 1][0] if i + 1 < len(cuts) else value + 2.0
            reps.append((value + nxt) / 2.0)
    return tuple(dict.fromkeys(reps))


def criterion_domain(g: Guideline, criterion: Criterion) -> tuple[object, ...]:
    if criterion.kind is CriterionKind.FLAG:
        return (False, True)
    if criterion.kind is CriterionKind.ENUM:
        return tuple(criterion.values)
    return quantity_representatives(g, criterion.id)


def profile_space_size(g: Guideline) -> int:
    size = 1
    for criterion in g.criteria:
        size *= len(criterion_domain(g, criterion))
    return size


def enumerate_profiles(
    g: Guideline, max_profiles: int = DEFAULT_PROFILE_CAP
) -> Iterator[dict[str, object]]:
    """Cartesian product over criterion domains.  Refuses with the computed
    size when the space exceeds `max_profiles`."""
    size = profile_space_size(g)
    if size > max_profiles:
        raise ProfileCapError(size, max_profiles)
    names = [c.id for c in g.criteria]
    domains = [criterion_domain(g, c) for c in g.criteria]
    return (dict(zip(names, combo)) for combo in itertools.product(*domains))


def sample_profiles(g: Guideline, n: int, seed: int = 0) -> list[dict[str, object]]:
    """Deterministic uniform sample of the profile space (with replacement)."""
    rng = random.Random(f"{seed}:{g.name}")
    names = [c.id for c in g.criteria]
    domains = [criterion_domain(g, c) for c in g.criteria]
    return [
        {name: rng.choice(domain) for name, domain in zip(names, domains)}
        for _ in range(n)
    ]


def _steer_profile(
    profile: dict[str, object],
    g: Guideline,
    expr,
    aim: bool,
    rng: random.Random,
) -> None:
    """Best-effort mutation of `profile` toward making `expr` evaluate `aim`.
    History atoms are left to the history sweep."""
    if isinstance(expr, Not):
        _steer_profile(profile, g, expr.operand, not aim, rng)
    elif isinstance(expr, And):
        if aim:
            for op in expr.operands:
                _steer_profile(profile, g, op, True, rng)
        else:
            _steer_profile(profile, g, rng.choice(expr.operands), False, rng)
    elif isinstance(expr, Or):
        if aim:
            _steer_profile(profile, g, rng.choice(expr.operands), True, rng)
        else:
            for op in expr.operands:
                _steer_profile(profile, g, op, False, rng)
    elif isinstance(expr, FlagTest):
        profile[expr.criterion] = aim
    elif isinstance(expr, Comparison):
        domain = criterion_domain(g, g.criterion(expr.criterion))
        hits = [
            v for v in domain
            if eval_condition(expr, {expr.criterion: v}, ()) is Truth.of(aim)
        ]
        if hits:
            profile[expr.criterion] = rng.choice(hits)


def guided_profiles(g: Guideline, seed: int = 0) -> list[dict[str, object]]:
    """Profiles steered to satisfy each recommendation condition (and each
    contraindication) in isolation, so rare branches get exercised even under
    sampling.  Two variants per target: a benign baseline (flags off, lowest
    quantities) and a randomized one with the other conditions steered false."""
    rng = random.Random(f"guided:{seed}:{g.name}")
    names = [c.id for c in g.criteria]
    domains = {c.id: criterion_domain(g, c) for c in g.criteria}
    benign = {name: domains[name][0] for name in names}
    targets = [rec.when for rec in g.recommendations]
    targets.extend(
        t.contraindication for t in g.treatments if t.contraindication is not None
    )
    out = []
    for expr in targets:
        calm = dict(benign)
        _steer_profile(calm, g, expr, True, rng)
        out.append(calm)
        noisy = {name: rng.choice(domains[name]) for name in names}
        for other in targets:
            if other is not expr:
                _steer_profile(noisy, g, other, False, rng)
        _steer_profile(noisy, g, expr, True, rng)
        out.append(noisy)
    return out


# ---------------------------------------------------------------------------
# KB verification
# ---------------------------------------------------------------------------

def _sweep_histories(g: Guideline) -> list[tuple[HistoryEntry, ...]]:
    histories: list[tuple[HistoryEntry, ...]] = [()]
    histories.extend(
        (HistoryEntry(t.id, Outcome.FAILURE),) for t in g.treatments
    )
    return histories


def _single_item_prescriptions(g: Guideline, fingerprint: str) -> list[ResolvedPrescription]:
    return [
        ResolvedPrescription((ResolvedItem(t.id, t.drug_class),), fingerprint)
        for t in g.treatments
    ]


@dataclass
class VerifyReport:
    guideline_name: str
    profile_space: int
    profiles_checked: int
    sampled: bool
    uncovered_profiles: list[dict[str, object]] = field(default_factory=list)
    unsatisfiable_rules: list[str] = field(default_factory=list)
    disagreements: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.disagreements and not self.unsatisfiable_rules


def verify_kb(
    g: Guideline,
    *,
    max_profiles: int = DEFAULT_PROFILE_CAP,
    sample: int | None = None,
    seed: int = 0,
    uncovered_limit: int = 25,
) -> VerifyReport:
    """Sweep profiles x single-failure histories x single-drug prescriptions.

    Exhaustive when the profile space fits under `max_profiles`; pass `sample`
    to check a deterministic sample of larger spaces instead (rule
    satisfiability then means "witnessed in the sample").  Disagreements
    between the compiled rules and the direct interpreter must be empty.
    """
    rs = compile_guideline(g)
    size = profile_space_size(g)
    if size <= max_profiles:
        profiles: Iterable[dict[str, object]] = enumerate_profiles(g, max_profiles)
        sampled = False
        checked = size
    elif sample is not None:
        steered = guided_profiles(g, seed)
        profiles = steered + sample_profiles(g, max(0, sample - len(steered)), seed)
        sampled = True
        checked = len(profiles)
    else:
        raise ProfileCapError(size, max_profiles)

    report = VerifyReport(g.name, size, checked, sampled)
    histories = _sweep_histories(g)
    prescriptions = _single_item_prescriptions(g, rs.fingerprint)
    unsatisfied = {rule.id for rule in rs.rules}
    uncovered_total = 0

    for profile in profiles:
        covered = False
        for history in histories:
            record = PatientRecord("sweep", profile, history)
            if any(
                eval_condition(rec.when, profile, history) is Truth.TRUE
                for rec in g.recommendations
            ):
                covered = True
            if unsatisfied:
                for rule_id in [
                    rid for rid in unsatisfied
                    if eval_condition(rs.rule(rid).when, profile, history) is Truth.TRUE
                ]:
                    unsatisfied.discard(rule_id)
            for rx in prescriptions:
                left = comparison_key(critique(rs, record, rx))
                right = comparison_key(interpret(g, record, rx))
                if left != right:
                    report.disagreements.append(
                        {
                            "profile": dict(profile),
                            "history": [e.target for e in history],
                            "prescription": rx.items[0].treatment_id,
                            "critique": left,
                            "interpret": right,
                        }
                    )
        if not covered:
            uncovered_total += 1
            if len(report.uncovered_profiles) < uncovered_limit:
                report.uncovered_profiles.append(dict(profile))

    report.unsatisfiable_rules = sorted(unsatisfied)
    return report


# ---------------------------------------------------------------------------
# Cross-guideline conflicts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Conflict:
    profile: tuple[tuple[str, object], ...]
    allowed_a: tuple[str, ...]
    allowed_b: tuple[str, ...]


def _allowed_set(g: Guideline, facts: Mapping[str, object]) -> tuple[set[str], bool]:
    """Treatments at the frontier line of some matching recommendation, plus
    whether any recommendation matched at all (empty history, full facts)."""
    matched = False
    allowed: set[str] = set()
    for rec in g.recommendations:
        if eval_condition(rec.when, facts, ()) is not Truth.TRUE:
            continue
        matched = True
        for item in rec.recommends:
            below = [i.treatment for i in rec.recommends if i.line < item.line]
            exhausted = all(
                _definitely_nonviable(g, t, facts) for t in below
            )
            if exhausted:
                allowed.add(item.treatment)
    return allowed, matched


def _definitely_nonviable(g: Guideline, treatment_id: str, facts) -> bool:
    contra = g.treatment(treatment_id).contraindication
    return contra is not None and eval_condition(contra, facts, ()) is Truth.TRUE


def _union_schema(g1: Guideline, g2: Guideline) -> list[Criterion]:
    merged: dict[str, Criterion] = {c.id: c for c in g1.criteria}
    for c in g2.criteria:
        other = merged.get(c.id)
        if other is None:
            merged[c.id] = c
        elif other.kind is not c.kind:
            raise KBError(
                f"shared criterion {c.id!r} has incompatible kinds: "
                f"{other.kind.value} vs {c.kind.value}"
            )
        elif c.kind is CriterionKind.ENUM and set(other.values) != set(c.values):
            merged[c.id] = Criterion(
                c.id, c.kind, other.source,
                values=tuple(dict.fromkeys(other.values + c.values)),
            )
    return list(merged.values())


def detect_conflicts(
    g1: Guideline,
    g2: Guideline,
    *,
    max_profiles: int = DEFAULT_PROFILE_CAP,
) -> list[Conflict]:
    """Profiles where both guidelines speak and their allowed sets are
    disjoint and non-empty — the contradictory-guidance scenario."""
    criteria = _union_schema(g1, g2)
    domains = []
    for criterion in criteria:
        if criterion.kind is CriterionKind.QUANTITY:
            reps = sorted(
                set(quantity_representatives(g1, criterion.id))
                | set(quantity_representatives(g2, criterion.id))
            )
            domains.append(tuple(reps))
        elif criterion.kind is CriterionKind.ENUM:
            domains.append(tuple(criterion.values))
        else:
            domains.append((False, True))
    size = math.prod(len(d) for d in domains)
    if size > max_profiles:
        raise ProfileCapError(size, max_profiles)
    names = [c.id for c in criteria]
    conflicts: list[Conflict] = []
    for combo in itertools.product(*domains):
        facts = dict(zip(names, combo))
        allowed_a, matched_a = _allowed_set(g1, facts)
        if not matched_a or not allowed_a:
            continue
        allowed_b, matched_b = _allowed_set(g2, facts)
        if not matched_b or not allowed_b:
            continue
        if allowed_a.isdisjoint(allowed_b):
            conflicts.append(
                Conflict(
                    profile=tuple(sorted(facts.items())),
                    allowed_a=tuple(sorted(allowed_a)),
                    allowed_b=tuple(sorted(allowed_b)),
                )
            )
    return conflicts


# ---------------------------------------------------------------------------
# Equivalence sweep over generated knowledge bases (the build gate)
# ---------------------------------------------------------------------------

@dataclass
class SweepResult:
    kbs: int = 0
    contexts: int = 0
    comparisons: int = 0
    disagreements: list[dict] = field(default_factory=list)


def _fact_domains_with_unknown(g: Guideline) -> list[tuple[str, tuple[object, ...]]]:
    out = []
    for criterion in g.criteria:
        domain: tuple[object, ...] = (None,) + criterion_domain(g, criterion)
        out.append((criterion.id, domain))
    return out


def equivalence_sweep(g: Guideline, rs: RuleSet | None = None) -> SweepResult:
    """Exhaustively compare critique and interpret over every fact assignment
    (including absent facts), every empty-or-single-failure history, and every
    single-drug prescription."""
    rs = rs or compile_guideline(g)
    result = SweepResult(kbs=1)
    domains = _fact_domains_with_unknown(g)
    names = [name for name, _ in domains]
    prescriptions = _single_item_prescriptions(g, rs.fingerprint)
    histories = _sweep_histories(g)
    for combo in itertools.product(*[d for _, d in domains]):
        facts = {n: v for n, v in zip(names, combo) if v is not None}
        for history in histories:
            record = PatientRecord("sweep", facts, history)
            result.contexts += 1
            for rx in prescriptions:
                result.comparisons += 1
                left = comparison_key(critique(rs, record, rx))
                right = comparison_key(interpret(g, record, rx))
                if left != right:
                    result.disagreements.append(
                        {
                            "guideline": g.name,
                            "facts": dict(facts),
                            "history": [e.target for e in history],
                            "prescription": rx.items[0].treatment_id,
                            "critique": left,
                            "interpret": right,
                        }
                    )
    return result


def _edge_case_kbs() -> list[Guideline]:
    def flag(i):
        return Criterion(f"c{i}", CriterionKind.FLAG, FactSource.RECORD)

    a, b = FlagTest("c0"), FlagTest("c1")
    kbs = []
    # identical conditions, different recommends: suppression must reconcile them
    kbs.append(Guideline(
        "edge_twins", Strategy.STAR, (flag(0),),
        (Treatment("t0", "k0"), Treatment("t1", "k1")),
        (
            Recommendation("r0", a, (RecommendedTreatment("t0", 1),)),
            Recommendation("r1", a, (RecommendedTreatment("t1", 1),)),
        ),
    ))
    # same treatment on different lines of overlapping recommendations
    kbs.append(Guideline(
        "edge_lines", Strategy.STAR, (flag(0), flag(1)),
        (Treatment("t0", "k0"), Treatment("t1", "k1")),
        (
            Recommendation("r0", a, (RecommendedTreatment("t0", 1),
                                     RecommendedTreatment("t1", 2))),
            Recommendation("r1", b, (RecommendedTreatment("t1", 1),)),
        ),
    ))
    # shared drug class, one member second-line
    kbs.append(Guideline(
        "edge_class", Strategy.STAR, (flag(0), flag(1)),
        (Treatment("t0", "k0"), Treatment("t1", "k0"), Treatment("t2", "k1")),
        (
            Recommendation("r0", a, (RecommendedTreatment("t2", 1),
                                     RecommendedTreatment("t0", 2))),
            Recommendation("r1", And((a, b)), (RecommendedTreatment("t1", 1),)),
        ),
    ))
    # contraindications gate the frontier
    kbs.append(Guideline(
        "edge_contra", Strategy.STAR, (flag(0), flag(1)),
        (
            Treatment("t0", "k0", contraindication=FlagTest("c1")),
            Treatment("t1", "k1"),
            Treatment("t2", "k2", contraindication=And((a, b))),
        ),
        (
            Recommendation("r0", a, (RecommendedTreatment("t0", 1),
                                     RecommendedTreatment("t1", 2))),
        ),
    ))
    # history atoms inside a recommendation condition
    kbs.append(Guideline(
        "edge_history", Strategy.STAR, (flag(0),),
        (Treatment("t0", "k0"), Treatment("t1", "k1")),
        (
            Recommendation("r0", And((a, Not(TriedAndFailed("t0")))),
                           (RecommendedTreatment("t0", 1),)),
            Recommendation("r1", And((a, TriedAndFailed("t0"))),
                           (RecommendedTreatment("t1", 1),)),
        ),
    ))
    # no recommendations at all: only global rules can fire
    kbs.append(Guideline(
        "edge_global", Strategy.STAR, (flag(0),),
        (Treatment("t0", "k0", contraindication=a), Treatment("t1", "k0")),
        (),
    ))
    # complementary conditions partition the profile space
    kbs.append(Guideline(
        "edge_split", Strategy.STAR, (flag(0), flag(1)),
        (Treatment("t0", "k0"), Treatment("t1", "k1"), Treatment("t2", "k2")),
        (
            Recommendation("r0", And((a, b)), (RecommendedTreatment("t0", 1),)),
            Recommendation("r1", Not(And((a, b))),
                           (RecommendedTreatment("t1", 1),
                            RecommendedTreatment("t2", 2))),
        ),
    ))
    return kbs


def _random_condition(rng: random.Random, names: list[str], treatments: list[str], depth: int):
    roll = rng.random()
    if depth == 0 or roll < 0.45:
        if treatments and rng.random() < 0.18:
            target = rng.choice(treatments)
            return (TriedAndFailed(target) if rng.random() < 0.7
                    else CurrentlyOn(target))
        name = rng.choice(names)
        if rng.random() < 0.75:
            return FlagTest(name)
        return Comparison(name, rng.choice(["=", "!="]), rng.random() < 0.5)
    if roll < 0.6:
        return Not(_random_condition(rng, names, treatments, depth - 1))
    parts = tuple(
        _random_condition(rng, names, treatments, depth - 1)
        for _ in range(rng.randint(2, 3))
    )
    return And(parts) if roll < 0.8 else Or(parts)


_SWEEP_LINE_PATTERNS = [(1,), (1, 1), (1, 2), (1, 1, 2), (1, 2, 2), (1, 2, 3)]


def generate_sweep_kbs(count: int = 40, seed: int = 20260331) -> list[Guideline]:
    """Deterministic family of small all-flag knowledge bases for the
    equivalence sweep: hand-built edge cases first, then seeded random ones."""
    rng = random.Random(seed)
    kbs = _edge_case_kbs()
    index = 0
    while len(kbs) < count:
        index += 1
        n_criteria = rng.choice([2, 2, 3, 3, 3, 4, 4, 4, 5, 6])
        n_treatments = rng.randint(1, 4)
        names = [f"c{i}" for i in range(n_criteria)]
        criteria = tuple(
            Criterion(n, CriterionKind.FLAG, FactSource.RECORD) for n in names
        )
        treatment_ids = [f"t{i}" for i in range(n_treatments)]
        class_pool = [f"k{i}" for i in range(rng.randint(1, 3))]
        treatments = []
        for tid in treatment_ids:
            contra = None
            if rng.random() < 0.35:
                contra = _random_condition(rng, names, [], rng.randint(1, 2))
            treatments.append(Treatment(tid, rng.choice(class_pool), contraindication=contra))
        recommendations = []
        for r in range(rng.randint(0, 3)):
            when = _random_condition(rng, names, treatment_ids, rng.randint(1, 2))
            pattern = rng.choice(
                [p for p in _SWEEP_LINE_PATTERNS if len(p) <= n_treatments]
            )
            chosen = rng.sample(treatment_ids, len(pattern))
            recommends = tuple(
                RecommendedTreatment(t, line) for t, line in zip(chosen, pattern)
            )
            strength = rng.choice([None, Grade.A, Grade.B, Grade.C])
            recommendations.append(
                Recommendation(f"r{r}", when, recommends, strength=strength)
            )
        kbs.append(Guideline(
            f"sweep_{index:03d}", Strategy.STAR, criteria,
            tuple(treatments), tuple(recommendations),
        ))
    return kbs
