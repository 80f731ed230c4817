"""Three-valued evaluation and structural invariants of the domain model."""

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rxcritic.kb_model import (
    And,
    Comparison,
    Criterion,
    CriterionKind,
    Criticism,
    CriticismType,
    CurrentlyOn,
    FactSource,
    FlagTest,
    Guideline,
    HistoryEntry,
    KBError,
    Not,
    Or,
    Outcome,
    Recommendation,
    RecommendedTreatment,
    SchemaError,
    Strategy,
    Treatment,
    TriedAndFailed,
    Truth,
    eval_condition,
    kleene_and,
    kleene_not,
    kleene_or,
    unresolved_criteria,
)

T, F, U = Truth.TRUE, Truth.FALSE, Truth.UNKNOWN


def test_flag_lookup_true():
    assert eval_condition(FlagTest("diabetes"), {"diabetes": True}) is T


def test_kleene_and_with_absent_operand_is_unknown():
    expr = And((FlagTest("a"), FlagTest("b")))
    assert eval_condition(expr, {"a": True}) is U


def test_kleene_or_short_circuits_over_absent_operand():
    expr = Or((FlagTest("a"), FlagTest("b")))
    assert eval_condition(expr, {"a": True}) is T


def test_numeric_comparison():
    expr = Comparison("ldl", ">=", 1.6)
    assert eval_condition(expr, {"ldl": 1.9}) is T
    assert eval_condition(expr, {"ldl": 1.5}) is F
    assert eval_condition(expr, {}) is U


def test_enum_and_bool_comparisons():
    assert eval_condition(Comparison("kind", "=", "mixed"), {"kind": "mixed"}) is T
    assert eval_condition(Comparison("kind", "!=", "mixed"), {"kind": "pure"}) is T
    assert eval_condition(Comparison("smoker", "=", True), {"smoker": False}) is F


def test_type_mismatch_raises_schema_error():
    with pytest.raises(SchemaError):
        eval_condition(FlagTest("ldl"), {"ldl": 1.9})
    with pytest.raises(SchemaError):
        eval_condition(Comparison("ldl", ">=", 1.6), {"ldl": "high"})
    with pytest.raises(SchemaError):
        eval_condition(Comparison("smoker", "=", True), {"smoker": 3.0})


def test_history_atoms_never_unknown():
    failed = HistoryEntry("tx_a", Outcome.FAILURE)
    ongoing = HistoryEntry("tx_b", Outcome.ONGOING)
    assert eval_condition(TriedAndFailed("tx_a"), {}, [failed]) is T
    assert eval_condition(TriedAndFailed("tx_b"), {}, [failed, ongoing]) is F
    assert eval_condition(CurrentlyOn("tx_b"), {}, [failed, ongoing]) is T
    assert eval_condition(CurrentlyOn("tx_b"), {}, []) is F


def test_class_level_history_entry_covers_members():
    entry = HistoryEntry("statin", Outcome.FAILURE, covers=frozenset({"tx_a", "tx_b"}))
    assert eval_condition(TriedAndFailed("tx_a"), {}, [entry]) is T
    assert eval_condition(TriedAndFailed("tx_c"), {}, [entry]) is F


def test_failure_window_excludes_old_entries():
    import datetime

    old = HistoryEntry("tx_a", Outcome.FAILURE, start_date=datetime.date(2019, 1, 10))
    as_of = datetime.date(2026, 1, 10)
    assert eval_condition(TriedAndFailed("tx_a"), {}, [old], as_of=as_of) is T
    assert (
        eval_condition(
            TriedAndFailed("tx_a"), {}, [old], as_of=as_of, failure_window_days=365
        )
        is F
    )


# ---------------------------------------------------------------------------
# Truth-table properties
# ---------------------------------------------------------------------------

FLAGS = ["c0", "c1", "c2", "c3", "c4", "c5"]


def _assignments(names, with_unknown=True):
    domain = (None, False, True) if with_unknown else (False, True)
    for combo in itertools.product(domain, repeat=len(names)):
        yield {n: v for n, v in zip(names, combo) if v is not None}


def _exprs(names):
    a, b, c = FlagTest(names[0]), FlagTest(names[1]), FlagTest(names[2])
    return [
        a,
        Not(a),
        And((a, b)),
        Or((a, b)),
        And((Or((a, b)), Not(c))),
        Or((And((a, Not(b))), c)),
        Not(And((a, b, c))),
        Or((a, b, c)),
    ]


def test_double_negation_and_de_morgan_exhaustively():
    names = FLAGS[:3]
    for expr in _exprs(names):
        for facts in _assignments(names):
            v = eval_condition(expr, facts)
            assert eval_condition(Not(Not(expr)), facts) is v
    for facts in _assignments(names):
        a, b = FlagTest(names[0]), FlagTest(names[1])
        assert eval_condition(Not(And((a, b))), facts) is eval_condition(
            Or((Not(a), Not(b))), facts
        )
        assert eval_condition(Not(Or((a, b))), facts) is eval_condition(
            And((Not(a), Not(b))), facts
        )


def test_adding_a_fact_never_flips_definite_values():
    # monotone refinement: resolving an absent fact can settle UNKNOWN but
    # never turn TRUE into FALSE or vice versa
    names = FLAGS[:3]
    for expr in _exprs(names):
        for facts in _assignments(names):
            before = eval_condition(expr, facts)
            for name in names:
                if name in facts:
                    continue
                for value in (False, True):
                    after = eval_condition(expr, {**facts, name: value})
                    if before is not U:
                        assert after is before
    # and the dual: deleting a fact can only move a value toward UNKNOWN
    for expr in _exprs(names):
        for facts in _assignments(names, with_unknown=False):
            before = eval_condition(expr, facts)
            for name in names:
                smaller = {k: v for k, v in facts.items() if k != name}
                after = eval_condition(expr, smaller)
                assert after is before or after is U


@st.composite
def _expr_and_facts(draw):
    names = FLAGS[: draw(st.integers(min_value=1, max_value=6))]
    def node(depth):
        if depth == 0:
            return st.sampled_from([FlagTest(n) for n in names])
        sub = node(depth - 1)
        return st.one_of(
            st.sampled_from([FlagTest(n) for n in names]),
            st.builds(Not, sub),
            st.builds(lambda x, y: And((x, y)), sub, sub),
            st.builds(lambda x, y: Or((x, y)), sub, sub),
        )
    expr = draw(node(3))
    facts = draw(
        st.dictionaries(st.sampled_from(names), st.booleans(), max_size=len(names))
    )
    return expr, facts


@settings(max_examples=300, deadline=None)
@given(_expr_and_facts(), st.data())
def test_monotonicity_property(expr_and_facts, data):
    expr, facts = expr_and_facts
    before = eval_condition(expr, facts)
    if not facts:
        return
    victim = data.draw(st.sampled_from(sorted(facts)))
    after = eval_condition(expr, {k: v for k, v in facts.items() if k != victim})
    assert after is before or after is U


def test_kleene_tables():
    assert kleene_not(U) is U
    assert kleene_and([T, U]) is U
    assert kleene_and([F, U]) is F
    assert kleene_or([T, U]) is T
    assert kleene_or([F, U]) is U


# ---------------------------------------------------------------------------
# Structural invariants
# ---------------------------------------------------------------------------

def _mini_guideline():
    return Guideline(
        name="mini",
        strategy=Strategy.STAR,
        criteria=(
            Criterion("diabetes", CriterionKind.FLAG, FactSource.RECORD),
            Criterion("ldl", CriterionKind.QUANTITY, FactSource.LAB, unit="g/L"),
        ),
        treatments=(
            Treatment("tx_a", "alpha"),
            Treatment("tx_b", "beta", contraindication=FlagTest("diabetes")),
        ),
        recommendations=(
            Recommendation(
                "r1",
                when=Comparison("ldl", ">=", 1.6),
                recommends=(
                    RecommendedTreatment("tx_a", 1),
                    RecommendedTreatment("tx_b", 2),
                ),
            ),
        ),
    )


def test_valid_guideline_constructs():
    g = _mini_guideline()
    assert g.drug_classes == ("alpha", "beta")
    assert g.criterion("ldl").unit == "g/L"


def test_duplicate_ids_rejected():
    g = _mini_guideline()
    with pytest.raises(KBError, match="duplicate"):
        Guideline(
            name="dup",
            strategy=Strategy.STAR,
            criteria=g.criteria + (g.criteria[0],),
            treatments=g.treatments,
            recommendations=g.recommendations,
        )


def test_undeclared_reference_rejected():
    g = _mini_guideline()
    with pytest.raises(KBError, match="undefined criterion"):
        Guideline(
            name="bad",
            strategy=Strategy.STAR,
            criteria=g.criteria,
            treatments=(Treatment("tx_a", "alpha", contraindication=FlagTest("ghost")),),
            recommendations=(),
        )


def test_ordering_op_on_enum_rejected():
    crit = Criterion("kind", CriterionKind.ENUM, FactSource.FORM, values=("x", "y"))
    with pytest.raises(KBError, match="ordering operator"):
        Guideline(
            name="bad",
            strategy=Strategy.STAR,
            criteria=(crit,),
            treatments=(Treatment("tx_a", "alpha"),),
            recommendations=(
                Recommendation(
                    "r1",
                    when=Comparison("kind", "<", "x"),
                    recommends=(RecommendedTreatment("tx_a", 1),),
                ),
            ),
        )


def test_line_gap_rejected():
    with pytest.raises(KBError, match="non-contiguous"):
        Recommendation(
            "r1",
            when=FlagTest("x"),
            recommends=(RecommendedTreatment("tx_a", 1), RecommendedTreatment("tx_b", 3)),
        )


def test_empty_enum_rejected():
    with pytest.raises(KBError):
        Criterion("kind", CriterionKind.ENUM, FactSource.FORM)


def test_criticism_never_proposes_its_target():
    with pytest.raises(KBError):
        Criticism(CriticismType.NOT_RECOMMENDED, "tx_a", "why", proposals=("tx_a",))


def test_severity_order_is_total():
    order = [
        CriticismType.CONTRAINDICATED,
        CriticismType.ALREADY_FAILED,
        CriticismType.NOT_FIRST_LINE,
        CriticismType.NOT_RECOMMENDED,
    ]
    assert sorted(order, key=lambda c: c.severity) == order
    assert len({c.severity for c in order}) == 4


def test_unresolved_criteria_reports_absent_only():
    expr = And((FlagTest("a"), Or((FlagTest("b"), Comparison("ldl", ">", 1.0)))))
    assert unresolved_criteria(expr, {"b": True}) == ["a", "ldl"]
