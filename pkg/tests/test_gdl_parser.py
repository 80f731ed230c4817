"""DSL parsing, canonical serialization, and static KB lint warnings."""

import pytest
from hypothesis import given, settings

from kb_strategies import guidelines
from rxcritic.gdl_parser import (
    GdlError,
    Severity,
    condition_text,
    fingerprint_of,
    parse_guideline,
    serialize_guideline,
    try_parse,
    validate_static,
)
from rxcritic.kb_model import (
    And,
    Comparison,
    FlagTest,
    Grade,
    Intensity,
    Not,
    Or,
    Strategy,
    TriedAndFailed,
)

MINIMAL = """
guideline tiny {
  strategy star;
  criterion diabetes: flag source record;
  treatment tx_a { class alpha; }
  recommendation r1 { when diabetes; recommend tx_a line 1; }
}
"""


def test_minimal_counts():
    g = parse_guideline(MINIMAL)
    assert (len(g.criteria), len(g.treatments), len(g.recommendations)) == (1, 1, 1)
    assert g.strategy is Strategy.STAR


def test_full_surface_parses():
    src = """
    # a comment
    guideline demo {
      strategy waterfall stage stage_val;
      criterion stage_val: number unit "steps" source record;
      criterion kind: enum { pure, mixed } source form;  # trailing comment
      criterion smoker: flag source form;
      criterion ldl: number unit "g/L" source lab;
      treatment tx_a { class alpha; intensity low; contra smoker and ldl >= 1.6; }
      treatment tx_b { class beta; }
      recommendation r1 {
        when stage_val <= 1 and (kind = pure or not smoker);
        recommend tx_a line 1, tx_b line 2;
        strength B;
        text "step one\\nwith \\"quotes\\"";
      }
      recommendation r2 { when stage_val > 1 and failed(tx_a); recommend tx_b line 1; }
    }
    """
    g = parse_guideline(src)
    assert g.stage_criterion == "stage_val"
    assert g.treatment("tx_a").intensity is Intensity.LOW
    rec = g.recommendations[0]
    assert rec.strength is Grade.B
    assert rec.excerpt == 'step one\nwith "quotes"'
    assert rec.when == And((
        Comparison("stage_val", "<=", 1.0),
        Or((Comparison("kind", "=", "pure"), Not(FlagTest("smoker")))),
    ))
    assert g.recommendations[1].when == And((
        Comparison("stage_val", ">", 1.0), TriedAndFailed("tx_a"),
    ))


def test_undefined_treatment_diagnostic():
    src = MINIMAL.replace("recommend tx_a line 1", "recommend ghost line 1")
    result = try_parse(src)
    assert result.guideline is None
    assert [d.code for d in result.diagnostics] == ["undefined-treatment"]
    line, col = result.diagnostics[0].location
    assert line >= 1 and col >= 1
    assert "ghost" in src.splitlines()[line - 1]


@pytest.mark.parametrize(
    "mutate, code",
    [
        (lambda s: s.replace("when diabetes;", "when ldl_missing;"), "undefined-criterion"),
        (lambda s: s.replace("strategy star;", "strategy star"), "syntax-error"),
        (lambda s: s + "garbage", "syntax-error"),
        (
            lambda s: s.replace(
                "criterion diabetes: flag source record;",
                "criterion diabetes: flag source record;\n  criterion diabetes: flag source form;",
            ),
            "duplicate-identifier",
        ),
        (lambda s: s.replace("when diabetes;", "when diabetes > 2;"), "type-mismatch"),
        (lambda s: s.replace("recommend tx_a line 1;", "recommend tx_a line 2;"), "line-gap"),
    ],
)
def test_error_codes(mutate, code):
    result = try_parse(mutate(MINIMAL))
    assert result.guideline is None
    assert code in {d.code for d in result.diagnostics}


def test_bad_enum_value_diagnostic():
    src = """
    guideline e {
      strategy star;
      criterion kind: enum { pure, mixed } source form;
      treatment tx_a { class alpha; }
      recommendation r1 { when kind = exotic; recommend tx_a line 1; }
    }
    """
    result = try_parse(src)
    assert result.guideline is None
    assert {d.code for d in result.diagnostics} == {"bad-enum-value"}


def test_multiple_semantic_errors_reported_together():
    src = """
    guideline multi {
      strategy star;
      criterion a: flag source record;
      treatment tx_a { class alpha; contra ghost_crit; }
      recommendation r1 { when a; recommend ghost_tx line 1; }
    }
    """
    result = try_parse(src)
    codes = [d.code for d in result.diagnostics]
    assert "undefined-criterion" in codes and "undefined-treatment" in codes


def test_roundtrip_minimal():
    g = parse_guideline(MINIMAL)
    assert parse_guideline(serialize_guideline(g)) == g


def test_roundtrip_bundled_kb():
    from rxcritic.bundle import bundled_guideline

    g = bundled_guideline()
    reparsed = parse_guideline(serialize_guideline(g))
    assert reparsed == g
    assert fingerprint_of(reparsed) == fingerprint_of(g)


def test_serialization_deterministic():
    g = parse_guideline(MINIMAL)
    assert serialize_guideline(g) == serialize_guideline(g)
    assert fingerprint_of(g) == fingerprint_of(g)


def test_condition_text_minimal_parens():
    expr = Or((And((FlagTest("a"), Not(FlagTest("b")))), FlagTest("c")))
    assert condition_text(expr) == "a and not b or c"
    expr2 = And((Or((FlagTest("a"), FlagTest("b"))), FlagTest("c")))
    assert condition_text(expr2) == "(a or b) and c"


@settings(max_examples=200, deadline=None)
@given(guidelines())
def test_roundtrip_property(g):
    text = serialize_guideline(g)
    reparsed = parse_guideline(text)
    assert reparsed == g
    assert serialize_guideline(reparsed) == text


# ---------------------------------------------------------------------------
# validate_static
# ---------------------------------------------------------------------------

def test_clean_minimal_kb_has_no_warnings():
    g = parse_guideline(MINIMAL)
    assert validate_static(g) == []


def test_ambiguous_recommendation_warning():
    src = """
    guideline amb {
      strategy star;
      criterion a: flag source record;
      treatment tx_a { class alpha; }
      treatment tx_b { class beta; }
      recommendation r1 { when a; recommend tx_a line 1; }
      recommendation r2 { when a; recommend tx_b line 1; }
    }
    """
    result = try_parse(src)
    warnings = validate_static(result.guideline, result.spans)
    assert [w.code for w in warnings] == ["ambiguous-recommendation"]
    assert warnings[0].severity is Severity.WARNING
    line, _ = warnings[0].location
    assert "r2" in src.splitlines()[line - 1]


def test_orphan_treatment_warning():
    src = MINIMAL.replace(
        "treatment tx_a { class alpha; }",
        "treatment tx_a { class alpha; }\n  treatment tx_lone { class beta; }",
    )
    result = try_parse(src)
    warnings = validate_static(result.guideline, result.spans)
    assert [w.code for w in warnings] == ["orphan-treatment"]
    assert "tx_lone" in warnings[0].message


def test_waterfall_stage_order_warning():
    src = """
    guideline wf {
      strategy waterfall stage stage_val;
      criterion stage_val: number unit "steps" source record;
      treatment tx_a { class alpha; }
      treatment tx_b { class beta; }
      recommendation late { when stage_val >= 2; recommend tx_a line 1; }
      recommendation early { when stage_val < 2; recommend tx_b line 1; }
    }
    """
    result = try_parse(src)
    warnings = validate_static(result.guideline, result.spans)
    assert [w.code for w in warnings] == ["waterfall-stage-order"]
    assert "early" in warnings[0].message


def test_waterfall_in_order_is_clean():
    src = """
    guideline wf {
      strategy waterfall stage stage_val;
      criterion stage_val: number unit "steps" source record;
      treatment tx_a { class alpha; }
      treatment tx_b { class beta; }
      recommendation early { when stage_val < 2; recommend tx_a line 1; }
      recommendation late { when stage_val >= 2; recommend tx_b line 1; }
    }
    """
    result = try_parse(src)
    assert validate_static(result.guideline, result.spans) == []


def test_parse_guideline_raises_with_diagnostics():
    with pytest.raises(GdlError) as exc:
        parse_guideline("guideline broken {")
    assert exc.value.diagnostics[0].code == "syntax-error"
