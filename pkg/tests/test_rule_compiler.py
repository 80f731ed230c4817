"""Compilation clauses, determinism, the count law, and rule serialization."""

import pytest
from hypothesis import given, settings

from kb_strategies import guidelines
from rxcritic.gdl_parser import parse_guideline
from rxcritic.kb_model import (
    And,
    CriticismType,
    FlagTest,
    Not,
    Or,
    TriedAndFailed,
)
from rxcritic.rule_compiler import (
    MatchBy,
    compile_guideline,
    dump_ruleset,
    expected_rule_count,
    explain_rule,
    expr_to_prefix,
    load_ruleset,
    prefix_to_expr,
)

MINI_KB = """
guideline mini {
  strategy star;
  criterion ctx: flag source form;
  treatment tx_a { class cls_a; }
  treatment tx_b { class cls_b; }
  treatment tx_c { class cls_c; }
  recommendation r1 { when ctx; recommend tx_a line 1, tx_b line 2; }
}
"""


@pytest.fixture()
def mini():
    return parse_guideline(MINI_KB)


def test_no_recommendations_yields_only_failed_rules():
    g = parse_guideline(
        """
        guideline bare {
          strategy star;
          criterion ctx: flag source form;
          treatment tx_a { class cls_a; }
          treatment tx_b { class cls_b; }
          treatment tx_c { class cls_c; }
        }
        """
    )
    rs = compile_guideline(g)
    assert len(rs.rules) == 3
    assert {r.criticism.ctype for r in rs.rules} == {CriticismType.ALREADY_FAILED}


def test_mini_kb_compiles_to_five_rules(mini):
    rs = compile_guideline(mini)
    assert len(rs.rules) == 5
    by_type = {}
    for r in rs.rules:
        by_type.setdefault(r.criticism.ctype, []).append(r)

    assert len(by_type[CriticismType.ALREADY_FAILED]) == 3

    (nr,) = by_type[CriticismType.NOT_RECOMMENDED]
    assert nr.when == FlagTest("ctx")
    assert nr.prescribed.match_by is MatchBy.DRUG_CLASS
    assert nr.prescribed.value == "cls_c"
    assert nr.criticism.proposals == ("tx_a",)
    assert nr.provenance == "r1"

    (nfl,) = by_type[CriticismType.NOT_FIRST_LINE]
    assert nfl.prescribed.value == "tx_b"
    assert nfl.when == And((FlagTest("ctx"), Not(TriedAndFailed("tx_a"))))
    assert nfl.criticism.proposals == ("tx_a",)


def test_contraindication_clause():
    g = parse_guideline(
        MINI_KB.replace(
            "treatment tx_a { class cls_a; }",
            "treatment tx_a { class cls_a; contra ctx; }",
        )
    )
    rs = compile_guideline(g)
    contras = [r for r in rs.rules if r.criticism.ctype is CriticismType.CONTRAINDICATED]
    assert len(contras) == 1
    assert contras[0].when == FlagTest("ctx")
    assert contras[0].prescribed.value == "tx_a"
    assert contras[0].provenance == "global"
    assert len(rs.rules) == 6


def test_exhausted_expansion_covers_contraindications():
    g = parse_guideline(
        """
        guideline deep {
          strategy star;
          criterion ctx: flag source form;
          criterion hep: flag source record;
          treatment tx_a { class cls_a; contra hep; }
          treatment tx_b { class cls_b; }
          treatment tx_c { class cls_c; }
          recommendation r1 { when ctx; recommend tx_a line 1, tx_b line 2, tx_c line 3; }
        }
        """
    )
    rs = compile_guideline(g)
    nfl_c = rs.rule("r1:not_first_line:tx_c")
    # below line 3: tx_a (failed or contra) and tx_b (failed)
    assert nfl_c.when == And((
        FlagTest("ctx"),
        Not(And((
            Or((TriedAndFailed("tx_a"), FlagTest("hep"))),
            TriedAndFailed("tx_b"),
        ))),
    ))
    assert nfl_c.criticism.proposals == ("tx_a", "tx_b")


def test_suppression_conjunct_for_overlapping_recommendations():
    g = parse_guideline(
        """
        guideline overlap {
          strategy star;
          criterion a: flag source form;
          criterion b: flag source form;
          treatment tx_a { class cls_a; }
          treatment tx_b { class cls_b; }
          recommendation r1 { when a; recommend tx_a line 1; }
          recommendation r2 { when b; recommend tx_b line 1; }
        }
        """
    )
    rs = compile_guideline(g)
    # r2's complaint about class cls_a must stand down while r1 allows tx_a
    nr = rs.rule("r2:not_recommended:cls_a")
    assert nr.when == And((FlagTest("b"), Not(FlagTest("a"))))


def test_dedup_keeps_smallest_provenance():
    g = parse_guideline(
        """
        guideline dup {
          strategy star;
          criterion a: flag source form;
          treatment tx_a { class cls_a; }
          treatment tx_b { class cls_b; }
          recommendation r2 { when a; recommend tx_a line 1; }
          recommendation r1 { when a; recommend tx_a line 1; }
        }
        """
    )
    rs = compile_guideline(g)
    nr_rules = [r for r in rs.rules if r.criticism.ctype is CriticismType.NOT_RECOMMENDED]
    assert len(nr_rules) == 1
    assert nr_rules[0].provenance == "r1"
    assert expected_rule_count(g) == len(rs.rules) + 1  # one collision deduplicated


def test_compile_is_deterministic(mini):
    a = dump_ruleset(compile_guideline(mini))
    b = dump_ruleset(compile_guideline(mini))
    assert a == b


@settings(max_examples=150, deadline=None)
@given(guidelines(max_criteria=6, max_treatments=5, max_recommendations=4))
def test_count_law_on_generated_kbs(g):
    rs = compile_guideline(g)
    collisions = expected_rule_count(g) - len(rs.rules)
    assert collisions >= 0
    if len({rec.when for rec in g.recommendations}) == len(g.recommendations):
        # distinct conditions leave no room for (when, matcher, ctype) collisions
        assert collisions == 0


def test_explain_rule_templates(mini):
    rs = compile_guideline(mini)
    nfl = explain_rule(rs, "r1:not_first_line:tx_b")
    assert "second-line" in nfl
    assert "tx_a" in nfl
    failed = explain_rule(rs, "global:already_failed:tx_c")
    assert "tx_c" in failed and "without success" in failed
    with pytest.raises(KeyError):
        explain_rule(rs, "nope")


def test_explain_rule_includes_grade_and_excerpt():
    g = parse_guideline(
        MINI_KB.replace(
            "recommend tx_a line 1, tx_b line 2; }",
            'recommend tx_a line 1, tx_b line 2; strength A; text "use tx_a first"; }',
        )
    )
    rs = compile_guideline(g)
    text = explain_rule(rs, "r1:not_first_line:tx_b")
    assert "grade A" in text
    assert "use tx_a first" in text


def test_prefix_notation_roundtrip(mini):
    rs = compile_guideline(mini)
    for rule in rs.rules:
        assert prefix_to_expr(expr_to_prefix(rule.when)) == rule.when


def test_ruleset_file_roundtrip(mini):
    rs = compile_guideline(mini)
    text = dump_ruleset(rs)
    loaded = load_ruleset(text)
    assert loaded == rs
    assert '"ruleset_version": 1' in text
