"""Parser and serializer for the guideline DSL (`.gdl` files).

The format is line-oriented and diffable so clinicians can review knowledge
bases under version control.  Grammar sketch::

    guideline  := "guideline" IDENT "{" "strategy" ("waterfall" ["stage" IDENT] | "star") ";"
                  criterion* treatment* recommendation* "}"
    criterion  := "criterion" IDENT ":" ("flag" | "enum" "{" IDENT ("," IDENT)* "}"
                  | "number" "unit" STRING) "source" ("record"|"form"|"lab") ";"
    treatment  := "treatment" IDENT "{" "class" IDENT ";" ["intensity" ("low"|"mid"|"high") ";"]
                  ["contra" cond ";"] "}"
    recommendation := "recommendation" IDENT "{" "when" cond ";"
                  "recommend" IDENT "line" INT ("," IDENT "line" INT)* ";"
                  ["strength" ("A"|"B"|"C") ";"] ["text" STRING ";"] "}"
    cond       := or ; or := and ("or" and)* ; and := unary ("and" unary)*
    unary      := "not" unary | "(" cond ")" | atom
    atom       := IDENT | IDENT ("="|"!="|"<"|"<="|">"|">=") literal
                  | "failed" "(" IDENT ")" | "ongoing" "(" IDENT ")"

`#` starts a comment running to end of line.  Serialization is canonical and
deterministic: parse -> serialize -> parse is the identity on valid inputs.
"""

from __future__ import annotations

import enum
import hashlib
import re
from dataclasses import dataclass, field

from .kb_model import (
    And,
    Comparison,
    ConditionExpr,
    Criterion,
    CriterionKind,
    CurrentlyOn,
    FactSource,
    FlagTest,
    Grade,
    Guideline,
    Intensity,
    Not,
    Or,
    Recommendation,
    RecommendedTreatment,
    Strategy,
    Treatment,
    TriedAndFailed,
    atoms_in,
)

KEYWORDS = frozenset(
    """guideline strategy waterfall star stage criterion flag enum number unit
    source record form lab treatment class intensity low mid high contra
    recommendation when recommend line strength text and or not failed ongoing
    true false""".split()
)


class Severity(enum.Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class ParseDiagnostic:
    severity: Severity
    location: tuple[int, int]  # 1-based (line, column)
    code: str
    message: str

    def __str__(self) -> str:
        line, col = self.location
        return f"{self.severity.value}[{self.code}] at {line}:{col}: {self.message}"


class GdlError(ValueError):
    """Parsing failed; `diagnostics` holds every error found."""

    def __init__(self, diagnostics: list[ParseDiagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


@dataclass
class ParseResult:
    guideline: Guideline | None
    diagnostics: list[ParseDiagnostic]
    # source locations of named constructs, for warning reports:
    # ("criterion"|"treatment"|"recommendation", id) -> (line, column)
    spans: dict[tuple[str, str], tuple[int, int]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.guideline is not None


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<number>-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|!=|=|<|>)
  | (?P<punct>[{}();:,])
    """,
    re.VERBOSE,
)

_ESCAPES = {"\\": "\\", '"': '"', "n": "\n", "t": "\t", "r": "\r"}


@dataclass(frozen=True)
class _Token:
    kind: str  # number string ident keyword op punct eof
    text: str
    line: int
    col: int


class _Syntax(Exception):
    def __init__(self, loc: tuple[int, int], message: str):
        self.loc = loc
        self.message = message
        super().__init__(message)


def _tokenize(source: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col, pos = 1, 1, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise _Syntax((line, col), f"unexpected character {source[pos]!r}")
        kind = m.lastgroup or ""
        text = m.group()
        if kind not in ("ws", "comment"):
            if kind == "ident" and text in KEYWORDS:
                kind = "keyword"
            tokens.append(_Token(kind, text, line, col))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            col = len(text) - text.rfind("\n")
        else:
            col += len(text)
        pos = m.end()
    tokens.append(_Token("eof", "", line, col))
    return tokens


def _unescape(raw: str, loc: tuple[int, int]) -> str:
    body = raw[1:-1]
    out: list[str] = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            i += 1
            if i >= len(body) or body[i] not in _ESCAPES:
                raise _Syntax(loc, f"bad string escape in {raw!r}")
            out.append(_ESCAPES[body[i]])
        else:
            out.append(ch)
        i += 1
    return "".join(out)


def _escape(text: str) -> str:
    out = text.replace("\\", "\\\\").replace('"', '\\"')
    out = out.replace("\n", "\\n").replace("\t", "\\t").replace("\r", "\\r")
    return f'"{out}"'


# ---------------------------------------------------------------------------
# Raw syntax tree (keeps locations for semantic diagnostics)
# ---------------------------------------------------------------------------

@dataclass
class _RawAtom:
    loc: tuple[int, int]
    form: str  # flag cmp failed ongoing
    name: str
    op: str = ""
    value: object = None


@dataclass
class _RawNode:
    kind: str  # not and or atom
    children: list
    atom: _RawAtom | None = None


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    @property
    def here(self) -> _Token:
        return self.tokens[self.pos]

    def _loc(self) -> tuple[int, int]:
        return (self.here.line, self.here.col)

    def _advance(self) -> _Token:
        tok = self.here
        self.pos += 1
        return tok

    def _expect(self, kind: str, text: str | None = None) -> _Token:
        tok = self.here
        if tok.kind != kind or (text is not None and tok.text != text):
            wanted = text if text is not None else kind
            shown = tok.text or "end of input"
            raise _Syntax((tok.line, tok.col), f"expected {wanted!r}, found {shown!r}")
        return self._advance()

    def _accept(self, kind: str, text: str | None = None) -> _Token | None:
        tok = self.here
        if tok.kind == kind and (text is None or tok.text == text):
            return self._advance()
        return None

    def _ident(self, what: str) -> _Token:
        tok = self.here
        if tok.kind != "ident":
            shown = tok.text or "end of input"
            raise _Syntax((tok.line, tok.col), f"expected {what} identifier, found {shown!r}")
        return self._advance()

    def _value_ident(self, what: str) -> _Token:
        # value positions are unambiguous, so reserved words like `low` or
        # `record` may serve as enumeration values (but not true/false)
        tok = self.here
        if tok.kind == "ident" or (tok.kind == "keyword" and tok.text not in ("true", "false")):
            return self._advance()
        shown = tok.text or "end of input"
        raise _Syntax((tok.line, tok.col), f"expected {what}, found {shown!r}")

    # -- grammar ------------------------------------------------------------

    def guideline(self) -> dict:
        self._expect("keyword", "guideline")
        name = self._ident("guideline")
        self._expect("punct", "{")
        self._expect("keyword", "strategy")
        stage = None
        if self._accept("keyword", "waterfall"):
            strategy = Strategy.WATERFALL
            if self._accept("keyword", "stage"):
                stage = self._ident("stage criterion")
        else:
            self._expect("keyword", "star")
            strategy = Strategy.STAR
        self._expect("punct", ";")
        criteria, treatments, recommendations = [], [], []
        while self.here.kind == "keyword" and self.here.text == "criterion":
            criteria.append(self.criterion())
        while self.here.kind == "keyword" and self.here.text == "treatment":
            treatments.append(self.treatment())
        while self.here.kind == "keyword" and self.here.text == "recommendation":
            recommendations.append(self.recommendation())
        self._expect("punct", "}")
        self._expect("eof")
        return {
            "name": name,
            "strategy": strategy,
            "stage": stage,
            "criteria": criteria,
            "treatments": treatments,
            "recommendations": recommendations,
        }

    def criterion(self) -> dict:
        start = self._loc()
        self._expect("keyword", "criterion")
        name = self._ident("criterion")
        self._expect("punct", ":")
        values: list[_Token] = []
        unit = ""
        if self._accept("keyword", "flag"):
            kind = CriterionKind.FLAG
        elif self._accept("keyword", "enum"):
            kind = CriterionKind.ENUM
            self._expect("punct", "{")
            values.append(self._value_ident("enum value"))
            while self._accept("punct", ","):
                values.append(self._value_ident("enum value"))
            self._expect("punct", "}")
        else:
            self._expect("keyword", "number")
            kind = CriterionKind.QUANTITY
            self._expect("keyword", "unit")
            tok = self._expect("string")
            unit = _unescape(tok.text, (tok.line, tok.col))
        self._expect("keyword", "source")
        src = self.here
        if src.kind == "keyword" and src.text in ("record", "form", "lab"):
            self._advance()
            source = FactSource(src.text)
        else:
            raise _Syntax((src.line, src.col), "expected one of record, form, lab")
        self._expect("punct", ";")
        return {"loc": start, "name": name, "kind": kind, "values": values,
                "unit": unit, "source": source}

    def treatment(self) -> dict:
        start = self._loc()
        self._expect("keyword", "treatment")
        name = self._ident("treatment")
        self._expect("punct", "{")
        self._expect("keyword", "class")
        drug_class = self._ident("drug class")
        self._expect("punct", ";")
        intensity = None
        if self._accept("keyword", "intensity"):
            tok = self.here
            if tok.kind == "keyword" and tok.text in ("low", "mid", "high"):
                self._advance()
                intensity = Intensity(tok.text)
            else:
                raise _Syntax((tok.line, tok.col), "expected one of low, mid, high")
            self._expect("punct", ";")
        contra = None
        if self._accept("keyword", "contra"):
            contra = self.cond()
            self._expect("punct", ";")
        self._expect("punct", "}")
        return {"loc": start, "name": name, "class": drug_class,
                "intensity": intensity, "contra": contra}

    def recommendation(self) -> dict:
        start = self._loc()
        self._expect("keyword", "recommendation")
        name = self._ident("recommendation")
        self._expect("punct", "{")
        self._expect("keyword", "when")
        when = self.cond()
        self._expect("punct", ";")
        self._expect("keyword", "recommend")
        recommends = [self._recommend_item()]
        while self._accept("punct", ","):
            recommends.append(self._recommend_item())
        self._expect("punct", ";")
        strength = None
        if self._accept("keyword", "strength"):
            tok = self.here
            if tok.kind == "ident" and tok.text in ("A", "B", "C"):
                self._advance()
                strength = Grade(tok.text)
            else:
                raise _Syntax((tok.line, tok.col), "expected one of A, B, C")
            self._expect("punct", ";")
        excerpt = None
        if self._accept("keyword", "text"):
            tok = self._expect("string")
            excerpt = _unescape(tok.text, (tok.line, tok.col))
            self._expect("punct", ";")
        self._expect("punct", "}")
        return {"loc": start, "name": name, "when": when, "recommends": recommends,
                "strength": strength, "excerpt": excerpt}

    def _recommend_item(self) -> tuple[_Token, int, tuple[int, int]]:
        name = self._ident("treatment")
        self._expect("keyword", "line")
        tok = self._expect("number")
        loc = (tok.line, tok.col)
        if not re.fullmatch(r"\d+", tok.text) or int(tok.text) < 1:
            raise _Syntax(loc, f"therapy line must be a positive integer, found {tok.text!r}")
        return (name, int(tok.text), loc)

    # -- conditions -----------------------------------------------------------

    def cond(self) -> _RawNode:
        node = self._and()
        parts = [node]
        while self._accept("keyword", "or"):
            parts.append(self._and())
        if len(parts) == 1:
            return node
        return _RawNode("or", parts)

    def _and(self) -> _RawNode:
        node = self._unary()
        parts = [node]
        while self._accept("keyword", "and"):
            parts.append(self._unary())
        if len(parts) == 1:
            return node
        return _RawNode("and", parts)

    def _unary(self) -> _RawNode:
        if self._accept("keyword", "not"):
            return _RawNode("not", [self._unary()])
        if self._accept("punct", "("):
            node = self.cond()
            self._expect("punct", ")")
            return node
        return self._atom()

    def _atom(self) -> _RawNode:
        tok = self.here
        loc = (tok.line, tok.col)
        if tok.kind == "keyword" and tok.text in ("failed", "ongoing"):
            self._advance()
            self._expect("punct", "(")
            target = self._ident("treatment")
            self._expect("punct", ")")
            return _RawNode("atom", [], _RawAtom(loc, tok.text, target.text))
        name = self._ident("criterion")
        if self.here.kind == "op":
            op = self._advance().text
            value = self._literal()
            return _RawNode("atom", [], _RawAtom(loc, "cmp", name.text, op, value))
        return _RawNode("atom", [], _RawAtom(loc, "flag", name.text))

    def _literal(self) -> object:
        tok = self.here
        if tok.kind == "number":
            self._advance()
            return float(tok.text)
        if tok.kind == "keyword" and tok.text in ("true", "false"):
            self._advance()
            return tok.text == "true"
        if tok.kind == "ident" or tok.kind == "keyword":
            self._advance()
            return tok.text
        raise _Syntax((tok.line, tok.col), f"expected a literal, found {tok.text!r}")


# ---------------------------------------------------------------------------
# Semantic checking and construction
# ---------------------------------------------------------------------------

def _err(loc, code, message) -> ParseDiagnostic:
    return ParseDiagnostic(Severity.ERROR, loc, code, message)


def _warn(loc, code, message) -> ParseDiagnostic:
    return ParseDiagnostic(Severity.WARNING, loc, code, message)


def _build_condition(
    raw: _RawNode,
    criteria: dict[str, Criterion],
    treatments: set[str],
    diags: list[ParseDiagnostic],
) -> ConditionExpr | None:
    if raw.kind == "not":
        inner = _build_condition(raw.children[0], criteria, treatments, diags)
        return None if inner is None else Not(inner)
    if raw.kind in ("and", "or"):
        parts = [_build_condition(c, criteria, treatments, diags) for c in raw.children]
        if any(p is None for p in parts):
            return None
        node = And if raw.kind == "and" else Or
        return node(tuple(parts))  # type: ignore[arg-type]
    atom = raw.atom
    assert atom is not None
    if atom.form in ("failed", "ongoing"):
        if atom.name not in treatments:
            diags.append(_err(atom.loc, "undefined-treatment",
                              f"condition references undeclared treatment {atom.name!r}"))
            return None
        return TriedAndFailed(atom.name) if atom.form == "failed" else CurrentlyOn(atom.name)
    crit = criteria.get(atom.name)
    if crit is None:
        diags.append(_err(atom.loc, "undefined-criterion",
                          f"condition references undeclared criterion {atom.name!r}"))
        return None
    if atom.form == "flag":
        if crit.kind is not CriterionKind.FLAG:
            diags.append(_err(atom.loc, "type-mismatch",
                              f"bare test on {atom.name!r} requires a flag criterion"))
            return None
        return FlagTest(atom.name)
    value = atom.value
    if crit.kind is CriterionKind.QUANTITY:
        if not isinstance(value, float):
            diags.append(_err(atom.loc, "type-mismatch",
                              f"comparison on quantity {atom.name!r} needs a number"))
            return None
    elif atom.op in ("<", "<=", ">", ">="):
        diags.append(_err(atom.loc, "type-mismatch",
                          f"{atom.op} is not defined on {crit.kind.value} criterion {atom.name!r}"))
        return None
    elif crit.kind is CriterionKind.FLAG:
        if not isinstance(value, bool):
            diags.append(_err(atom.loc, "type-mismatch",
                              f"comparison on flag {atom.name!r} needs true or false"))
            return None
    else:  # enum
        if not isinstance(value, str):
            diags.append(_err(atom.loc, "type-mismatch",
                              f"comparison on enum {atom.name!r} needs one of its values"))
            return None
        if value not in crit.values:
            diags.append(_err(atom.loc, "bad-enum-value",
                              f"{value!r} is not a value of enum {atom.name!r}"))
            return None
    return Comparison(atom.name, atom.op, value)  # type: ignore[arg-type]


def try_parse(source: str) -> ParseResult:
    """Parse without raising; errors are reported as diagnostics."""
    try:
        tokens = _tokenize(source)
        raw = _Parser(tokens).guideline()
    except _Syntax as exc:
        return ParseResult(None, [_err(exc.loc, "syntax-error", exc.message)])

    diags: list[ParseDiagnostic] = []
    spans: dict[tuple[str, str], tuple[int, int]] = {}

    criteria: dict[str, Criterion] = {}
    for c in raw["criteria"]:
        cid = c["name"].text
        loc = c["loc"]
        if cid in criteria:
            diags.append(_err(loc, "duplicate-identifier", f"criterion {cid!r} declared twice"))
            continue
        value_names = [v.text for v in c["values"]]
        dup_values = {v for v in value_names if value_names.count(v) > 1}
        if dup_values:
            diags.append(_err(loc, "duplicate-identifier",
                              f"enum {cid!r} repeats value(s) {sorted(dup_values)}"))
            continue
        criteria[cid] = Criterion(cid, c["kind"], c["source"],
                                  values=tuple(value_names), unit=c["unit"])
        spans[("criterion", cid)] = loc

    treatment_names: set[str] = set()
    raw_treatments = []
    for t in raw["treatments"]:
        tid = t["name"].text
        if tid in treatment_names or tid in criteria:
            diags.append(_err(t["loc"], "duplicate-identifier",
                              f"identifier {tid!r} declared twice"))
            continue
        treatment_names.add(tid)
        spans[("treatment", tid)] = t["loc"]
        raw_treatments.append(t)

    treatments: list[Treatment] = []
    for t in raw_treatments:
        contra = None
        if t["contra"] is not None:
            contra = _build_condition(t["contra"], criteria, treatment_names, diags)
            if contra is None:
                continue
        treatments.append(Treatment(t["name"].text, t["class"].text,
                                    intensity=t["intensity"], contraindication=contra))

    recommendations: list[Recommendation] = []
    rec_names: set[str] = set()
    for r in raw["recommendations"]:
        rid = r["name"].text
        if rid in rec_names:
            diags.append(_err(r["loc"], "duplicate-identifier",
                              f"recommendation {rid!r} declared twice"))
            continue
        rec_names.add(rid)
        spans[("recommendation", rid)] = r["loc"]
        when = _build_condition(r["when"], criteria, treatment_names, diags)
        items: list[RecommendedTreatment] = []
        seen_targets: set[str] = set()
        ok = when is not None
        for name_tok, line, loc in r["recommends"]:
            if name_tok.text not in treatment_names:
                diags.append(_err((name_tok.line, name_tok.col), "undefined-treatment",
                                  f"recommendation {rid!r} names undeclared treatment {name_tok.text!r}"))
                ok = False
                continue
            if name_tok.text in seen_targets:
                diags.append(_err((name_tok.line, name_tok.col), "duplicate-recommend",
                                  f"recommendation {rid!r} lists {name_tok.text!r} twice"))
                ok = False
                continue
            seen_targets.add(name_tok.text)
            items.append(RecommendedTreatment(name_tok.text, line))
        if ok:
            lines = {i.line for i in items}
            if lines != set(range(1, max(lines) + 1)):
                diags.append(_err(r["loc"], "line-gap",
                                  f"recommendation {rid!r} therapy lines {sorted(lines)} "
                                  "must be contiguous from 1"))
                ok = False
        if ok:
            recommendations.append(Recommendation(rid, when, tuple(items),
                                                  strength=r["strength"], excerpt=r["excerpt"]))

    stage = None
    if raw["stage"] is not None:
        stage_tok = raw["stage"]
        if stage_tok.text not in criteria:
            diags.append(_err((stage_tok.line, stage_tok.col), "undefined-criterion",
                              f"stage names undeclared criterion {stage_tok.text!r}"))
        else:
            stage = stage_tok.text

    if any(d.severity is Severity.ERROR for d in diags):
        return ParseResult(None, diags, spans)

    guideline = Guideline(
        name=raw["name"].text,
        strategy=raw["strategy"],
        criteria=tuple(criteria.values()),
        treatments=tuple(treatments),
        recommendations=tuple(recommendations),
        stage_criterion=stage,
    )
    return ParseResult(guideline, diags, spans)


def parse_guideline(source: str) -> Guideline:
    """Parse `source`, raising :class:`GdlError` on any error diagnostic."""
    result = try_parse(source)
    if result.guideline is None:
        raise GdlError(result.diagnostics)
    return result.guideline


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _fmt_number(v: float) -> str:
    f = float(v)
    return str(int(f)) if f.is_integer() else repr(f)


def _fmt_literal(v: object) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return _fmt_number(v)
    return str(v)


def condition_text(expr: ConditionExpr) -> str:
    """Render a condition in DSL syntax with minimal parentheses."""
    return _cond_text(expr, 0)


def _cond_text(expr: ConditionExpr, parent: int) -> str:
    # precedence: or=1, and=2, unary=3; operands render one level up so that
    # nested same-precedence nodes keep their parentheses (structure survives
    # the round trip instead of flattening)
    if isinstance(expr, Or):
        text = " or ".join(_cond_text(op, 2) for op in expr.operands)
        return f"({text})" if parent > 1 else text
    if isinstance(expr, And):
        text = " and ".join(_cond_text(op, 3) for op in expr.operands)
        return f"({text})" if parent > 2 else text
    if isinstance(expr, Not):
        return f"not {_cond_text(expr.operand, 3)}"
    if isinstance(expr, FlagTest):
        return expr.criterion
    if isinstance(expr, Comparison):
        return f"{expr.criterion} {expr.op} {_fmt_literal(expr.value)}"
    if isinstance(expr, TriedAndFailed):
        return f"failed({expr.treatment})"
    if isinstance(expr, CurrentlyOn):
        return f"ongoing({expr.treatment})"
    raise TypeError(f"not a condition expression: {expr!r}")


def serialize_guideline(g: Guideline) -> str:
    """Canonical DSL text; deterministic, round-trips through the parser."""
    out: list[str] = [f"guideline {g.name} {{"]
    if g.strategy is Strategy.WATERFALL:
        stage = f" stage {g.stage_criterion}" if g.stage_criterion else ""
        out.append(f"  strategy waterfall{stage};")
    else:
        out.append("  strategy star;")
    if g.criteria:
        out.append("")
    for c in g.criteria:
        if c.kind is CriterionKind.FLAG:
            shape = "flag"
        elif c.kind is CriterionKind.ENUM:
            shape = "enum { " + ", ".join(c.values) + " }"
        else:
            shape = f"number unit {_escape(c.unit)}"
        out.append(f"  criterion {c.id}: {shape} source {c.source.value};")
    for t in g.treatments:
        out.append("")
        out.append(f"  treatment {t.id} {{")
        out.append(f"    class {t.drug_class};")
        if t.intensity is not None:
            out.append(f"    intensity {t.intensity.value};")
        if t.contraindication is not None:
            out.append(f"    contra {condition_text(t.contraindication)};")
        out.append("  }")
    for r in g.recommendations:
        out.append("")
        out.append(f"  recommendation {r.id} {{")
        out.append(f"    when {condition_text(r.when)};")
        items = ", ".join(f"{i.treatment} line {i.line}" for i in r.recommends)
        out.append(f"    recommend {items};")
        if r.strength is not None:
            out.append(f"    strength {r.strength.value};")
        if r.excerpt is not None:
            out.append(f"    text {_escape(r.excerpt)};")
        out.append("  }")
    out.append("}")
    return "\n".join(out) + "\n"


def fingerprint_of(g: Guideline) -> str:
    """Content hash of the canonical serialization."""
    return hashlib.sha256(serialize_guideline(g).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Static validation (warnings; never blocks compilation)
# ---------------------------------------------------------------------------

_NO_LOC = (1, 1)


def validate_static(
    g: Guideline,
    spans: dict[tuple[str, str], tuple[int, int]] | None = None,
) -> list[ParseDiagnostic]:
    """KB-quality warnings: ambiguous recommendations, orphan treatments,
    waterfall stage-order violations."""
    spans = spans or {}
    warnings: list[ParseDiagnostic] = []

    by_condition: dict[ConditionExpr, Recommendation] = {}
    for rec in g.recommendations:
        first = by_condition.get(rec.when)
        if first is not None and first.recommends != rec.recommends:
            loc = spans.get(("recommendation", rec.id), _NO_LOC)
            warnings.append(_warn(loc, "ambiguous-recommendation",
                                  f"recommendations {first.id!r} and {rec.id!r} share a condition "
                                  "but recommend different treatments"))
        else:
            by_condition.setdefault(rec.when, rec)

    recommended = {i.treatment for rec in g.recommendations for i in rec.recommends}
    for t in g.treatments:
        if t.id not in recommended:
            loc = spans.get(("treatment", t.id), _NO_LOC)
            warnings.append(_warn(loc, "orphan-treatment",
                                  f"treatment {t.id!r} is never recommended"))

    if g.strategy is Strategy.WATERFALL:
        if g.stage_criterion is None:
            loc = spans.get(("guideline", g.name), _NO_LOC)
            warnings.append(_warn(loc, "waterfall-missing-stage",
                                  "waterfall strategy declares no stage criterion"))
        else:
            warnings.extend(_stage_order_warnings(g, spans))
    return warnings


def _stage_key(g: Guideline, rec: Recommendation) -> float | None:
    """Stage position constrained by the recommendation: the first usable atom
    on the stage criterion, in pre-order.  Enum values map to their declared
    index; strict comparisons nudge the key half a step to their open side."""
    stage = g.stage_criterion
    crit = g.criterion(stage)  # type: ignore[arg-type]
    for atom in atoms_in(rec.when):
        if isinstance(atom, FlagTest) and atom.criterion == stage:
            return 1.0
        if isinstance(atom, Comparison) and atom.criterion == stage:
            if atom.op == "!=":
                continue
            if crit.kind is CriterionKind.ENUM:
                base = float(crit.values.index(atom.value))  # type: ignore[arg-type]
            elif isinstance(atom.value, bool):
                base = 1.0 if atom.value else 0.0
            else:
                base = float(atom.value)  # type: ignore[arg-type]
            if atom.op == "<":
                return base - 0.5
            if atom.op == ">":
                return base + 0.5
            return base
    return None


def _stage_order_warnings(g, spans) -> list[ParseDiagnostic]:
    warnings = []
    previous: tuple[str, float] | None = None
    for rec in g.recommendations:
        loc = spans.get(("recommendation", rec.id), _NO_LOC)
        key = _stage_key(g, rec)
        if key is None:
            warnings.append(_warn(loc, "waterfall-stage-order",
                                  f"recommendation {rec.id!r} does not constrain stage "
                                  f"criterion {g.stage_criterion!r}"))
            continue
        if previous is not None and key < previous[1]:
            warnings.append(_warn(loc, "waterfall-stage-order",
                                  f"recommendation {rec.id!r} steps back to stage {key:g} "
                                  f"after {previous[0]!r} at stage {previous[1]:g}"))
        previous = (rec.id, key)
    return warnings
