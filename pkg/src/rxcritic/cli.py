"""Command-line interface.

Exit codes for `check` are scriptable: 0 silent, 3 criticized, 1 error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .critique_engine import critique, verdict_to_doc
from .eval_verify import (
    ProfileCapError,
    UndefinedMetricError,
    appropriateness,
    detect_conflicts,
    load_cases,
    metrics,
    run_cases,
    verify_kb,
)
from .gdl_parser import GdlError, parse_guideline, try_parse, validate_static
from .kb_model import KBError
from .patient_model import (
    DrugDictionary,
    load_record,
    parse_prescription,
    resolve_prescription,
)
from .rule_compiler import compile_guideline, dump_ruleset, load_ruleset

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CRITICIZED = 3


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _load_rules(path: str):
    """Accept either a compiled ruleset document or a .gdl source."""
    text = _read(path)
    if path.endswith(".gdl"):
        return compile_guideline(parse_guideline(text))
    return load_ruleset(text)


def _cmd_compile(args) -> int:
    result = try_parse(_read(args.kb))
    for diag in result.diagnostics:
        print(diag, file=sys.stderr)
    if result.guideline is None:
        return EXIT_ERROR
    for warning in validate_static(result.guideline, result.spans):
        print(warning, file=sys.stderr)
    rs = compile_guideline(result.guideline)
    text = dump_ruleset(rs)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"{len(rs.rules)} rules -> {args.out}")
    else:
        print(text, end="")
    return EXIT_OK


def _cmd_check(args) -> int:
    rs = _load_rules(args.kb)
    record = load_record(_read(args.patient), rs.guideline)
    prescription = parse_prescription(_read(args.prescription))
    dictionary = DrugDictionary.from_csv(_read(args.dictionary)) if args.dictionary else None
    resolved = resolve_prescription(prescription, dictionary, rs.guideline)
    verdict = critique(rs, record, resolved)
    print(json.dumps(verdict_to_doc(verdict), indent=2, ensure_ascii=False))
    return EXIT_CRITICIZED if verdict.raised else EXIT_OK


def _cmd_eval(args) -> int:
    rs = _load_rules(args.rules)
    cases_path = Path(args.cases)
    files = sorted(cases_path.glob("*.jsonl")) if cases_path.is_dir() else [cases_path]
    cases = []
    for path in files:
        cases.extend(load_cases(path.read_text(encoding="utf-8"), rs.guideline))
    dictionary = DrugDictionary.from_csv(_read(args.dictionary)) if args.dictionary else None
    matrix, traces = run_cases(rs, cases, dictionary)
    report = {
        "guideline": rs.guideline_name,
        "cases": len(cases),
        "attempts": matrix.total,
        "matrix": {"tp": matrix.tp, "fp": matrix.fp, "tn": matrix.tn, "fn": matrix.fn},
        "sensitivity": None,
        "specificity": None,
        "appropriateness": None,
    }
    try:
        m = metrics(matrix)
        report["sensitivity"] = {
            "value": round(m.sensitivity.value, 4),
            "ci95_half_width": round(m.sensitivity.half_width, 4),
        }
        report["specificity"] = {
            "value": round(m.specificity.value, 4),
            "ci95_half_width": round(m.specificity.half_width, 4),
        }
    except UndefinedMetricError as exc:
        print(f"note: {exc}", file=sys.stderr)
    if traces:
        report["appropriateness"] = round(appropriateness(traces), 4)
    if args.out:
        Path(args.out).write_text(
            json.dumps(report, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )
    print(f"guideline      {report['guideline']}")
    print(f"attempts       {report['attempts']} over {report['cases']} cases")
    m = report["matrix"]
    print(f"matrix         tp={m['tp']} fp={m['fp']} tn={m['tn']} fn={m['fn']}")
    for key in ("sensitivity", "specificity"):
        value = report[key]
        if value:
            print(f"{key:<14} {value['value']:.3f} ± {value['ci95_half_width']:.3f} (95% CI)")
    if report["appropriateness"] is not None:
        print(f"appropriate    {report['appropriateness']:.3f}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    result = try_parse(_read(args.kb))
    for diag in result.diagnostics:
        print(diag, file=sys.stderr)
    if result.guideline is None:
        return EXIT_ERROR
    g = result.guideline
    for warning in validate_static(g, result.spans):
        print(warning)
    try:
        report = verify_kb(g, max_profiles=args.max_profiles, sample=args.sample)
    except ProfileCapError as exc:
        print(f"refused: {exc} (use --sample N to spot-check)", file=sys.stderr)
        return EXIT_ERROR
    mode = "sampled" if report.sampled else "exhaustive"
    print(f"profiles       {report.profiles_checked} of {report.profile_space} ({mode})")
    print(f"uncovered      {len(report.uncovered_profiles)} shown"
          if report.uncovered_profiles else "uncovered      0")
    for profile in report.uncovered_profiles[:5]:
        print(f"  no guidance for {profile}")
    label = "unsatisfiable" if not report.sampled else "unwitnessed"
    print(f"{label:<14} {len(report.unsatisfiable_rules)}")
    for rule_id in report.unsatisfiable_rules[:10]:
        print(f"  {rule_id}")
    print(f"disagreements  {len(report.disagreements)}")
    for item in report.disagreements[:5]:
        print(f"  {item}")
    return EXIT_OK if not report.disagreements else EXIT_ERROR


def _cmd_conflicts(args) -> int:
    g1 = parse_guideline(_read(args.kb1))
    g2 = parse_guideline(_read(args.kb2))
    conflicts = detect_conflicts(g1, g2, max_profiles=args.max_profiles)
    print(f"{len(conflicts)} conflicting profile(s)")
    for conflict in conflicts:
        profile = {k: v for k, v in conflict.profile}
        print(f"  {profile}: {g1.name} allows {list(conflict.allowed_a)}, "
              f"{g2.name} allows {list(conflict.allowed_b)}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service_api import create_app, resolve_kb_dir

    app = create_app(resolve_kb_dir(args.kb), Path(args.log), static_dir=args.static)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rxcritic",
        description="Compile guideline knowledge bases into prescription-critiquing rules "
                    "and run them against coded patient records.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="compile a .gdl knowledge base into a rule set")
    p.add_argument("kb")
    p.add_argument("-o", "--out")
    p.set_defaults(func=_cmd_compile)

    p = sub.add_parser("check", help="critique one prescription against one patient record")
    p.add_argument("--kb", required=True, help=".gdl source or compiled ruleset document")
    p.add_argument("--patient", required=True)
    p.add_argument("--prescription", "--rx", dest="prescription", required=True)
    p.add_argument("--dictionary", help="drug-code CSV for raw-code items")
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("eval", help="run simulated cases and report the confusion matrix")
    p.add_argument("--cases", required=True, help="cases .jsonl file or a directory of them")
    p.add_argument("--rules", required=True, help="compiled ruleset document or .gdl source")
    p.add_argument("--dictionary")
    p.add_argument("--out", help="also write the machine-readable report here")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("verify", help="sweep a knowledge base for coverage, dead rules, "
                                      "and engine/oracle disagreements")
    p.add_argument("kb")
    p.add_argument("--max-profiles", type=int, default=200_000)
    p.add_argument("--sample", type=int, help="spot-check N profiles when above the cap")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("conflicts", help="find profiles on which two knowledge bases "
                                         "give disjoint advice")
    p.add_argument("kb1")
    p.add_argument("kb2")
    p.add_argument("--max-profiles", type=int, default=200_000)
    p.set_defaults(func=_cmd_conflicts)

    p = sub.add_parser("serve", help="serve the HTTP API (and the consultation UI if built)")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--kb", help="directory of .gdl files (or set RXCRITIC_KB_DIR)")
    p.add_argument("--log", default="feedback.jsonl")
    p.add_argument("--static", help="directory of built UI assets to serve at /")
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (KBError, GdlError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
