"""Command-line surface: exit codes, artifacts, reports."""

import json
from pathlib import Path

from rxcritic.cli import EXIT_CRITICIZED, EXIT_ERROR, EXIT_OK, main

DATA = Path(__file__).resolve().parents[1] / "src" / "rxcritic" / "data"
KB = str(DATA / "dyslipaemia_like.gdl")
PATIENT = str(DATA / "demo" / "patient_sim001.json")


def test_compile_writes_ruleset(tmp_path, capsys):
    out = tmp_path / "dys.rules.json"
    assert main(["compile", KB, "-o", str(out)]) == EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["ruleset_version"] == 1
    assert len(doc["rules"]) == 73


def test_compile_reports_errors(tmp_path, capsys):
    bad = tmp_path / "bad.gdl"
    bad.write_text("guideline broken {")
    assert main(["compile", str(bad)]) == EXIT_ERROR
    assert "syntax-error" in capsys.readouterr().err


def test_check_exit_codes(tmp_path, capsys):
    silent_rx = str(DATA / "demo" / "rx_usual.json")
    criticized_rx = str(DATA / "demo" / "rx_second_line.json")
    assert main(["check", "--kb", KB, "--patient", PATIENT,
                 "--prescription", silent_rx]) == EXIT_OK
    assert main(["check", "--kb", KB, "--patient", PATIENT,
                 "--prescription", criticized_rx]) == EXIT_CRITICIZED
    out = capsys.readouterr().out
    assert '"not_first_line"' in out
    assert main(["check", "--kb", KB, "--patient", str(tmp_path / "missing.json"),
                 "--prescription", silent_rx]) == EXIT_ERROR


def test_check_accepts_compiled_ruleset(tmp_path):
    out = tmp_path / "dys.rules.json"
    main(["compile", KB, "-o", str(out)])
    code = main(["check", "--kb", str(out), "--patient", PATIENT,
                 "--prescription", str(DATA / "demo" / "rx_second_line.json")])
    assert code == EXIT_CRITICIZED


def test_eval_reports_matrix(tmp_path, capsys):
    report_path = tmp_path / "report.json"
    code = main([
        "eval",
        "--cases", str(DATA / "usability_cases.jsonl"),
        "--rules", KB,
        "--dictionary", str(DATA / "drug_codes.csv"),
        "--out", str(report_path),
    ])
    assert code == EXIT_OK
    printed = capsys.readouterr().out
    assert "tp=5 fp=0 tn=5 fn=0" in printed
    report = json.loads(report_path.read_text())
    assert report["attempts"] == 10
    assert report["appropriateness"] == 0.9


def test_verify_small_kb(capsys):
    code = main(["verify", str(DATA / "conflict_pair" / "cv_risk_product.gdl")])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "disagreements  0" in out
    assert "(exhaustive)" in out


def test_verify_refuses_above_cap_without_sample(capsys):
    assert main(["verify", KB, "--max-profiles", "1000"]) == EXIT_ERROR
    assert "refused" in capsys.readouterr().err


def test_conflicts_reports_single_profile(capsys):
    code = main([
        "conflicts",
        str(DATA / "conflict_pair" / "cv_risk_product.gdl"),
        str(DATA / "conflict_pair" / "cv_risk_additive.gdl"),
    ])
    assert code == EXIT_OK
    assert "1 conflicting profile(s)" in capsys.readouterr().out
