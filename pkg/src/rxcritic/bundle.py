"""Access to the data files shipped with the package."""

from __future__ import annotations

from importlib import resources


def bundled_text(*parts: str) -> str:
    return resources.files("rxcritic").joinpath("data", *parts).read_text(encoding="utf-8")


def bundled_guideline(name: str = "dyslipaemia_like.gdl"):
    from .gdl_parser import parse_guideline

    return parse_guideline(bundled_text(name))


def conflict_pair():
    from .gdl_parser import parse_guideline

    return (
        parse_guideline(bundled_text("conflict_pair", "cv_risk_product.gdl")),
        parse_guideline(bundled_text("conflict_pair", "cv_risk_additive.gdl")),
    )


def bundled_drug_dictionary():
    from .patient_model import DrugDictionary

    return DrugDictionary.from_csv(bundled_text("drug_codes.csv"))


def bundled_cases(guideline=None):
    from .eval_verify import load_cases

    g = guideline if guideline is not None else bundled_guideline()
    return load_cases(bundled_text("usability_cases.jsonl"), g)
