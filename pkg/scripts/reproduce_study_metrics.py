#!/usr/bin/env python3
"""Recompute the usability-study numbers from the reconstructed inputs:
confusion matrix, sensitivity/specificity with Wald intervals, the
appropriateness rate, and the satisfaction table."""

import json
from pathlib import Path

from rxcritic.eval_verify import (
    AttemptTrace,
    ConfusionMatrix,
    GoldLabel,
    aggregate_likert,
    appropriateness,
    metrics,
)

DATA = Path(__file__).resolve().parents[1] / "src" / "rxcritic" / "data"


def main() -> None:
    matrix = ConfusionMatrix(tp=136, fn=26, tn=129, fp=8)
    result = metrics(matrix)
    print(f"attempts        {matrix.total}")
    print(f"matrix          tp={matrix.tp} fp={matrix.fp} tn={matrix.tn} fn={matrix.fn}")
    print(f"sensitivity     {result.sensitivity.value:.3f} "
          f"± {result.sensitivity.half_width:.3f} (Wald 95%, n={result.sensitivity.n})")
    print(f"specificity     {result.specificity.value:.3f} "
          f"± {result.specificity.half_width:.3f} (Wald 95%, n={result.specificity.n})")

    traces = []
    for i in range(136):
        traces.append(AttemptTrace("t", i, True, "tp",
                                   GoldLabel(True, explanation_appropriate=i < 114), ()))
    traces += [AttemptTrace("t", i, False, "tn", GoldLabel(False), ()) for i in range(125)]
    traces += [AttemptTrace("t", i, False, "fn", GoldLabel(True), ()) for i in range(26)]
    traces += [AttemptTrace("t", i, True, "fp", GoldLabel(False), ()) for i in range(12)]
    print(f"appropriateness {appropriateness(traces):.3f} over {len(traces)} attempts")

    doc = json.loads((DATA / "satisfaction_responses.json").read_text())
    table = aggregate_likert(doc["responses"], questions=doc["questions"])
    print(f"\nsatisfaction (% of {table.respondents} respondents)")
    header = ("strong_agree", "weak_agree", "weak_disagree", "strong_disagree")
    print(f"{'question':<32} " + " ".join(f"{h:>15}" for h in header))
    for question, row in table.percentages().items():
        print(f"{question:<32} " + " ".join(f"{v:>15}" for v in row))


if __name__ == "__main__":
    main()
