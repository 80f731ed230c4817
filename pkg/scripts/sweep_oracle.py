#!/usr/bin/env python3
"""Exhaustive engine-versus-interpreter sweep over generated knowledge bases,
then a sampled verification of the bundled ones. Any disagreement is a bug."""

import argparse
import time

from rxcritic.bundle import bundled_guideline, conflict_pair
from rxcritic.eval_verify import equivalence_sweep, generate_sweep_kbs, verify_kb


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--kbs", type=int, default=100, help="generated KBs to sweep")
    parser.add_argument("--sample", type=int, default=120,
                        help="sampled profiles for the large bundled KB")
    args = parser.parse_args()

    start = time.time()
    comparisons = 0
    bad = 0
    for g in generate_sweep_kbs(count=args.kbs):
        result = equivalence_sweep(g)
        comparisons += result.comparisons
        bad += len(result.disagreements)
        for item in result.disagreements[:3]:
            print("DISAGREEMENT", item)
    print(f"generated sweep: {args.kbs} KBs, {comparisons} comparisons, "
          f"{bad} disagreements, {time.time() - start:.1f}s")

    for g in (*conflict_pair(), bundled_guideline()):
        start = time.time()
        report = verify_kb(g, sample=args.sample)
        mode = "sampled" if report.sampled else "exhaustive"
        print(f"{g.name}: {report.profiles_checked} profiles ({mode}), "
              f"{len(report.disagreements)} disagreements, "
              f"{len(report.unsatisfiable_rules)} dead rules, "
              f"{len(report.uncovered_profiles)} uncovered shown, "
              f"{time.time() - start:.1f}s")
        bad += len(report.disagreements)
    return 1 if bad else 0


if __name__ == "__main__":
    raise SystemExit(main())
