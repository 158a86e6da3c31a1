#!/usr/bin/env python3
"""Regenerate tests/fixtures/synthetic_calibration.json.

Runs the default synthetic-cohort experiment once (30 runs, fixed tree
parameters gini/3/4, master seed 1) and freezes the aggregate numbers the
test suite pins. The pipeline is byte-deterministic, so the frozen values
are exact expectations, not tolerances. Rerun after any change to the
synthetic generator geometry or the run protocol, and review the diff.
"""

import json
from pathlib import Path

from breathfair.experiment import ExperimentConfig, SyntheticSpec, run_experiment

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "synthetic_calibration.json"

MASTER_SEED = 1
RUNS = 30


def main() -> None:
    cfg = ExperimentConfig(synthetic=SyntheticSpec(), runs=RUNS, master_seed=MASTER_SEED)
    report = run_experiment(cfg)
    dp = report["aggregate"]["demographic_parity"]
    eo = report["aggregate"]["equalized_odds"]
    payload = {
        "master_seed": MASTER_SEED,
        "runs": RUNS,
        "dp_difference_before": dp["dp_difference"]["mu_before"],
        "dp_difference_after": dp["dp_difference"]["mu_after"],
        "dp_improvement_pct": dp["dp_difference"]["pct_improvement"],
        "dp_welch_p": dp["dp_difference"]["p"],
        "eo_difference_before": eo["eo_difference"]["mu_before"],
        "eo_difference_after": eo["eo_difference"]["mu_after"],
        "eo_improvement_pct": eo["eo_difference"]["pct_improvement"],
        "eo_welch_p": eo["eo_difference"]["p"],
        "accuracy_before": dp["accuracy"]["mu_before"],
        "accuracy_after_dp": dp["accuracy"]["mu_after"],
        "accuracy_after_eo": eo["accuracy"]["mu_after"],
    }
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {OUT}")
    for key, value in sorted(payload.items()):
        print(f"  {key} = {value}")


if __name__ == "__main__":
    main()
