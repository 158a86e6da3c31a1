#!/usr/bin/env python3
"""Regenerate tests/fixtures/welch_p_oracle.json.

Freezes two-sided Student-t p-values for 100 random (t, df) pairs, computed
with scipy.stats as the reference implementation. Run from the repo root;
needs scipy (dev environment only).
"""

import json
from pathlib import Path

import numpy as np
from scipy import stats

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "welch_p_oracle.json"


def main() -> None:
    rng = np.random.default_rng(20240901)
    rows = []
    for _ in range(100):
        t = float(rng.uniform(-8.0, 8.0))
        df = float(rng.uniform(1.0, 60.0))
        p = float(2.0 * stats.t.sf(abs(t), df))
        rows.append([t, df, p])
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(rows, indent=1) + "\n", encoding="utf-8")
    print(f"wrote {OUT} ({len(rows)} pairs)")


if __name__ == "__main__":
    main()
