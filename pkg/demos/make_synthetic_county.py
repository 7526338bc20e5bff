"""Regenerate demos/data/synthetic_county.csv.

A deterministic 90-day county: 50 quiet days of Beta(20.6, 2.94e5) infection
fractions, then a wave whose shape multiplier peaks about 4 days after onset.
Counts are fractions scaled by a population of one million and rounded, so the
file round-trips through the case-count loader exactly.
"""

from datetime import date, timedelta
from pathlib import Path

import numpy as np

from wlcusum import BetaWaveModel

POPULATION = 1_000_000
A0, B0 = 20.6, 2.94e5
THETA = (0.464, 3.894, 0.445)
ONSET_DAY = 50
NUM_DAYS = 90
SEED = 2020
START = date(2020, 6, 1)


def main() -> None:
    model = BetaWaveModel(A0, B0, THETA)
    rng = np.random.default_rng(SEED)
    fractions = model.sample_segment(rng, nu=ONSET_DAY + 1, start=1, length=NUM_DAYS)
    counts = np.round(fractions * POPULATION).astype(int)
    lines = ["date,cases"]
    for i, c in enumerate(counts):
        lines.append(f"{(START + timedelta(days=i)).isoformat()},{c}")
    out = Path(__file__).parent / "data" / "synthetic_county.csv"
    out.write_text("\n".join(lines) + "\n")
    print(f"wrote {out} ({NUM_DAYS} days, onset day {ONSET_DAY} = "
          f"{(START + timedelta(days=ONSET_DAY)).isoformat()})")


if __name__ == "__main__":
    main()
