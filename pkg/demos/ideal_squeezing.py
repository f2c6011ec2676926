"""Two-mode vacuum under the ideal generator H_- versus 2 exp(-2r).

Run: python demos/ideal_squeezing.py [N]
"""

from __future__ import annotations

import sys

from cqedsqueeze.observables import ideal_variance
from cqedsqueeze.scenarios import ScenarioConfig, run_scenario

N = int(sys.argv[1]) if len(sys.argv) > 1 else 60
cfg = ScenarioConfig.from_dict({
    "scenario": {"name": "ideal", "engines": ["schrodinger_hminus"]},
    "truncation": {"N_a": N},
    "grid": {"r_max": 1.5, "samples": 7},
    "observables": {"select": "fixed"},
})
rec = run_scenario(cfg, write=False)
print(f"{'r':>5} {'V_ar':>10} {'2e^-2r':>10} {'dB':>7}")
for row in rec.rows:
    print(f"{row['r']:5.2f} {row['V_ar']:10.6f} {ideal_variance(row['r']):10.6f} {row['dB']:7.2f}")
