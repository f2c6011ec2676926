"""Resonator loss sweep with the density-matrix engine on a small cutoff.

Writes per-run CSV/JSON files and a combined long-format CSV under
``demo_results/``.

Run: python demos/kappa_sweep.py
"""

from __future__ import annotations

from cqedsqueeze.scenarios import ScenarioConfig, run_sweep

base = ScenarioConfig.from_dict({
    "scenario": {"name": "kappa_demo", "engines": ["lindblad_vi"]},
    "truncation": {"N_a": 4},
    "rates": {"units": "lambda"},
    "grid": {"r_max": 0.3, "samples": 4},
    "output": {"dir": "demo_results"},
})
result = run_sweep(base, "rates.kappa", [0.1, 1.0, 5.0])
for value, run in zip(result.values, result.runs):
    print(f"kappa = {value:4} |lambda|   min V_ar = {run.min_v_ar():.4f}")
print("combined CSV:", result.csv_path)
