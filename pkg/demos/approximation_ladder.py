"""H_full, V_I and H_- side by side at small r and a reduced cutoff.

The full three-level Hamiltonian needs a step of about 1e-5/g, so this
takes a couple of minutes even at N = 10.

Run: python demos/approximation_ladder.py
"""

from __future__ import annotations

from cqedsqueeze.scenarios import ScenarioConfig, get_builtin, run_scenario

data = get_builtin("fig2b").to_dict()
data["truncation"].update(N_a=10, N_b=10, full_N=10)
data["grid"].update(r_max=0.3, samples=4, full_r_max=0.3, full_samples=4)
rec = run_scenario(ScenarioConfig.from_dict(data), write=False)

print("regime checks passed:", rec.regime.passed)
engines = rec.config.engines
print(f"{'r':>5} " + " ".join(f"{e:>20}" for e in engines))
series = {e: rec.series(e) for e in engines}
for k, item in enumerate(rec.records[engines[0]]):
    print(f"{item.r:5.2f} " + " ".join(f"{series[e][k]:20.5f}" for e in engines))
