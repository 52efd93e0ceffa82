"""No-arbitrage drifts: build each family from its JSON document and check the drift condition.

Run: python demos/drift_conditions.py
"""

import numpy as np

from liborforge import (
    drift_residual_backward,
    lmm_drift,
    parse_spec,
    positivity_check,
    residual_sweep,
    validate_assumptions,
)

from _common import SPECS

for name in ("lmm", "fpm", "affine"):
    model = parse_spec(SPECS / f"{name}.json")
    print(f"== {name}: N={model.N}, state dimension {model.dimension}")
    print(validate_assumptions(model).as_table())
    sweep = residual_sweep(model, states=200)
    print("max |drift residual| per tenor:", {k: f"{v:.1e}" for k, v in sweep.items()})
    pos = positivity_check(model, sample_count=2000)
    print(f"positivity sufficient condition: {'holds' if pos.passed else 'violated'}")
    print()

# the market-model drift is state dependent; zeroing it breaks the condition
lmm = parse_spec(SPECS / "lmm.json")
x = np.array([0.2, -0.1, 0.4])
print("LMM drift of X^1 at t=0.3:", lmm_drift(lmm.lmm, 1, 0.3, x))
print("residual with zero drift:  ", drift_residual_backward(lmm.with_zero_drift(True), 1, 0.3, x))
