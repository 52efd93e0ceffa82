"""Forward measures: tilt the terminal triplet down the tenor and compare families.

Run: python demos/measure_changes.py
"""

import numpy as np

from liborforge import forward_measure_characteristics, parse_spec, structure_preservation_check

from _common import SPECS

for name in ("lmm", "fpm"):
    model = parse_spec(SPECS / f"{name}.json")
    print(f"== {name}")
    for x in (np.zeros(model.dimension), np.full(model.dimension, 1.0)):
        for k in (3, 2, 1):
            trip = forward_measure_characteristics(model, k, 0.25, x)
            print(f"  x={x[0]:+.1f}  P_{k}: drift {np.round(trip.drift, 6)}  intensities {np.round(trip.intensities, 6)}")
    rep = structure_preservation_check(model)
    print(f"  tilts state independent (driver stays a PII under every P_k): {rep.preserving}")
    if rep.witness:
        print(f"  witness: {rep.witness}")
