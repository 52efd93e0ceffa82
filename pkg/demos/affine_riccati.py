"""Affine family: Riccati solutions, calibration to the initial curve and the MGF.

Run: python demos/affine_riccati.py
"""

import math

import numpy as np

from liborforge import (
    SimulationConfig,
    affine_forward_price,
    mgf,
    parse_spec,
    richardson_error,
    riccati_solve,
    simulate_driver,
)

from _common import SPECS

model = parse_spec(SPECS / "affine.json")
aff = model.affine
print("calibrated u:", [f"{u:.10f}" for u in aff.u])
for k in model.tenor.K_bar:
    print(f"  F(0,T_{k},T_N) model {affine_forward_price(aff, k, 0.0, 1.0):.12f}"
          f"  curve {model.initial_curve.forward_price(k, model.N):.12f}")

sol = riccati_solve(aff.driver, aff.u[0], aff.horizon)
print(f"phi, psi at horizon for u_1: {sol.phi[-1]:.10f}, {sol.psi[-1]:.10f}")
ephi, epsi = richardson_error(aff.driver, aff.u[0], aff.horizon, sol.step)
print(f"Richardson error estimates: phi {ephi:.1e}, psi {epsi:.1e}")

grid = simulate_driver(model, SimulationConfig(50_000, master_seed=3, record_times=(1.0,), log_jumps=False))
x = grid.at(1.0)[:, 0]
for u in (-1.0, 0.3):
    s = np.exp(u * x)
    print(f"E[exp({u} X_1)]: Monte Carlo {s.mean():.5f} +- {s.std(ddof=1) / math.sqrt(s.size):.5f}"
          f"  Riccati {mgf(aff.driver, u, 1.0, 1.0):.5f}")
