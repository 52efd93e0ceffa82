"""Monte Carlo check that F(t, T_k, T_N) are martingales, and that a zero drift is caught.

Run: python demos/martingale_check.py
"""

from liborforge import SimulationConfig, martingale_test, parse_spec

from _common import SPECS

cfg = SimulationConfig(30_000, master_seed=7)
for name in ("lmm", "fpm", "affine"):
    model = parse_spec(SPECS / f"{name}.json")
    good = martingale_test(model, cfg)
    bad = martingale_test(model.with_zero_drift(True), cfg)
    print(f"{name:>6}: max |z| {good.max_abs_z:5.2f} ({'pass' if good.passed else 'fail'}),"
          f" zero drift max |z| {bad.max_abs_z:6.2f} ({'pass' if bad.passed else 'fail'})")
