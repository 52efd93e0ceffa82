import math

import numpy as np
import pytest

from liborforge import (
    AffineFunctional,
    AtomicJumpMeasure,
    DriftConsistencyError,
    InitialCurve,
    LocalCharacteristics,
    LogOnePlusExpFunctional,
    ModelSpec,
    Segment,
    TenorStructure,
    ValidationReport,
    VolatilityStructure,
    build_fpm_model,
    build_lmm_model,
    characteristic_integrals,
    drift_residual_backward,
    drift_residual_terminal,
    fpm_drift,
    fpm_pairwise_drift,
    forward_measure_characteristics,
    lmm_drift,
    positivity_check,
    residual_sweep,
    structure_preservation_check,
    validate_assumptions,
)
from liborforge.core import Triplet, zero_functional
from liborforge.drift import FpmSpec, local_martingale_residual

from conftest import constant_model, curve4, levy_driver, tenor4


def _states(n, d=3, seed=0, lo=-5.0, hi=5.0):
    rng = np.random.default_rng(seed)
    return rng.uniform(0, 2.0, n), rng.uniform(lo, hi, (n, d))


# -- residuals -----------------------------------------------------------------

def test_zero_characteristics_time_constant_functionals():
    tenor = tenor4()
    drv = LocalCharacteristics.constant(2.0, np.zeros(3), np.zeros((3, 3)))
    fs = [LogOnePlusExpFunctional(0.5, 0.03, k, 3) for k in range(3)]
    spec = ModelSpec(tenor, drv, "lmm", fs, curve4())
    for t, x in zip(*_states(20)):
        for k in (1, 2, 3):
            assert drift_residual_backward(spec, k, t, x) == 0.0
    gspec = constant_model(LocalCharacteristics.constant(1.5, [0.0], [[0.0]]), [0.2, 0.1])
    assert drift_residual_terminal(gspec, 1, 0.3, np.array([1.0])) == 0.0


@pytest.mark.parametrize("route", ["direct", "tilt"])
def test_lmm_drift_closes_backward_condition(lmm, route):
    for t, x in zip(*_states(200, seed=1)):
        for k in (1, 2, 3):
            assert abs(drift_residual_backward(lmm, k, t, x, route)) < 1e-10


def test_residual_is_affine_in_drift(lmm):
    x = np.array([0.4, -1.0, 2.0])
    t = 0.3
    for k in (1, 2, 3):
        f = lmm.functionals[k - 1]
        trip = forward_measure_characteristics(lmm, k, t, x)
        delta = np.zeros(3)
        delta[k - 1] = 0.01
        bumped = Triplet(trip.drift + delta, trip.diffusion, trip.sizes, trip.intensities)
        gap = local_martingale_residual(f, bumped, t, x) - local_martingale_residual(f, trip, t, x)
        expected = float(f.gradient(t, x) @ delta)
        assert expected != 0.0
        assert gap == pytest.approx(expected, rel=1e-12)


def test_fpm_terminal_residual_state_independent(fpm):
    for t in (0.1, 0.7, 1.2, 1.9):
        vals = [drift_residual_terminal(fpm, k, t, x) for k in (1, 2, 3) for x in _states(100, seed=2)[1]]
        assert max(abs(v) for v in vals) < 1e-12
        for k in (1, 2, 3):
            per_k = [drift_residual_terminal(fpm, k, t, x) for x in _states(100, seed=5)[1]]
            assert max(per_k) - min(per_k) < 1e-14


@pytest.mark.parametrize("route", ["direct", "tilt"])
def test_fpm_backward_through_converted_functionals(fpm, route):
    for t, x in zip(*_states(200, seed=6)):
        for k in (1, 2, 3):
            assert abs(drift_residual_backward(fpm, k, t, x, route)) < 1e-10


def test_affine_terminal_residual(affine):
    sweep = residual_sweep(affine, states=1000, seed=3)
    assert max(sweep.values()) < 1e-8


def test_zero_drift_breaks_residuals(lmm, fpm):
    x = np.array([0.2, 0.1, -0.3])
    assert abs(drift_residual_backward(lmm.with_zero_drift(), 1, 0.2, x)) > 1e-3
    assert abs(drift_residual_terminal(fpm.with_zero_drift(), 1, 0.2, x)) > 1e-3


def test_unknown_route_rejected(lmm):
    with pytest.raises(ValueError):
        drift_residual_backward(lmm, 1, 0.0, np.zeros(3), route="sideways")


# -- closed-form drifts ----------------------------------------------------------

def test_lmm_drift_vanishes_with_zero_volatility():
    vol = VolatilityStructure.flat(tenor4(), [[0.3], [0.0], [0.2]])
    spec = build_lmm_model(curve4(), levy_driver(), vol).lmm
    for t, x in zip(*_states(20, seed=8)):
        assert lmm_drift(spec, 2, t, x) == 0.0


def test_lmm_drift_two_diffusion_terms_by_hand():
    tenor = TenorStructure.uniform(3, 0.5)
    curve = InitialCurve.from_rates(tenor, 0.99, [0.03, 0.04])
    vol = VolatilityStructure.flat(tenor, [[0.2], [0.2]])
    spec = build_lmm_model(curve, levy_driver(1.5, jumps=False), vol).lmm
    a2 = 0.5 * 0.04
    x = np.array([0.7, -math.log(a2)])  # ell^2 = 1/2
    assert spec.ell(x)[1] == pytest.approx(0.5, abs=1e-15)
    assert lmm_drift(spec, 1, 0.2, x) == pytest.approx(-0.5 * 0.04 - 0.5 * 0.04, abs=1e-15)


def test_lmm_drift_last_rate_empty_product(lmm):
    spec = lmm.lmm
    lam = 0.3
    expected = -0.5 * lam**2
    for y, rate in zip([0.5, -0.4, 0.2], [0.6, 0.8, 1.0]):
        expected -= (math.exp(lam * y) - 1 - lam * y) * rate
    for x in _states(10, seed=9)[1]:
        assert lmm_drift(spec, 3, 0.4, x) == pytest.approx(expected, abs=1e-15)


def _one_rate_fpm(vol, diffusion=1.0, atoms=None):
    tenor = TenorStructure.uniform(2, 0.5)
    curve = InitialCurve.from_rates(tenor, 0.99, [0.03])
    levy = LocalCharacteristics.constant(1.0, [0.0], [[diffusion]], atoms)
    return build_fpm_model(curve, levy, VolatilityStructure.flat(tenor, [[vol]])).fpm


def test_fpm_drift_examples():
    assert fpm_drift(_one_rate_fpm(0.0), 1, 0.2) == 0.0
    assert fpm_drift(_one_rate_fpm(0.3), 1, 0.2) == pytest.approx(-0.5 * 0.09, abs=1e-15)
    spec = _one_rate_fpm(1.0, 0.0, AtomicJumpMeasure([0.1], [2.0]))
    assert fpm_drift(spec, 1, 0.2) == pytest.approx(-2 * (math.exp(0.1) - 1 - 0.1), abs=1e-15)
    assert fpm_drift(spec, 1, 0.2) == pytest.approx(-0.0103418, abs=1e-7)


def _three_tenor_fpm(l1, l2):
    tenor = TenorStructure.uniform(3, 0.5)
    curve = InitialCurve.from_rates(tenor, 0.99, [0.03, 0.04])
    vol = VolatilityStructure.flat(tenor, [[l1], [l2]])
    return build_fpm_model(curve, levy_driver(1.5, jumps=False), vol).fpm


def test_fpm_pairwise_examples():
    assert fpm_pairwise_drift(_three_tenor_fpm(0.0, 0.7), 1, 0.2) == pytest.approx(0.0, abs=1e-16)
    spec = _three_tenor_fpm(0.2, 0.3)
    assert fpm_pairwise_drift(spec, 1, 0.2) == pytest.approx(-0.5 * 0.04 - 0.2 * 0.3, abs=1e-15)
    assert fpm_pairwise_drift(spec, 2, 0.2) == fpm_drift(spec, 2, 0.2)


def test_fpm_pairwise_with_jumps_and_late_times(fpm):
    for t in (0.1, 0.6, 1.1, 1.7):
        for k in (1, 2, 3):
            fpm_pairwise_drift(fpm.fpm, k, t)


def test_fpm_pairwise_detects_inconsistency(fpm):
    class Broken(FpmSpec):
        def drift_vector(self, t, x=None):
            return super().drift_vector(t) + np.array([0.0, 1e-6, 0.0])

    block = fpm.fpm
    broken = Broken(block.tenor, block.levy, block.volatility, block.bound, block.epsilon,
                    initial_forward_prices=block.initial_forward_prices)
    with pytest.raises(DriftConsistencyError, match="k=1"):
        fpm_pairwise_drift(broken, 1, 0.2)


def test_drift_index_checks(lmm, fpm):
    with pytest.raises(IndexError):
        lmm_drift(lmm.lmm, 4, 0.0, np.zeros(3))
    with pytest.raises(IndexError):
        fpm_drift(fpm.fpm, 0, 0.0)


def test_vectorized_drift_matches_pointwise(lmm):
    ts, xs = _states(10, seed=11)
    for t in ts:
        batch = lmm.lmm.drift_vector(t, xs)
        for x, row in zip(xs, batch):
            assert np.array_equal(row, lmm.lmm.drift_vector(t, x))


# -- assumption audits ---------------------------------------------------------------

def _scalar_spec(horizon, driver):
    n = int(round(horizon / 0.5))
    tenor = TenorStructure.uniform(n, 0.5)
    funcs = [AffineFunctional(0.0, [0.0], lipschitz_bound=1.0) for _ in range(n - 1)]
    curve = InitialCurve(tenor, np.linspace(0.99, 0.97, n))
    return ModelSpec(tenor, driver, "fpm", funcs, curve)


def test_validate_zero_driver():
    spec = _scalar_spec(2.0, LocalCharacteristics.constant(2.0, [0.0], [[0.0]]))
    report = validate_assumptions(spec, samples=200)
    assert report.verdict
    assert report["INT jump moment (C1)"].value == 0.0
    assert report["INT diffusion (C2)"].value == 0.0


def test_diffusion_integral_by_hand():
    spec = _scalar_spec(2.0, LocalCharacteristics.constant(2.0, [0.0], [[0.04]]))
    assert characteristic_integrals(spec, 1.0)[1] == pytest.approx(0.04 * 2, abs=1e-15)


def test_jump_integral_by_hand():
    spec = _scalar_spec(1.0, LocalCharacteristics.constant(1.0, [0.0], [[0.0]], AtomicJumpMeasure([2.0], [1.0])))
    jump, _ = characteristic_integrals(spec, 1.0)
    assert jump == pytest.approx(2 * math.e**2 * 1.0, rel=1e-15)
    assert jump == pytest.approx(14.778, abs=1e-3)


def test_integrals_exact_vs_riemann():
    segs = (Segment(0.0, 0.3, [0.0], [[0.04]], AtomicJumpMeasure([0.5, 1.5], [1.0, 0.2])),
            Segment(0.3, 1.25, [0.0], [[0.09]], AtomicJumpMeasure([-2.0], [0.3])),
            Segment(1.25, 2.0, [0.0], [[0.01]], None))
    spec = _scalar_spec(2.0, LocalCharacteristics(1, segs))
    exact = characteristic_integrals(spec, 0.7)
    riemann = characteristic_integrals(spec, 0.7, method="riemann")
    for a, b in zip(exact, riemann):
        assert b == pytest.approx(a, rel=1e-6)


def test_family_models_validate(lmm, fpm, affine):
    for spec in (lmm, fpm, affine):
        report = validate_assumptions(spec, samples=500)
        assert report.verdict, report.as_table()
        assert report.verdict == all(r.passed for r in report.records)


def test_understated_lipschitz_fails_validation():
    tenor = TenorStructure.uniform(2, 0.5)
    drv = LocalCharacteristics.constant(1.0, [0.0], [[0.1]])
    spec = ModelSpec(tenor, drv, "fpm", [AffineFunctional(0.0, [2.0], lipschitz_bound=1.0)],
                     InitialCurve(tenor, [0.99, 0.98]))
    report = validate_assumptions(spec, samples=200)
    assert not report.verdict
    assert not report["LIP f^1"].passed


def test_volatility_support_violation_reported():
    tenor = tenor4()
    values = np.full((4, 3, 1), 0.1)  # lambda(s, T_1) nonzero after T_1
    spec = build_lmm_model(curve4(), levy_driver(), VolatilityStructure(tenor.dates, values))
    report = validate_assumptions(spec, samples=200)
    assert not report["VOL support"].passed
    assert not report.verdict


def test_report_table_and_lookup():
    report = ValidationReport()
    report.add("a", 1.0, True)
    report.add("b", 2.0, False)
    assert not report.verdict
    assert "b" in report.as_table() and "FAIL" in report.as_table()
    with pytest.raises(KeyError):
        report["c"]


# -- positivity and structure -----------------------------------------------------------

def test_positivity(lmm, fpm, affine):
    assert positivity_check(lmm).passed
    assert positivity_check(affine).passed
    bad = positivity_check(fpm)
    assert not bad.passed and bad.witness is not None


def test_negative_functional_has_positive_witness():
    tenor = TenorStructure.uniform(2, 0.5)
    drv = LocalCharacteristics.constant(1.0, [0.0], [[0.0]])
    spec = ModelSpec(tenor, drv, "fpm", [AffineFunctional(0.0, [-1.0])], InitialCurve(tenor, [0.99, 0.98]))
    report = positivity_check(spec, box=(0.0, 5.0))
    assert not report.passed
    assert report.witness["x"][0] > 0
    assert report.witness["g_k"] < 0


def test_structure_preservation(lmm, fpm, affine):
    assert structure_preservation_check(fpm).preserving
    assert structure_preservation_check(affine, state_samples=30).preserving
    rep = structure_preservation_check(lmm)
    assert not rep.preserving
    w = rep.witness
    assert w["beta1"] != w["beta2"]
    consts = constant_model(LocalCharacteristics.constant(1.5, [0.0], [[0.3]]), [0.2, 0.1])
    assert structure_preservation_check(consts).preserving
