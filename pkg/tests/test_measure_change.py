import math

import numpy as np
import pytest

from liborforge import (
    AffineFunctional,
    AtomicJumpMeasure,
    ContractError,
    CustomFunctional,
    LocalCharacteristics,
    LogOnePlusExpFunctional,
    Triplet,
    characteristics_of_functional,
    forward_measure_characteristics,
    girsanov_tilt_apply,
    iterated_tilts,
)
from liborforge.core import LinearCombination, zero_functional
from liborforge.measure_change import tilt


def _scalar(b=0.0, c=0.0, atoms=None):
    return LocalCharacteristics.constant(1.0, [b], [[c]], atoms)


def test_constant_functional_has_null_characteristics():
    chars = _scalar(0.2, 0.5, AtomicJumpMeasure([0.3], [1.0]))
    sc = characteristics_of_functional(chars, AffineFunctional(1.7, [0.0]), 0.3, np.array([0.4]))
    assert sc.drift == 0.0 and sc.diffusion == 0.0
    assert sc.jump_sizes.size == 0 and sc.intensities.size == 0


def test_identity_functional_passes_triplet_through():
    chars = _scalar(0.1, 0.04, AtomicJumpMeasure([0.5], [2.0]))
    sc = characteristics_of_functional(chars, AffineFunctional(0.0, [1.0]), 0.5, np.array([0.0]))
    # b^f = b + (jump - <Df, jump>) lambda = 0.1 + (0.5 - 0.5) * 2
    assert sc.drift == pytest.approx(0.1, abs=1e-15)
    assert sc.diffusion == pytest.approx(0.04, abs=1e-15)
    assert sc.jump_sizes.tolist() == [0.5] and sc.intensities.tolist() == [2.0]


def test_square_functional_by_hand():
    f = CustomFunctional(lambda t, x: np.asarray(x)[..., 0] ** 2, lambda t, x: 0.0,
                         lambda t, x: 2 * np.asarray(x), lambda t, x: np.full(np.shape(x) + (1,), 2.0),
                         lipschitz_bound=100.0, dimension=1)
    sc = characteristics_of_functional(_scalar(0.0, 1.0), f, 0.2, np.array([1.0]))
    assert sc.drift == pytest.approx(0.5 * 2 * 1, abs=1e-15)
    assert sc.diffusion == pytest.approx((2 * 1) ** 2 * 1, abs=1e-15)


def test_tilt_by_zero_is_identity():
    chars = _scalar(0.3, 0.2, AtomicJumpMeasure([0.5, -0.1], [1.0, 2.0]))
    base = chars.characteristics_at(0.4)
    out = girsanov_tilt_apply(chars, zero_functional(1), 0.4, np.array([0.7]))
    assert np.array_equal(out.drift, base.drift)
    assert out.diffusion is base.diffusion
    assert np.array_equal(out.intensities, base.intensities)


def test_tilt_by_identity_by_hand():
    chars = _scalar(0.0, 1.0, AtomicJumpMeasure([0.5], [1.0]))
    out = girsanov_tilt_apply(chars, AffineFunctional(0.0, [1.0]), 0.1, np.array([0.0]))
    expected_b = 0.0 + 1.0 * 1.0 + (math.exp(0.5) - 1.0) * 0.5 * 1.0
    assert out.drift[0] == pytest.approx(expected_b, abs=1e-15)
    assert out.drift[0] == pytest.approx(1.3243606, abs=1e-7)
    assert out.diffusion[0, 0] == 1.0
    assert out.intensities[0] == pytest.approx(math.exp(0.5), abs=1e-15)
    assert out.intensities[0] == pytest.approx(1.6487212, abs=1e-7)


def test_affine_tilt_is_state_independent():
    s1, s2 = 0.04, 0.09
    atoms = AtomicJumpMeasure([[0.2, 0.3], [-0.1, 0.5]], [1.0, 0.5])
    chars = LocalCharacteristics.constant(1.0, [0.01, 0.02], np.diag([s1, s2]), atoms)
    f = AffineFunctional(0.4, [0.0, 1.0])
    a = girsanov_tilt_apply(chars, f, 0.5, np.array([0.1, -2.0]))
    b = girsanov_tilt_apply(chars, f, 0.5, np.array([3.0, 4.0]))
    assert np.array_equal(a.drift, b.drift) and np.array_equal(a.intensities, b.intensities)
    mult = np.exp(np.array([0.3, 0.5]))
    jump_term = ((mult - 1.0) * np.array([1.0, 0.5])) @ np.array([[0.2, 0.3], [-0.1, 0.5]])
    assert np.allclose(a.drift, np.array([0.01, 0.02 + s2]) + jump_term, rtol=0, atol=1e-15)
    assert np.allclose(a.intensities, np.array([1.0, 0.5]) * mult, rtol=0, atol=1e-15)


def test_tilt_multipliers_positive():
    f = LogOnePlusExpFunctional(0.5, 0.03, 0, 1)
    tl = tilt(f, 0.0, np.array([2.0]), np.array([[-30.0], [30.0]]))
    assert np.all(tl.multipliers > 0)


def test_tilt_then_negative_tilt_restores():
    chars = _scalar(0.1, 0.3, AtomicJumpMeasure([0.4, -0.7], [1.0, 2.0]))
    f = AffineFunctional(0.0, [0.8])
    x = np.array([0.2])
    base = chars.characteristics_at(0.5)
    there = girsanov_tilt_apply(chars, f, 0.5, x)
    back = girsanov_tilt_apply(there, -f, 0.5, x)
    assert np.allclose(back.drift, base.drift, rtol=0, atol=1e-12)
    assert np.allclose(back.intensities, base.intensities, rtol=0, atol=1e-12)
    assert back.diffusion is base.diffusion


def test_bounded_truncation_is_a_contract_error():
    chars = LocalCharacteristics.constant(1.0, [0.0], [[1.0]], AtomicJumpMeasure([2.0], [1.0]), truncation="bounded")
    with pytest.raises(ContractError):
        girsanov_tilt_apply(chars, AffineFunctional(0.0, [1.0]), 0.1, np.array([0.0]))


def test_last_rate_measure_is_terminal(lmm):
    x = np.array([0.1, -0.2, 0.3])
    a = forward_measure_characteristics(lmm, 3, 0.4, x)
    b = lmm.characteristics_at(0.4, x)
    assert np.array_equal(a.drift, b.drift) and np.array_equal(a.intensities, b.intensities)


def test_single_tilt_matches_direct_tilt(lmm):
    x = np.array([0.1, -0.2, 0.3])
    a = forward_measure_characteristics(lmm, 2, 0.7, x)
    b = girsanov_tilt_apply(lmm.characteristics_at(0.7, x), lmm.functionals[2], 0.7, x)
    assert np.allclose(a.drift, b.drift, rtol=0, atol=1e-15)
    assert np.allclose(a.intensities, b.intensities, rtol=0, atol=1e-15)


@pytest.mark.parametrize("name", ["lmm", "fpm"])
def test_closed_form_product_equals_composed_tilts(name, request):
    spec = request.getfixturevalue(name)
    rng = np.random.default_rng(3)
    for _ in range(50):
        t = rng.uniform(0, 2)
        x = rng.uniform(-2, 2, 3)
        a = forward_measure_characteristics(spec, 1, t, x)
        trip = spec.characteristics_at(t, x)
        fs = spec.backward_functionals()
        trip = girsanov_tilt_apply(trip, fs[2], t, x)
        trip = girsanov_tilt_apply(trip, fs[1], t, x)
        assert np.allclose(a.drift, trip.drift, rtol=0, atol=1e-14)
        assert np.allclose(a.intensities, trip.intensities, rtol=0, atol=1e-14)
        c = iterated_tilts(spec, 1, t, x)
        assert np.allclose(a.drift, c.drift, rtol=0, atol=1e-14)


def test_measures_chain_one_tilt_at_a_time(lmm):
    x = np.array([0.5, 0.0, -1.0])
    for k in (1, 2):
        lower = forward_measure_characteristics(lmm, k, 0.3, x)
        upper = forward_measure_characteristics(lmm, k + 1, 0.3, x)
        again = girsanov_tilt_apply(upper, lmm.functionals[k], 0.3, x)
        assert np.allclose(lower.drift, again.drift, rtol=0, atol=1e-14)
        assert np.allclose(lower.intensities, again.intensities, rtol=0, atol=1e-14)


def test_diffusion_object_is_shared(lmm):
    x = np.zeros(3)
    trip = lmm.characteristics_at(0.1, x)
    out = girsanov_tilt_apply(trip, lmm.functionals[0], 0.1, x)
    assert out.diffusion is trip.diffusion


def test_combination_tilt_equals_sequential():
    atoms = AtomicJumpMeasure([[0.3, 0.1]], [2.0])
    chars = LocalCharacteristics.constant(1.0, [0.0, 0.0], np.eye(2) * 0.1, atoms)
    f1 = LogOnePlusExpFunctional(0.5, 0.05, 0, 2)
    f2 = LogOnePlusExpFunctional(0.5, 0.02, 1, 2)
    x = np.array([0.3, -0.4])
    both = girsanov_tilt_apply(chars, LinearCombination((f1, f2), (1.0, 1.0)), 0.0, x)
    seq = girsanov_tilt_apply(girsanov_tilt_apply(chars, f1, 0.0, x), f2, 0.0, x)
    assert np.allclose(both.drift, seq.drift, rtol=0, atol=1e-15)
    assert np.allclose(both.intensities, seq.intensities, rtol=0, atol=1e-15)


def test_accepts_bare_triplet():
    trip = Triplet(np.array([0.1]), np.array([[0.2]]), np.array([[0.5]]), np.array([1.0]))
    out = girsanov_tilt_apply(trip, AffineFunctional(0.0, [1.0]), 0.0, np.array([0.0]))
    assert out.drift[0] == pytest.approx(0.1 + 0.2 + (math.exp(0.5) - 1) * 0.5, abs=1e-15)
