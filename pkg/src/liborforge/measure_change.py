"""Characteristics of ``f(t, X)``, Girsanov tilts and forward-measure triplets.

All triplets are evaluated at an explicit ``(t, x_state)``: away from the
affine case the transformed characteristics depend on the left limit of the
driver, so there is no state-free object to return.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ContractError, ForwardFunctional, LocalCharacteristics, ModelSpec, Triplet


@dataclass(frozen=True)
class GirsanovTilt:
    """Measure change with density ``exp(f(., X))`` seen at one ``(t, x_state)``.

    ``beta = Df(t, x_state)``; ``multipliers[i] = exp(f(t, x + size_i) - f(t, x))``
    is the factor applied to the intensity of atom ``i``.
    """

    beta: np.ndarray
    sizes: np.ndarray
    multipliers: np.ndarray


@dataclass(frozen=True)
class ScalarCharacteristics:
    """Triplet of the real-valued process ``f(., X)`` (identity truncation)."""

    drift: float
    diffusion: float
    jump_sizes: np.ndarray
    intensities: np.ndarray


def _triplet(chars, t: float, x_state) -> Triplet:
    if isinstance(chars, Triplet):
        return chars
    if isinstance(chars, LocalCharacteristics) and chars.truncation != "identity":
        raise ContractError("characteristics must use the identity truncation h(x) = x")
    return chars.characteristics_at(t, x_state)


def tilt(f: ForwardFunctional, t: float, x_state, sizes) -> GirsanovTilt:
    x = np.asarray(x_state, dtype=float)
    sizes = np.asarray(sizes, dtype=float).reshape(-1, f.dimension)
    beta = np.asarray(f.gradient(t, x), dtype=float)
    inc = np.asarray(f.increment(t, x, sizes), dtype=float).reshape(-1)
    return GirsanovTilt(beta, sizes, np.exp(inc))


def characteristics_of_functional(chars, f: ForwardFunctional, t: float, x_state) -> ScalarCharacteristics:
    """Local characteristics of ``f(t, X_t)`` given those of ``X`` at ``(t, x_state)``."""
    trip = _triplet(chars, t, x_state)
    x = np.asarray(x_state, dtype=float)
    grad = np.asarray(f.gradient(t, x), dtype=float)
    hess = np.asarray(f.hessian(t, x), dtype=float)
    c = trip.diffusion
    jumps = np.asarray(f.increment(t, x, trip.sizes), dtype=float).reshape(-1)
    compensation = float(((jumps - trip.sizes @ grad) * trip.intensities).sum())
    drift = (float(f.time_derivative(t, x)) + float(grad @ trip.drift)
             + 0.5 * float((hess * c).sum()) + compensation)
    keep = jumps != 0
    return ScalarCharacteristics(drift, float(grad @ c @ grad), jumps[keep], trip.intensities[keep])


def girsanov_tilt_apply(chars, f: ForwardFunctional, t: float, x_state) -> Triplet:
    """Triplet of ``X`` under ``dP'/dP = exp(f(., X))``.

    ``b' = b + c Df + sum_i (Y_i - 1) x_i lambda_i``, ``c' = c`` (the same
    array object) and intensities multiplied by ``Y_i``.
    """
    trip = _triplet(chars, t, x_state)
    tl = tilt(f, t, x_state, trip.sizes)
    lam = trip.intensities * tl.multipliers
    drift = trip.drift + trip.diffusion @ tl.beta + ((tl.multipliers - 1.0) * trip.intensities) @ trip.sizes
    return Triplet(drift, trip.diffusion, trip.sizes, lam)


def forward_measure_characteristics(spec: ModelSpec, k: int, t: float, x_state) -> Triplet:
    """``P_{k+1}``-triplet of the driver, from the ``P_N`` one.

    Products of the tilt multipliers over ``j = k+1..N-1`` are formed in log
    space (a single exponential of the summed increments).
    """
    spec.check_rate_index(k)
    x = np.asarray(x_state, dtype=float)
    trip = spec.characteristics_at(t, x)
    fs = spec.backward_functionals()[k:]
    if not fs:
        return trip
    grad_sum = np.zeros(spec.dimension)
    log_mult = np.zeros(trip.intensities.size)
    for f in fs:
        grad_sum = grad_sum + np.asarray(f.gradient(t, x), dtype=float)
        log_mult = log_mult + np.asarray(f.increment(t, x, trip.sizes), dtype=float).reshape(-1)
    mult = np.exp(log_mult)
    drift = trip.drift + trip.diffusion @ grad_sum + ((mult - 1.0) * trip.intensities) @ trip.sizes
    return Triplet(drift, trip.diffusion, trip.sizes, trip.intensities * mult)


def iterated_tilts(spec: ModelSpec, k: int, t: float, x_state) -> Triplet:
    """Same triplet as :func:`forward_measure_characteristics`, one tilt at a time."""
    spec.check_rate_index(k)
    trip = spec.characteristics_at(t, x_state)
    for f in reversed(spec.backward_functionals()[k:]):
        trip = girsanov_tilt_apply(trip, f, t, x_state)
    return trip
