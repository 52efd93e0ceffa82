"""One-dimensional affine driver on ``D = R_+`` and the affine LIBOR family.

The driver has characteristics (truncation ``h(x) = 1 ^ x``)::

    b(x) = b_tilde + beta * x,    c(x) = 2 * alpha * x,    F(x) = F1 + x * F2

and exponential-affine moments ``E_x[exp(u X_t)] = exp(phi(t,u) + psi(t,u) x)``
where ``(phi, psi)`` solve the generalized Riccati system integrated here
with the classical fourth-order Runge-Kutta method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .core import (
    AffineFunctional,
    AtomicJumpMeasure,
    InitialCurve,
    InvariantError,
    ModelSpec,
    TenorStructure,
    Triplet,
)

BLOW_UP = 1e8
MAX_EXPONENT = 700.0


class RiccatiRangeError(OverflowError):
    """An atom exponential ``exp(u * xi)`` overflows."""


class RiccatiDivergenceError(ArithmeticError):
    """The Riccati solution blew up before the horizon (``u`` outside ``I_T``)."""

    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


class CalibrationError(ValueError):
    """No parameter reproduces the requested initial forward price."""


def _positive_atoms(measure: AtomicJumpMeasure | None) -> AtomicJumpMeasure:
    if measure is None:
        return AtomicJumpMeasure.empty(1)
    if measure.size and measure.dimension != 1:
        raise InvariantError("affine jump measures must be one-dimensional")
    if np.any(measure.sizes <= 0):
        raise InvariantError("affine jump sizes must be strictly positive (jumps stay in R_+)")
    return measure if measure.size else AtomicJumpMeasure.empty(1)


@dataclass(frozen=True)
class AffineDriverSpec:
    b_tilde: float
    beta: float
    alpha: float
    jumps_constant: AtomicJumpMeasure = None
    jumps_state: AtomicJumpMeasure = None
    initial_state: float = 1.0
    dimension: int = field(default=1, init=False)

    def __post_init__(self):
        if not self.b_tilde > 0:
            raise InvariantError("b_tilde must be positive")
        if self.alpha < 0:
            raise InvariantError("alpha must be non-negative")
        if self.initial_state < 0:
            raise InvariantError("initial state must lie in R_+")
        object.__setattr__(self, "jumps_constant", _positive_atoms(self.jumps_constant))
        object.__setattr__(self, "jumps_state", _positive_atoms(self.jumps_state))

    @property
    def b(self) -> float:
        """Constant drift without truncation: ``b_tilde - sum (1 ^ xi) lambda`` over ``F1``."""
        F1 = self.jumps_constant
        return self.b_tilde - float((np.minimum(1.0, F1.sizes[:, 0]) * F1.intensities).sum())

    def characteristics_at(self, t: float, x_state) -> Triplet:
        """Identity-truncation triplet at state ``x`` (the ``1 ^ x`` drift shifted)."""
        x = max(float(np.asarray(x_state, dtype=float).reshape(-1)[0]), 0.0)
        F1, F2 = self.jumps_constant, self.jumps_state
        shift1 = float(((F1.sizes[:, 0] - np.minimum(1.0, F1.sizes[:, 0])) * F1.intensities).sum())
        shift2 = float(((F2.sizes[:, 0] - np.minimum(1.0, F2.sizes[:, 0])) * F2.intensities).sum())
        drift = self.b_tilde + self.beta * x + shift1 + x * shift2
        sizes = np.concatenate([F1.sizes, F2.sizes])
        lam = np.concatenate([F1.intensities, x * F2.intensities])
        return Triplet(np.array([drift]), np.array([[2.0 * self.alpha * x]]), sizes, lam)


def _atom_terms(measure: AtomicJumpMeasure, u, label: str):
    xi = measure.sizes[:, 0]
    arg = np.multiply.outer(np.asarray(u, dtype=float), xi)
    if np.any(arg > MAX_EXPONENT):
        i = int(np.argmax(np.max(np.atleast_2d(arg), axis=0)))
        raise RiccatiRangeError(f"exp(u * xi) overflows for {label} atom {i} (xi={xi[i]})")
    return arg, xi


def riccati_rhs(driver: AffineDriverSpec, u):
    """``(F(u), R(u))`` of the generalized Riccati system; vectorized in ``u``."""
    u = np.asarray(u, dtype=float)
    arg1, _ = _atom_terms(driver.jumps_constant, u, "F1")
    arg2, xi2 = _atom_terms(driver.jumps_state, u, "F2")
    F = driver.b * u + (np.expm1(arg1) * driver.jumps_constant.intensities).sum(axis=-1)
    h = np.minimum(1.0, xi2)
    R = (driver.alpha * u**2 + driver.beta * u
         + ((np.expm1(arg2) - np.multiply.outer(u, h)) * driver.jumps_state.intensities).sum(axis=-1))
    return F[()], R[()]


@dataclass(frozen=True)
class RiccatiSolution:
    """``phi(t, u)``, ``psi(t, u)`` on a uniform grid ``0 = t_0 < ... < t_M``.

    Values between grid points use cubic Hermite interpolation with the
    Riccati right-hand side as nodal slopes.
    """

    u: float
    grid: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    phi_slope: np.ndarray
    psi_slope: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "_phi_spline", CubicHermiteSpline(self.grid, self.phi, self.phi_slope))
        object.__setattr__(self, "_psi_spline", CubicHermiteSpline(self.grid, self.psi, self.psi_slope))

    @property
    def horizon(self) -> float:
        return float(self.grid[-1])

    @property
    def step(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def _check(self, tau):
        if np.any(np.asarray(tau) < -1e-12) or np.any(np.asarray(tau) > self.horizon + 1e-12):
            raise ValueError(f"time {tau} outside [0, {self.horizon}]")

    def phi_at(self, tau):
        self._check(tau)
        return self._phi_spline(tau)[()]

    def psi_at(self, tau):
        self._check(tau)
        return self._psi_spline(tau)[()]

    def phi_rate(self, tau):
        self._check(tau)
        return self._phi_spline(tau, 1)[()]

    def psi_rate(self, tau):
        self._check(tau)
        return self._psi_spline(tau, 1)[()]


def _rk4(driver: AffineDriverSpec, u: np.ndarray, horizon: float, steps: int):
    h = horizon / steps
    phi = np.zeros((steps + 1,) + u.shape)
    psi = np.zeros((steps + 1,) + u.shape)
    psi[0] = u
    for m in range(steps):
        y = psi[m]
        try:
            f1, r1 = riccati_rhs(driver, y)
            f2, r2 = riccati_rhs(driver, y + 0.5 * h * r1)
            f3, r3 = riccati_rhs(driver, y + 0.5 * h * r2)
            f4, r4 = riccati_rhs(driver, y + h * r3)
        except (RiccatiRangeError, FloatingPointError) as exc:
            raise RiccatiDivergenceError(f"Riccati solution left the finite region near t={m * h:.6g}",
                                         m * h) from exc
        psi[m + 1] = y + h / 6.0 * (r1 + 2 * r2 + 2 * r3 + r4)
        phi[m + 1] = phi[m] + h / 6.0 * (f1 + 2 * f2 + 2 * f3 + f4)
        if not np.all(np.isfinite(psi[m + 1])) or np.any(np.abs(psi[m + 1]) > BLOW_UP):
            raise RiccatiDivergenceError(f"psi blew up at t={(m + 1) * h:.6g} (u outside I_T)", (m + 1) * h)
    return phi, psi


def riccati_solve(driver: AffineDriverSpec, u: float, horizon: float, step: float | None = None) -> RiccatiSolution:
    """Integrate ``phi' = F(psi)``, ``psi' = R(psi)``, ``phi(0) = 0``, ``psi(0) = u``.

    The grid is uniform with spacing at most ``step`` (default ``1e-3 * horizon``).
    Raises :class:`RiccatiDivergenceError` when ``|psi|`` exceeds ``1e8``.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    step = 1e-3 * horizon if step is None else step
    if not step > 0:
        raise ValueError("step must be positive")
    steps = max(1, int(math.ceil(horizon / step - 1e-9)))
    with np.errstate(over="raise", invalid="raise"):
        phi, psi = _rk4(driver, np.asarray(float(u)), horizon, steps)
    grid = np.linspace(0.0, horizon, steps + 1)
    F, R = riccati_rhs(driver, psi)
    return RiccatiSolution(float(u), grid, phi, psi, np.asarray(F), np.asarray(R))


def richardson_error(driver: AffineDriverSpec, u: float, horizon: float, step: float) -> tuple[float, float]:
    """Error estimate ``|y_h - y_{h/2}| / 15`` for ``(phi, psi)`` at the horizon."""
    coarse = riccati_solve(driver, u, horizon, step)
    fine = riccati_solve(driver, u, horizon, step / 2)
    return abs(coarse.phi[-1] - fine.phi[-1]) / 15.0, abs(coarse.psi[-1] - fine.psi[-1]) / 15.0


def mgf(driver: AffineDriverSpec, u: float, t: float, x: float, step: float | None = None) -> float:
    """``E_x[exp(u X_t)] = exp(phi(t, u) + psi(t, u) x)``."""
    if x < 0:
        raise ValueError("state must lie in R_+")
    if t == 0:
        return math.exp(u * x)
    sol = riccati_solve(driver, u, t, step)
    return math.exp(sol.phi[-1] + sol.psi[-1] * x)


# ---------------------------------------------------------------------------
# Affine LIBOR model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AffineModelSpec:
    """Parameters ``u_k`` and their Riccati flows on ``[0, T_N]``.

    ``theta^k(t) = phi(T_N - t, u_k)`` and ``vartheta^k(t) = psi(T_N - t, u_k)``.
    ``calibrated`` records that the ``u_k`` came from :func:`calibrate_u`.
    """

    driver: AffineDriverSpec
    u: tuple
    horizon: float
    step: float | None = None
    calibrated: bool = False
    solutions: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "u", tuple(float(v) for v in self.u))
        # a calibrated curve with falling forward prices may need any sign or order;
        # positivity_check then reports the lost ordering instead
        for k, v in enumerate(() if self.calibrated else self.u, start=1):
            if v < 0:
                raise InvariantError(f"u_{k}={v!r} is negative")
            if k > 1 and v > self.u[k - 2]:
                raise InvariantError(f"u_{k}={v!r} exceeds u_{k - 1}={self.u[k - 2]!r} (need u_1 >= u_2 >= ...)")
        if self.solutions is None:
            sols = tuple(riccati_solve(self.driver, uk, self.horizon, self.step) for uk in self.u)
            object.__setattr__(self, "solutions", sols)

    def _sol(self, k: int) -> RiccatiSolution:
        if not 1 <= k <= len(self.u):
            raise IndexError(f"rate index k={k} outside 1..{len(self.u)}")
        return self.solutions[k - 1]

    def theta(self, k: int, t: float) -> float:
        return self._sol(k).phi_at(self.horizon - t)

    def vartheta(self, k: int, t: float) -> float:
        return self._sol(k).psi_at(self.horizon - t)

    def functional(self, k: int) -> AffineFunctional:
        sol = self._sol(k)
        T = self.horizon
        bound = max(float(np.abs(sol.psi).max()) * (1 + 1e-9), 1e-300)
        return AffineFunctional(
            intercept=lambda t: sol.phi_at(T - t),
            slope=lambda t: np.array([sol.psi_at(T - t)]),
            intercept_rate=lambda t: -sol.phi_rate(T - t),
            slope_rate=lambda t: np.array([-sol.psi_rate(T - t)]),
            lipschitz_bound=bound,
            dimension=1,
        )


def affine_forward_price(model: AffineModelSpec, k: int, t: float, x: float) -> float:
    """``F(t, T_k, T_N) = exp(theta^k(t) + vartheta^k(t) x)`` for ``t`` in ``[0, T_N]``."""
    if not -1e-12 <= t <= model.horizon + 1e-12:
        raise ValueError(f"time {t} outside [0, {model.horizon}]")
    return math.exp(model.theta(k, t) + model.vartheta(k, t) * x)


def affine_ode_residual(model: AffineModelSpec, k: int, t: float) -> tuple[float, float]:
    """Centered-difference residuals of ``theta' = -F(vartheta)``, ``vartheta' = -R(vartheta)``.

    ``t`` must be an interior point of the stored Riccati grid (in calendar time).
    """
    sol = model._sol(k)
    tau = model.horizon - t
    h = sol.step
    m = int(round(tau / h))
    if abs(m * h - tau) > 1e-9 * max(1.0, model.horizon) or not 1 <= m <= sol.grid.size - 2:
        raise ValueError(f"t={t} is not an interior grid point")
    theta_rate = -(sol.phi[m + 1] - sol.phi[m - 1]) / (2 * h)
    vartheta_rate = -(sol.psi[m + 1] - sol.psi[m - 1]) / (2 * h)
    F, R = riccati_rhs(model.driver, sol.psi[m])
    return float(theta_rate + F), float(vartheta_rate + R)


def _log_mgf(driver, u, T, x0, step):
    sol = riccati_solve(driver, u, T, step)
    return sol.phi[-1] + sol.psi[-1] * x0


def _solve_for(driver: AffineDriverSpec, target: float, T: float, step: float | None) -> float:
    x0 = driver.initial_state
    goal = math.log(target)
    if goal == 0:
        return 0.0

    def finite(u):
        try:
            return _log_mgf(driver, u, T, x0, step)
        except (RiccatiDivergenceError, RiccatiRangeError):
            return None

    direction = 1.0 if goal > 0 else -1.0
    inner, inner_val = 0.0, 0.0
    outer = direction
    for _ in range(60):
        val = finite(outer)
        if val is None:
            # shrink towards the blow-up boundary of the finite-moment region
            lo, hi = inner, outer
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                v = finite(mid)
                if v is None:
                    hi = mid
                else:
                    lo, inner_val = mid, v
                    if (v - goal) * direction >= 0:
                        outer = mid
                        break
            else:
                raise CalibrationError(
                    f"target {target} above attainable forward prices (sup ~ {math.exp(inner_val):.12g})")
            if (inner_val - goal) * direction >= 0:
                break
            inner = lo
            continue
        if (val - goal) * direction >= 0:
            break
        inner, inner_val = outer, val
        outer *= 2.0
    else:
        raise CalibrationError(f"target {target} not attainable (last value {math.exp(inner_val):.12g})")
    lo, hi = sorted((inner, outer))
    u = brentq(lambda v: _log_mgf(driver, v, T, x0, step) - goal, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
    return float(u)


def calibrate_u(driver: AffineDriverSpec, curve: InitialCurve, tenor: TenorStructure,
                step: float | None = None) -> list[float]:
    """``u_k`` with ``E[exp(u_k X_{T_N})] = F(0, T_k, T_N)`` from ``X_0 = x_0``.

    The moment generating function is strictly increasing in ``u``; roots are
    bracketed by doubling and refined with Brent's method.
    """
    T = tenor.horizon
    return [_solve_for(driver, curve.forward_price(k, tenor.N), T, step) for k in tenor.K_bar]


def build_affine_model(curve: InitialCurve, driver: AffineDriverSpec, u=None,
                       step: float | None = None) -> ModelSpec:
    """Affine LIBOR model; ``u=None`` calibrates the ``u_k`` to ``curve``."""
    tenor = curve.tenor
    calibrated = u is None
    if calibrated:
        u = calibrate_u(driver, curve, tenor, step)
    if len(u) != tenor.N - 1:
        raise InvariantError(f"need {tenor.N - 1} parameters u_k, got {len(u)}")
    model = AffineModelSpec(driver, tuple(u), tenor.horizon, step, calibrated)
    funcs = tuple(model.functional(k) for k in tenor.K_bar)
    return ModelSpec(tenor, driver, "affine", funcs, curve, np.array([driver.initial_state]), affine=model)
