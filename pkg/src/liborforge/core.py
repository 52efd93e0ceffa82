"""Domain vocabulary: tenors, characteristics, forward functionals and curves.

Conventions used throughout the package:

* Tenor dates ``T_0 = 0 < T_1 < ... < T_N`` are year fractions. Tenor indices
  are 1-based as in the usual LIBOR notation, so ``k`` runs over
  ``K = {1, ..., N}`` and rates exist for ``K_bar = {1, ..., N-1}``.
* Jump measures are finite lists of atoms, so every jump integral is an exact
  finite sum.
* Characteristics use the identity truncation ``h(x) = x`` unless stated
  otherwise.
* States are arrays whose last axis is the driver dimension; evaluators
  broadcast over any leading axes.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

DATE_TOL = 1e-12


class InvariantError(ValueError):
    """A domain object was constructed with inconsistent data."""


class ContractError(ValueError):
    """An operation was called outside its contract (e.g. wrong truncation)."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Tenor structure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TenorStructure:
    """Discrete tenor ``0 = T_0 < T_1 < ... < T_N``.

    ``accruals[k-1]`` holds ``delta_k = T_k - T_{k-1}``. If ``accruals`` is
    passed explicitly it must agree with the date differences to 1e-12.
    """

    dates: np.ndarray
    accruals: np.ndarray = None

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype=float)
        if dates.ndim != 1 or dates.size < 2:
            raise InvariantError("tenor needs at least two dates (T_0 and T_N)")
        if abs(dates[0]) > DATE_TOL:
            raise InvariantError(f"tenor must start at T_0 = 0, got {float(dates[0])!r}")
        diffs = np.diff(dates)
        for k, d in enumerate(diffs, start=1):
            if not d > 0:
                raise InvariantError(f"tenor dates not strictly increasing at k={k}")
        if self.accruals is not None:
            acc = np.asarray(self.accruals, dtype=float)
            if acc.shape != diffs.shape:
                raise InvariantError("accruals must have one entry per tenor interval")
            for k, (a, d) in enumerate(zip(acc, diffs), start=1):
                if not a > 0:
                    raise InvariantError(f"accrual delta_{k} must be positive")
                if abs(a - d) > DATE_TOL:
                    raise InvariantError(
                        f"accrual delta_{k}={float(a)!r} does not match T_{k}-T_{k-1}={float(d)!r}"
                    )
        object.__setattr__(self, "dates", _frozen(dates))
        object.__setattr__(self, "accruals", _frozen(diffs))

    @property
    def N(self) -> int:
        return self.dates.size - 1

    @property
    def K(self) -> range:
        return range(1, self.N + 1)

    @property
    def K_bar(self) -> range:
        return range(1, self.N)

    @property
    def horizon(self) -> float:
        return float(self.dates[-1])

    def date(self, k: int) -> float:
        self.check_index(k, allow_zero=True)
        return float(self.dates[k])

    def accrual(self, k: int) -> float:
        """``delta_k = T_k - T_{k-1}``."""
        self.check_index(k)
        return float(self.accruals[k - 1])

    def period(self, k: int) -> float:
        """Accrual period ``T_{k+1} - T_k`` of the rate ``L(., T_k)``."""
        if k not in self.K_bar:
            raise IndexError(f"rate index k={k} outside 1..{self.N - 1}")
        return float(self.accruals[k])

    def check_index(self, k: int, *, allow_zero: bool = False) -> None:
        lo = 0 if allow_zero else 1
        if not (isinstance(k, (int, np.integer)) and lo <= k <= self.N):
            raise IndexError(f"tenor index k={k!r} outside {lo}..{self.N}")

    @classmethod
    def uniform(cls, n: int, accrual: float) -> "TenorStructure":
        return cls(np.arange(n + 1) * accrual)


# ---------------------------------------------------------------------------
# Characteristics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AtomicJumpMeasure:
    """Finite jump measure ``sum_i intensity_i * delta_{size_i}``.

    ``sizes`` has shape ``(m, d)``, ``intensities`` shape ``(m,)`` (per year).
    """

    sizes: np.ndarray
    intensities: np.ndarray

    def __post_init__(self):
        sizes = np.asarray(self.sizes, dtype=float)
        lam = np.asarray(self.intensities, dtype=float).reshape(-1)
        if sizes.ndim == 1:
            # a flat list is read as m one-dimensional atoms
            sizes = sizes.reshape(-1, 1)
        if sizes.ndim != 2 or sizes.shape[0] != lam.size:
            raise InvariantError("jump sizes must be an (m, d) array matching m intensities")
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise InvariantError("jump intensities must be finite and non-negative")
        if not np.all(np.isfinite(sizes)):
            raise InvariantError("jump sizes must be finite")
        for i, s in enumerate(sizes):
            if not np.any(s != 0):
                raise InvariantError(f"atom {i} sits at the zero vector")
        object.__setattr__(self, "sizes", _frozen(sizes))
        object.__setattr__(self, "intensities", _frozen(lam))

    @classmethod
    def empty(cls, dimension: int) -> "AtomicJumpMeasure":
        return cls(np.zeros((0, dimension)), np.zeros(0))

    @property
    def dimension(self) -> int:
        return self.sizes.shape[1]

    @property
    def size(self) -> int:
        return self.intensities.size

    @property
    def total_intensity(self) -> float:
        return float(self.intensities.sum())

    def pushforward(self, matrix: np.ndarray) -> "AtomicJumpMeasure":
        """Image measure under ``y -> matrix @ y``; atoms mapped to 0 are dropped."""
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        mapped = self.sizes @ matrix.T
        keep = np.any(mapped != 0, axis=1)
        return AtomicJumpMeasure(mapped[keep], self.intensities[keep])


@dataclass(frozen=True)
class Triplet:
    """Characteristics ``(b, c, F)`` evaluated at one ``(t, x)``, identity truncation."""

    drift: np.ndarray
    diffusion: np.ndarray
    sizes: np.ndarray
    intensities: np.ndarray

    @property
    def dimension(self) -> int:
        return self.drift.size


@dataclass(frozen=True)
class Segment:
    t_start: float
    t_end: float
    drift: np.ndarray
    diffusion: np.ndarray
    jumps: AtomicJumpMeasure


TRUNCATIONS = ("identity", "bounded")


def truncate(x: np.ndarray) -> np.ndarray:
    """Bounded truncation ``h(x) = x * min(1, 1/|x|)`` (equals ``1 ^ x`` for x > 0)."""
    x = np.asarray(x, dtype=float)
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    return x * np.minimum(1.0, 1.0 / np.where(norm > 0, norm, 1.0))


@dataclass(frozen=True)
class LocalCharacteristics:
    """Piecewise-constant local characteristics of a ``d``-dimensional driver.

    Segments are half-open ``[t_start, t_end)`` and must tile ``[0, horizon]``
    without gaps; the last segment is closed on the right.
    """

    dimension: int
    segments: tuple
    truncation: str = "identity"

    def __post_init__(self):
        d = int(self.dimension)
        if d < 1:
            raise InvariantError("driver dimension must be positive")
        if self.truncation not in TRUNCATIONS:
            raise InvariantError(f"unknown truncation {self.truncation!r}")
        segs = []
        prev_end = 0.0
        for i, seg in enumerate(self.segments):
            if isinstance(seg, Segment):
                s = seg
            else:
                t0, t1, b, c, jumps = seg
                s = Segment(float(t0), float(t1), b, c, jumps)
            b = _frozen(np.asarray(s.drift, dtype=float).reshape(d))
            c = _frozen(np.asarray(s.diffusion, dtype=float).reshape(d, d))
            if abs(s.t_start - prev_end) > DATE_TOL:
                raise InvariantError(f"segment {i} starts at {s.t_start}, expected {prev_end}")
            if not s.t_end > s.t_start:
                raise InvariantError(f"segment {i} has non-positive length")
            if not np.allclose(c, c.T, atol=1e-14, rtol=0):
                raise InvariantError(f"segment {i} diffusion matrix is not symmetric")
            if np.linalg.eigvalsh(c).min() < -1e-12:
                raise InvariantError(f"segment {i} diffusion matrix is not positive semidefinite")
            jumps = s.jumps if s.jumps is not None else AtomicJumpMeasure.empty(d)
            if jumps.size and jumps.dimension != d:
                raise InvariantError(f"segment {i} jump atoms have wrong dimension")
            if not jumps.size:
                jumps = AtomicJumpMeasure.empty(d)
            segs.append(Segment(float(s.t_start), float(s.t_end), b, c, jumps))
            prev_end = s.t_end
        if not segs:
            raise InvariantError("characteristics need at least one segment")
        object.__setattr__(self, "dimension", d)
        object.__setattr__(self, "segments", tuple(segs))

    @classmethod
    def constant(cls, horizon, drift=None, diffusion=None, jumps=None, dimension=None,
                 truncation="identity") -> "LocalCharacteristics":
        if dimension is None:
            for obj in (drift, diffusion):
                if obj is not None:
                    dimension = np.atleast_1d(np.asarray(obj, dtype=float)).shape[0]
                    break
            else:
                dimension = jumps.dimension if jumps is not None else 1
        d = dimension
        b = np.zeros(d) if drift is None else np.asarray(drift, dtype=float)
        c = np.zeros((d, d)) if diffusion is None else np.asarray(diffusion, dtype=float)
        return cls(d, (Segment(0.0, float(horizon), b, c, jumps),), truncation)

    @property
    def horizon(self) -> float:
        return self.segments[-1].t_end

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([s.t_start for s in self.segments] + [self.horizon])

    def segment_index(self, t: float) -> int:
        if t < -DATE_TOL or t > self.horizon + DATE_TOL:
            raise ValueError(f"time {t} outside [0, {self.horizon}]")
        starts = [s.t_start for s in self.segments]
        return max(0, min(int(np.searchsorted(starts, t, side="right")) - 1, len(self.segments) - 1))

    def segment_at(self, t: float) -> Segment:
        return self.segments[self.segment_index(t)]

    def characteristics_at(self, t: float, x_state=None) -> Triplet:
        """Triplet at time ``t`` in identity truncation (the state is ignored)."""
        seg = self.segment_at(t)
        b = seg.drift
        if self.truncation == "bounded" and seg.jumps.size:
            shift = ((seg.jumps.sizes - truncate(seg.jumps.sizes)) * seg.jumps.intensities[:, None]).sum(axis=0)
            b = b + shift
        return Triplet(b, seg.diffusion, seg.jumps.sizes, seg.jumps.intensities)

    def to_identity(self) -> "LocalCharacteristics":
        """Same driver re-expressed with ``h(x) = x`` (shifts the drift)."""
        if self.truncation == "identity":
            return self
        segs = []
        for s in self.segments:
            trip = self.characteristics_at(s.t_start)
            segs.append(Segment(s.t_start, s.t_end, trip.drift, s.diffusion, s.jumps))
        return LocalCharacteristics(self.dimension, tuple(segs), "identity")


# ---------------------------------------------------------------------------
# Forward functionals
# ---------------------------------------------------------------------------


class ForwardFunctional(ABC):
    """A ``C^{1,2}`` function ``f(t, x)`` with derivatives and a Lipschitz bound.

    Evaluators take a scalar time and states of shape ``(..., d)``.
    """

    kind: str = "custom"
    dimension: int
    lipschitz_bound: float

    @abstractmethod
    def value(self, t, x): ...

    @abstractmethod
    def time_derivative(self, t, x): ...

    @abstractmethod
    def gradient(self, t, x): ...

    @abstractmethod
    def hessian(self, t, x): ...

    def increment(self, t, x, jump):
        """``f(t, x + jump) - f(t, x)``; subclasses override with stable forms."""
        x = np.asarray(x, dtype=float)
        return self.value(t, x + np.asarray(jump, dtype=float)) - self.value(t, x)

    @property
    def is_affine(self) -> bool:
        return self.kind == "affine"

    def __call__(self, t, x):
        return self.value(t, x)

    def __sub__(self, other: "ForwardFunctional") -> "ForwardFunctional":
        return LinearCombination((self, other), (1.0, -1.0))

    def __add__(self, other: "ForwardFunctional") -> "ForwardFunctional":
        return LinearCombination((self, other), (1.0, 1.0))

    def __neg__(self) -> "ForwardFunctional":
        return LinearCombination((self,), (-1.0,))


def _as_fn(v):
    return v if callable(v) else (lambda t, _v=v: _v)


@dataclass(frozen=True, eq=False)
class AffineFunctional(ForwardFunctional):
    """``f(t, x) = intercept(t) + <slope(t), x>``.

    ``intercept`` and ``slope`` may be constants or callables of ``t``; callables
    need their time derivatives ``intercept_rate`` / ``slope_rate``.
    """

    intercept: float | Callable = 0.0
    slope: Sequence[float] | Callable = (0.0,)
    intercept_rate: float | Callable | None = None
    slope_rate: Sequence[float] | Callable | None = None
    lipschitz_bound: float | None = None
    dimension: int | None = None
    kind: str = field(default="affine", init=False)

    def __post_init__(self):
        if callable(self.intercept) and self.intercept_rate is None:
            raise InvariantError("time-dependent intercept needs intercept_rate")
        if callable(self.slope) and self.slope_rate is None:
            raise InvariantError("time-dependent slope needs slope_rate")
        if not callable(self.slope):
            object.__setattr__(self, "slope", _frozen(np.atleast_1d(np.asarray(self.slope, dtype=float))))
        if self.dimension is None:
            if callable(self.slope):
                raise InvariantError("dimension required for a time-dependent slope")
            object.__setattr__(self, "dimension", self.slope.size)
        if self.lipschitz_bound is None:
            if callable(self.slope):
                raise InvariantError("lipschitz_bound required for a time-dependent slope")
            object.__setattr__(self, "lipschitz_bound", max(float(np.linalg.norm(self.slope)), 1e-300))
        if not self.lipschitz_bound > 0:
            raise InvariantError("Lipschitz bound must be positive")

    def _slope(self, t):
        return np.atleast_1d(np.asarray(_as_fn(self.slope)(t), dtype=float))

    def _lead(self, x):
        return np.asarray(x, dtype=float).shape[:-1]

    def value(self, t, x):
        x = np.asarray(x, dtype=float)
        return float(_as_fn(self.intercept)(t)) + x @ self._slope(t)

    def time_derivative(self, t, x):
        a = 0.0 if self.intercept_rate is None else float(_as_fn(self.intercept_rate)(t))
        if self.slope_rate is None:
            return np.full(self._lead(x), a)[()] if self._lead(x) else a
        x = np.asarray(x, dtype=float)
        return a + x @ np.atleast_1d(np.asarray(_as_fn(self.slope_rate)(t), dtype=float))

    def gradient(self, t, x):
        return np.broadcast_to(self._slope(t), self._lead(x) + (self.dimension,)).copy()

    def hessian(self, t, x):
        return np.zeros(self._lead(x) + (self.dimension, self.dimension))

    def increment(self, t, x, jump):
        # exact: no cancellation between f(x + y) and f(x)
        inc = np.asarray(jump, dtype=float) @ self._slope(t)
        return np.broadcast_to(inc, np.broadcast_shapes(self._lead(x), np.shape(inc))).copy()[()]


@dataclass(frozen=True, eq=False)
class LogOnePlusExpFunctional(ForwardFunctional):
    """``f(t, x) = log(1 + accrual * initial_rate * exp(x[index]))``.

    The LIBOR market model functional; ``index`` is 0-based.
    """

    accrual: float
    initial_rate: float
    index: int
    dimension: int
    lipschitz_bound: float = 1.0
    kind: str = field(default="log-one-plus-exp", init=False)

    def __post_init__(self):
        if not self.accrual > 0:
            raise InvariantError("accrual must be positive")
        if self.initial_rate < 0:
            raise InvariantError("initial rate must be non-negative for log(1 + a e^x)")
        if not 0 <= self.index < self.dimension:
            raise InvariantError(f"coordinate index {self.index} outside dimension {self.dimension}")

    @property
    def scale(self) -> float:
        return self.accrual * self.initial_rate

    def ell(self, xk):
        """``a e^x / (1 + a e^x)``, the partial derivative in the active coordinate."""
        xk = np.asarray(xk, dtype=float)
        if self.scale == 0:
            return np.zeros_like(xk)[()]
        return expit(math.log(self.scale) + xk)[()]

    def value(self, t, x):
        xk = np.asarray(x, dtype=float)[..., self.index]
        if self.scale == 0:
            return np.zeros_like(xk)[()]
        return np.logaddexp(0.0, math.log(self.scale) + xk)[()]

    def time_derivative(self, t, x):
        return np.zeros(np.asarray(x, dtype=float).shape[:-1])[()]

    def gradient(self, t, x):
        x = np.asarray(x, dtype=float)
        g = np.zeros(x.shape)
        g[..., self.index] = self.ell(x[..., self.index])
        return g

    def hessian(self, t, x):
        x = np.asarray(x, dtype=float)
        h = np.zeros(x.shape + (self.dimension,))
        ell = self.ell(x[..., self.index])
        h[..., self.index, self.index] = ell * (1.0 - ell)
        return h

    def increment(self, t, x, jump):
        # log((1 + a e^{x+y}) / (1 + a e^x)) = log1p(ell(x) * (e^y - 1))
        x = np.asarray(x, dtype=float)
        y = np.asarray(jump, dtype=float)[..., self.index]
        return np.log1p(self.ell(x[..., self.index]) * np.expm1(y))[()]


@dataclass(frozen=True, eq=False)
class CustomFunctional(ForwardFunctional):
    """User-supplied evaluators; the Lipschitz bound is declared and audited."""

    value_fn: Callable
    time_derivative_fn: Callable
    gradient_fn: Callable
    hessian_fn: Callable
    lipschitz_bound: float
    dimension: int
    kind: str = field(default="custom", init=False)

    def value(self, t, x):
        return self.value_fn(t, np.asarray(x, dtype=float))

    def time_derivative(self, t, x):
        return self.time_derivative_fn(t, np.asarray(x, dtype=float))

    def gradient(self, t, x):
        return self.gradient_fn(t, np.asarray(x, dtype=float))

    def hessian(self, t, x):
        return self.hessian_fn(t, np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class LinearCombination(ForwardFunctional):
    """``sum_i w_i f_i``; affine when every term is affine."""

    terms: tuple
    weights: tuple
    lipschitz_bound: float | None = None

    def __post_init__(self):
        if len(self.terms) != len(self.weights):
            raise InvariantError("one weight per term required")
        dims = {f.dimension for f in self.terms}
        if len(dims) > 1:
            raise InvariantError("terms of a combination must share a dimension")
        if self.lipschitz_bound is None:
            bound = sum(abs(w) * f.lipschitz_bound for f, w in zip(self.terms, self.weights))
            object.__setattr__(self, "lipschitz_bound", max(bound, 1e-300))

    @property
    def dimension(self) -> int:
        return self.terms[0].dimension if self.terms else 1

    @property
    def kind(self) -> str:
        return "affine" if all(f.is_affine for f in self.terms) else "custom"

    def _combine(self, method, *args):
        out = 0.0
        for f, w in zip(self.terms, self.weights):
            out = out + w * getattr(f, method)(*args)
        return out

    def value(self, t, x):
        return self._combine("value", t, x)

    def time_derivative(self, t, x):
        return self._combine("time_derivative", t, x)

    def gradient(self, t, x):
        return self._combine("gradient", t, x)

    def hessian(self, t, x):
        return self._combine("hessian", t, x)

    def increment(self, t, x, jump):
        return self._combine("increment", t, x, jump)


def zero_functional(dimension: int) -> AffineFunctional:
    return AffineFunctional(0.0, np.zeros(dimension), lipschitz_bound=1e-300)


def f_from_g(g_list: Sequence[ForwardFunctional]) -> list[ForwardFunctional]:
    """Backward functionals ``f^k = g^k - g^{k+1}`` with ``g^N = 0``.

    Lipschitz bounds add: ``K^k = K~^k + K~^{k+1}``.
    """
    g = list(g_list)
    if not g:
        raise InvariantError("need at least one functional")
    out = []
    for i, gk in enumerate(g):
        if i + 1 < len(g):
            nxt = g[i + 1]
            out.append(LinearCombination((gk, nxt), (1.0, -1.0),
                                         lipschitz_bound=gk.lipschitz_bound + nxt.lipschitz_bound))
        else:
            out.append(LinearCombination((gk,), (1.0,), lipschitz_bound=gk.lipschitz_bound))
    return out


def g_from_f(f_list: Sequence[ForwardFunctional]) -> list[ForwardFunctional]:
    """Terminal functionals ``g^k = sum_{j >= k} f^j`` with bound ``sum_{j >= k} K^j``."""
    f = list(f_list)
    if not f:
        raise InvariantError("need at least one functional")
    out = []
    for i in range(len(f)):
        tail = tuple(f[i:])
        out.append(LinearCombination(tail, (1.0,) * len(tail),
                                     lipschitz_bound=sum(fj.lipschitz_bound for fj in tail)))
    return out


# ---------------------------------------------------------------------------
# Curves and conversions
# ---------------------------------------------------------------------------


def libor_from_forward_price(fp: float, accrual: float) -> float:
    """``L = (F - 1) / delta`` for ``F = F(t, T_k, T_{k+1})``."""
    if not fp > 0:
        raise ValueError(f"forward price must be positive, got {fp!r}")
    if not accrual > 0:
        raise ValueError(f"accrual must be positive, got {accrual!r}")
    return (fp - 1.0) / accrual


def forward_price_from_libor(rate: float, accrual: float) -> float:
    if not accrual > 0:
        raise ValueError(f"accrual must be positive, got {accrual!r}")
    return 1.0 + accrual * rate


@dataclass(frozen=True)
class InitialCurve:
    """Zero-coupon prices ``B(0, T_k)`` for ``k = 1..N``."""

    tenor: TenorStructure
    bond_prices: np.ndarray

    def __post_init__(self):
        prices = np.asarray(self.bond_prices, dtype=float).reshape(-1)
        if prices.size != self.tenor.N:
            raise InvariantError(f"need {self.tenor.N} bond prices, got {prices.size}")
        for k, p in enumerate(prices, start=1):
            if not (p > 0 and np.isfinite(p)):
                raise InvariantError(f"bond price B(0,T_{k}) must be positive, got {p!r}")
        object.__setattr__(self, "bond_prices", _frozen(prices))

    @classmethod
    def from_map(cls, tenor: TenorStructure, prices: dict) -> "InitialCurve":
        """Build from ``{T_k: B(0, T_k)}``; dates must match the tenor to 1e-12."""
        out = []
        for k in tenor.K:
            Tk = tenor.date(k)
            match = [p for d, p in prices.items() if abs(float(d) - Tk) <= DATE_TOL]
            if len(match) != 1:
                raise InvariantError(f"no unique bond price for T_{k}={Tk}")
            out.append(match[0])
        return cls(tenor, out)

    @classmethod
    def from_rates(cls, tenor: TenorStructure, first_price: float, rates) -> "InitialCurve":
        """Curve with ``B(0,T_1) = first_price`` and forward rates ``L(0, T_k)``."""
        prices = [first_price]
        for k, r in zip(tenor.K_bar, rates):
            prices.append(prices[-1] / (1.0 + tenor.period(k) * r))
        return cls(tenor, prices)

    def bond_price(self, k: int) -> float:
        self.tenor.check_index(k)
        return float(self.bond_prices[k - 1])

    def forward_price(self, k: int, n: int) -> float:
        return forward_price_from_curve(self, k, n)

    def libor(self, k: int) -> float:
        return libor_from_forward_price(self.forward_price(k, k + 1), self.tenor.period(k))


def forward_price_from_curve(curve: InitialCurve, k: int, n: int) -> float:
    """``F(0, T_k, T_n) = B(0, T_k) / B(0, T_n)``."""
    curve.tenor.check_index(k)
    curve.tenor.check_index(n)
    if k == n:
        return 1.0
    return float(curve.bond_prices[k - 1] / curve.bond_prices[n - 1])


# ---------------------------------------------------------------------------
# Model specification
# ---------------------------------------------------------------------------

FAMILIES = ("lmm", "fpm", "affine")


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A complete model: tenor, driver under ``P_N``, family and functionals.

    ``functionals`` are the backward ``f^k`` for ``family == "lmm"`` and the
    terminal ``g^k`` otherwise. The family blocks (``lmm``, ``fpm``,
    ``affine``) carry the data the closed-form drifts need. ``zero_drift``
    deliberately replaces the driver drift with 0 (a sabotage switch for
    testing the martingale checks).
    """

    tenor: TenorStructure
    driver: object
    family: str
    functionals: tuple
    initial_curve: InitialCurve
    initial_state: np.ndarray = None
    lmm: object = None
    fpm: object = None
    affine: object = None
    zero_drift: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvariantError(f"unknown family {self.family!r}")
        funcs = tuple(self.functionals)
        if len(funcs) != self.tenor.N - 1:
            raise InvariantError(f"need {self.tenor.N - 1} functionals, got {len(funcs)}")
        d = self.driver.dimension
        for k, f in enumerate(funcs, start=1):
            if f.dimension != d:
                raise InvariantError(f"functional {k} has dimension {f.dimension}, driver has {d}")
        if getattr(self.driver, "truncation", "identity") != "identity":
            object.__setattr__(self, "driver", self.driver.to_identity())
        horizon = getattr(self.driver, "horizon", None)
        if horizon is not None and horizon < self.tenor.horizon - DATE_TOL:
            raise InvariantError("driver characteristics do not cover [0, T_N]")
        if self.initial_curve.tenor.N != self.tenor.N or not np.allclose(
                self.initial_curve.tenor.dates, self.tenor.dates, rtol=0, atol=DATE_TOL):
            raise InvariantError("initial curve tenor differs from model tenor")
        x0 = np.zeros(d) if self.initial_state is None else np.asarray(self.initial_state, dtype=float).reshape(d)
        object.__setattr__(self, "functionals", funcs)
        object.__setattr__(self, "initial_state", _frozen(x0))

    @property
    def N(self) -> int:
        return self.tenor.N

    @property
    def dimension(self) -> int:
        return self.driver.dimension

    def check_rate_index(self, k: int) -> None:
        if not (isinstance(k, (int, np.integer)) and 1 <= k <= self.N - 1):
            raise IndexError(f"rate index k={k!r} outside 1..{self.N - 1}")

    def backward_functionals(self) -> list[ForwardFunctional]:
        """``f^k`` for ``k = 1..N-1`` (converted from ``g^k`` when needed)."""
        if self.family == "lmm":
            return list(self.functionals)
        cached = self.__dict__.get("_f_cache")
        if cached is None:
            cached = f_from_g(self.functionals)
            object.__setattr__(self, "_f_cache", cached)
        return list(cached)

    def terminal_functionals(self) -> list[ForwardFunctional]:
        """``g^k`` for ``k = 1..N-1`` (summed from ``f^j`` when needed)."""
        if self.family != "lmm":
            return list(self.functionals)
        cached = self.__dict__.get("_g_cache")
        if cached is None:
            cached = g_from_f(self.functionals)
            object.__setattr__(self, "_g_cache", cached)
        return list(cached)

    def characteristics_at(self, t: float, x_state) -> Triplet:
        """``P_N``-triplet of the driver at ``(t, x_state)``, identity truncation."""
        x = np.asarray(x_state, dtype=float).reshape(self.dimension)
        trip = self.driver.characteristics_at(t, x)
        if self.family == "lmm" and self.lmm is not None:
            trip = Triplet(self.lmm.drift_vector(t, x), trip.diffusion, trip.sizes, trip.intensities)
        if self.zero_drift:
            trip = Triplet(np.zeros(self.dimension), trip.diffusion, trip.sizes, trip.intensities)
        return trip

    def with_zero_drift(self, flag: bool = True) -> "ModelSpec":
        return ModelSpec(self.tenor, self.driver, self.family, self.functionals, self.initial_curve,
                         self.initial_state, self.lmm, self.fpm, self.affine, flag)

    def initial_terminal_price(self, k: int) -> float:
        """Model value ``F(0, T_k, T_N) = exp(g^k(0, x_0))``; 1 for ``k = N``."""
        if k == self.N:
            return 1.0
        self.check_rate_index(k)
        return float(np.exp(self.terminal_functionals()[k - 1].value(0.0, self.initial_state)))


# ---------------------------------------------------------------------------
# Derivative audits
# ---------------------------------------------------------------------------


def finite_difference_check(f: ForwardFunctional, t: float, x, step: float = 1e-5,
                            rtol: float = 1e-6, atol: float = 1e-8) -> dict:
    """Compare analytic derivatives of ``f`` at ``(t, x)`` with central differences.

    The gradient and time derivative are differenced from the value; the
    Hessian is differenced from the analytic gradient. Returns the maximum
    deviations and a pass flag.
    """
    x = np.asarray(x, dtype=float)
    d = x.size
    eye = np.eye(d) * step
    fd_grad = np.array([(f.value(t, x + e) - f.value(t, x - e)) / (2 * step) for e in eye])
    fd_hess = np.array([(f.gradient(t, x + e) - f.gradient(t, x - e)) / (2 * step) for e in eye])
    fd_dt = (f.value(t + step, x) - f.value(t - step, x)) / (2 * step)
    grad = np.asarray(f.gradient(t, x), dtype=float)
    hess = np.asarray(f.hessian(t, x), dtype=float)
    dt = float(f.time_derivative(t, x))
    ok = (np.allclose(grad, fd_grad, rtol=rtol, atol=atol)
          and np.allclose(hess, fd_hess, rtol=rtol, atol=atol)
          and np.isclose(dt, fd_dt, rtol=rtol, atol=atol))
    return {
        "gradient": float(np.max(np.abs(grad - fd_grad))),
        "hessian": float(np.max(np.abs(hess - fd_hess))),
        "time_derivative": abs(dt - fd_dt),
        "passed": bool(ok),
    }


def lipschitz_audit(f: ForwardFunctional, horizon: float, samples: int = 10_000,
                    box: tuple[float, float] = (-5.0, 5.0), seed: int = 0) -> dict:
    """Largest observed ``|f(t,x) - f(t,y)| / |x - y|`` over random pairs in a box."""
    rng = np.random.default_rng(seed)
    lo, hi = box
    ts = rng.uniform(0.0, horizon, samples)
    xs = rng.uniform(lo, hi, (samples, f.dimension))
    ys = rng.uniform(lo, hi, (samples, f.dimension))
    worst = 0.0
    for t, x, y in zip(ts, xs, ys):
        dist = np.linalg.norm(x - y)
        if dist == 0:
            continue
        worst = max(worst, abs(float(f.value(t, x)) - float(f.value(t, y))) / dist)
    return {
        "declared": float(f.lipschitz_bound),
        "observed": worst,
        "box": tuple(box),
        "samples": samples,
        "passed": bool(worst <= f.lipschitz_bound * (1 + 1e-9) + 1e-12),
    }
