"""No-arbitrage drift conditions, closed-form family drifts and model audits.

The generic primitive is the drift *residual*: left minus right side of the
drift condition at one ``(t, x_state)``. Closed-form drifts exist only for the
LIBOR market model and the forward price model, where the condition can be
solved explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .core import (
    AffineFunctional,
    ForwardFunctional,
    InitialCurve,
    InvariantError,
    LocalCharacteristics,
    LogOnePlusExpFunctional,
    ModelSpec,
    Segment,
    TenorStructure,
    Triplet,
    lipschitz_audit,
)
from .measure_change import forward_measure_characteristics, tilt

CLOSED_FORM_TOL = 1e-10
ODE_BACKED_TOL = 1e-8


class DriftConsistencyError(ArithmeticError):
    """Two closed forms of the same drift disagree."""


# ---------------------------------------------------------------------------
# Volatility structures and family blocks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VolatilityStructure:
    """Piecewise-constant volatilities ``lambda(s, T_k)`` for ``k = 1..N-1``.

    ``values[s, k-1]`` is the ``n``-vector on ``[breaks[s], breaks[s+1])``.
    """

    breaks: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        breaks = np.asarray(self.breaks, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 2:
            values = values[:, :, None]
        if breaks.ndim != 1 or values.ndim != 3 or values.shape[0] != breaks.size - 1:
            raise InvariantError("volatility values must have shape (segments, N-1, n)")
        if np.any(np.diff(breaks) <= 0) or abs(breaks[0]) > 1e-12:
            raise InvariantError("volatility breakpoints must start at 0 and increase")
        object.__setattr__(self, "breaks", breaks)
        object.__setattr__(self, "values", values)

    @classmethod
    def flat(cls, tenor: TenorStructure, vols) -> "VolatilityStructure":
        """``lambda(s, T_k) = vols[k-1]`` for ``s < T_k`` and 0 afterwards."""
        vols = np.asarray(vols, dtype=float)
        if vols.ndim == 1:
            vols = vols[:, None]
        if vols.shape[0] != tenor.N - 1:
            raise InvariantError(f"need {tenor.N - 1} volatility vectors, got {vols.shape[0]}")
        values = np.zeros((tenor.N, tenor.N - 1, vols.shape[1]))
        for k in tenor.K_bar:
            values[:k, k - 1] = vols[k - 1]
        return cls(tenor.dates, values)

    @classmethod
    def from_pieces(cls, tenor: TenorStructure, pieces) -> "VolatilityStructure":
        """``pieces[k-1]`` is a list of ``(t_start, t_end, vector)``; gaps are zero."""
        if len(pieces) != tenor.N - 1:
            raise InvariantError(f"need volatility pieces for {tenor.N - 1} tenors")
        pts = {float(t) for t in tenor.dates}
        n = None
        for plist in pieces:
            for t0, t1, v in plist:
                pts.update((float(t0), float(t1)))
                n = np.atleast_1d(v).size
        breaks = np.array(sorted(p for p in pts if 0 <= p <= tenor.horizon))
        values = np.zeros((breaks.size - 1, tenor.N - 1, n or 1))
        mids = 0.5 * (breaks[:-1] + breaks[1:])
        for k, plist in enumerate(pieces):
            for t0, t1, v in plist:
                values[(mids >= t0) & (mids < t1), k] = np.atleast_1d(np.asarray(v, dtype=float))
        return cls(breaks, values)

    @property
    def factors(self) -> int:
        return self.values.shape[2]

    def at(self, t: float) -> np.ndarray:
        s = int(np.searchsorted(self.breaks, t, side="right")) - 1
        if s >= self.values.shape[0]:
            return np.zeros(self.values.shape[1:])
        return self.values[max(s, 0)]


def _merged_breaks(*arrays, horizon: float) -> np.ndarray:
    pts = set()
    for a in arrays:
        pts.update(float(p) for p in a if 0 <= p <= horizon)
    pts.update((0.0, horizon))
    return np.array(sorted(pts))


@dataclass(frozen=True)
class LevyVolatilityData:
    """Shared data of the Levy-driven families.

    ``levy`` is the ``n``-dimensional driver ``L`` with characteristics
    ``(0, c^L, F^L)`` under the terminal measure.
    """

    tenor: TenorStructure
    levy: LocalCharacteristics
    volatility: VolatilityStructure
    bound: float | None = None
    epsilon: float = 0.1

    def __post_init__(self):
        if self.levy.truncation != "identity":
            object.__setattr__(self, "levy", self.levy.to_identity())
        for seg in self.levy.segments:
            if np.any(seg.drift != 0):
                raise InvariantError("the Levy driver must have zero drift (triplet (0, c^L, F^L))")
        if self.levy.dimension != self.volatility.factors:
            raise InvariantError("volatility vectors and Levy driver differ in dimension")
        if self.volatility.values.shape[1] != self.tenor.N - 1:
            raise InvariantError("volatility structure has the wrong number of tenors")
        if not self.epsilon > 0:
            raise InvariantError("epsilon must be positive")
        if self.bound is None:
            total = self.volatility.values.sum(axis=1)
            object.__setattr__(self, "bound", float(max(total.max(), 0.0)))

    def segment_breaks(self) -> np.ndarray:
        return _merged_breaks(self.volatility.breaks, self.levy.breakpoints, horizon=self.tenor.horizon)


@dataclass(frozen=True)
class LmmSpec(LevyVolatilityData):
    """Levy LIBOR market model data; ``initial_rates[k-1] = L(0, T_k)``."""

    initial_rates: np.ndarray = None

    def __post_init__(self):
        super().__post_init__()
        rates = np.asarray(self.initial_rates, dtype=float).reshape(-1)
        if rates.size != self.tenor.N - 1:
            raise InvariantError(f"need {self.tenor.N - 1} initial rates")
        if np.any(rates < 0):
            raise InvariantError("LMM initial rates must be non-negative")
        object.__setattr__(self, "initial_rates", rates)

    @property
    def scales(self) -> np.ndarray:
        periods = np.array([self.tenor.period(k) for k in self.tenor.K_bar])
        return periods * self.initial_rates

    def ell(self, x) -> np.ndarray:
        """``ell^j(x_j)`` for every coordinate, shape ``(..., N-1)``."""
        x = np.asarray(x, dtype=float)
        a = self.scales
        with np.errstate(divide="ignore"):
            return np.where(a > 0, expit(np.log(np.where(a > 0, a, 1.0)) + x), 0.0)

    def drift_vector(self, t: float, x) -> np.ndarray:
        """All ``b(t, T_k)``, ``k = 1..N-1``; broadcasts over leading state axes."""
        x = np.asarray(x, dtype=float)
        lam = self.volatility.at(t)
        seg = self.levy.segment_at(t)
        G = lam @ seg.diffusion @ lam.T
        ell = self.ell(x)
        b = -0.5 * np.diag(G) - ell @ np.triu(G, 1).T
        for y, rate in zip(seg.jumps.sizes, seg.jumps.intensities):
            z = lam @ y
            e = np.expm1(z)
            factors = 1.0 + ell * e
            suffix = np.cumprod(factors[..., ::-1], axis=-1)[..., ::-1]
            later = np.concatenate([suffix[..., 1:], np.ones(suffix.shape[:-1] + (1,))], axis=-1)
            b = b - (e * later - z) * rate
        return b

    def driver(self) -> LocalCharacteristics:
        """Characteristics of ``X = B + Lambda . L`` without the (state-dependent) drift."""
        breaks = self.segment_breaks()
        n_rates = self.tenor.N - 1
        segs = []
        for t0, t1 in zip(breaks[:-1], breaks[1:]):
            lam = self.volatility.at(t0)
            seg = self.levy.segment_at(t0)
            segs.append(Segment(t0, t1, np.zeros(n_rates), lam @ seg.diffusion @ lam.T,
                                seg.jumps.pushforward(lam)))
        return LocalCharacteristics(n_rates, tuple(segs))


@dataclass(frozen=True)
class FpmSpec(LevyVolatilityData):
    """Levy forward price model data; ``initial_forward_prices[k-1] = F(0, T_k, T_N)``."""

    initial_forward_prices: np.ndarray = None

    def __post_init__(self):
        super().__post_init__()
        fp = np.asarray(self.initial_forward_prices, dtype=float).reshape(-1)
        if fp.size != self.tenor.N - 1 or np.any(fp <= 0):
            raise InvariantError(f"need {self.tenor.N - 1} positive initial forward prices")
        object.__setattr__(self, "initial_forward_prices", fp)

    def cumulative(self, t: float) -> np.ndarray:
        """Rows ``Lambda_k(t) = sum_{i >= k} lambda(t, T_i)``."""
        lam = self.volatility.at(t)
        return np.cumsum(lam[::-1], axis=0)[::-1]

    def drift_vector(self, t: float, x=None) -> np.ndarray:
        cum = self.cumulative(t)
        seg = self.levy.segment_at(t)
        b = -0.5 * np.einsum("kn,nm,km->k", cum, seg.diffusion, cum)
        for y, rate in zip(seg.jumps.sizes, seg.jumps.intensities):
            z = cum @ y
            b = b - (np.expm1(z) - z) * rate
        return b

    def driver(self) -> LocalCharacteristics:
        """Characteristics of the stacked ``X^k`` with the no-arbitrage drift."""
        breaks = self.segment_breaks()
        segs = []
        for t0, t1 in zip(breaks[:-1], breaks[1:]):
            cum = self.cumulative(t0)
            seg = self.levy.segment_at(t0)
            segs.append(Segment(t0, t1, self.drift_vector(t0), cum @ seg.diffusion @ cum.T,
                                seg.jumps.pushforward(cum)))
        return LocalCharacteristics(self.tenor.N - 1, tuple(segs))


def build_lmm_model(curve: InitialCurve, levy: LocalCharacteristics, volatility: VolatilityStructure,
                    bound: float | None = None, epsilon: float = 0.1) -> ModelSpec:
    """Levy LIBOR market model with ``f^k(x) = log(1 + delta_k L(0,T_k) e^{x_k})``, ``X_0 = 0``."""
    tenor = curve.tenor
    rates = [curve.libor(k) for k in tenor.K_bar]
    lmm = LmmSpec(tenor, levy, volatility, bound, epsilon, initial_rates=rates)
    m = tenor.N - 1
    funcs = tuple(LogOnePlusExpFunctional(tenor.period(k), rates[k - 1], k - 1, m) for k in tenor.K_bar)
    return ModelSpec(tenor, lmm.driver(), "lmm", funcs, curve, np.zeros(m), lmm=lmm)


def build_fpm_model(curve: InitialCurve, levy: LocalCharacteristics, volatility: VolatilityStructure,
                    bound: float | None = None, epsilon: float = 0.1) -> ModelSpec:
    """Levy forward price model with ``g^k(x) = log F(0,T_k,T_N) + x_k``, ``X_0 = 0``."""
    tenor = curve.tenor
    m = tenor.N - 1
    fp = [curve.forward_price(k, tenor.N) for k in tenor.K_bar]
    fpm = FpmSpec(tenor, levy, volatility, bound, epsilon, initial_forward_prices=fp)
    funcs = tuple(AffineFunctional(float(np.log(fp[k - 1])), np.eye(m)[k - 1]) for k in tenor.K_bar)
    return ModelSpec(tenor, fpm.driver(), "fpm", funcs, curve, np.zeros(m), fpm=fpm)


# ---------------------------------------------------------------------------
# Closed-form drifts
# ---------------------------------------------------------------------------


def _check_k(tenor: TenorStructure, k: int) -> None:
    if not (isinstance(k, (int, np.integer)) and 1 <= k <= tenor.N - 1):
        raise IndexError(f"rate index k={k!r} outside 1..{tenor.N - 1}")


def lmm_drift(spec: LmmSpec, k: int, t: float, x_state) -> float:
    """Drift ``b(t, T_k)`` of ``X^k`` under ``P_N`` in the Levy LIBOR model."""
    _check_k(spec.tenor, k)
    return float(spec.drift_vector(t, np.asarray(x_state, dtype=float))[k - 1])


def fpm_drift(spec: FpmSpec, k: int, t: float) -> float:
    """Deterministic ``P_N``-drift ``b^{k,N}_t`` of ``X^k`` in the forward price model."""
    _check_k(spec.tenor, k)
    return float(spec.drift_vector(t)[k - 1])


def fpm_pairwise_drift(spec: FpmSpec, k: int, t: float, tol: float = 1e-12) -> float:
    """``b^{k,N} - b^{k+1,N}``, cross-checked against the direct expansion in ``lambda_k``."""
    _check_k(spec.tenor, k)
    b = spec.drift_vector(t)
    diff = float(b[k - 1] - (b[k] if k < spec.tenor.N - 1 else 0.0))
    lam = spec.volatility.at(t)
    seg = spec.levy.segment_at(t)
    lk = lam[k - 1]
    rest = lam[k:].sum(axis=0)
    c = seg.diffusion
    direct = -0.5 * lk @ c @ lk - lk @ c @ rest
    for y, rate in zip(seg.jumps.sizes, seg.jumps.intensities):
        direct -= (np.expm1(lk @ y) * np.exp(rest @ y) - lk @ y) * rate
    if abs(diff - direct) > tol * max(1.0, abs(direct)):
        raise DriftConsistencyError(f"pairwise drift mismatch at k={k}, t={t}: {diff} vs {direct}")
    return diff


# ---------------------------------------------------------------------------
# Drift residuals
# ---------------------------------------------------------------------------


def local_martingale_residual(f: ForwardFunctional, trip: Triplet, t: float, x_state) -> float:
    """Residual of the local-martingale condition for ``exp(f(., X))`` given a triplet."""
    x = np.asarray(x_state, dtype=float)
    g = np.asarray(f.gradient(t, x), dtype=float)
    H = np.asarray(f.hessian(t, x), dtype=float)
    c = trip.diffusion
    inc = np.asarray(f.increment(t, x, trip.sizes), dtype=float).reshape(-1)
    jumps = float(((np.expm1(inc) - trip.sizes @ g) * trip.intensities).sum())
    return (float(g @ trip.drift) + float(f.time_derivative(t, x)) + 0.5 * float((H * c).sum())
            + 0.5 * float(g @ c @ g) + jumps)


def drift_residual_backward(spec: ModelSpec, k: int, t: float, x_state, route: str = "direct") -> float:
    """LHS minus RHS of the backward-induction drift condition for ``f^k``.

    ``route="direct"`` uses the ``P_N`` triplet and the product form of the
    condition; ``route="tilt"`` first moves the triplet to ``P_{k+1}`` and
    evaluates the plain local-martingale condition there.
    """
    spec.check_rate_index(k)
    x = np.asarray(x_state, dtype=float)
    fs = spec.backward_functionals()
    f = fs[k - 1]
    if route == "tilt":
        return local_martingale_residual(f, forward_measure_characteristics(spec, k, t, x), t, x)
    if route != "direct":
        raise ValueError(f"unknown route {route!r}")
    trip = spec.characteristics_at(t, x)
    c = trip.diffusion
    g = np.asarray(f.gradient(t, x), dtype=float)
    H = np.asarray(f.hessian(t, x), dtype=float)
    cross = 0.0
    later_inc = np.zeros(trip.intensities.size)
    for fj in fs[k:]:
        cross += float(g @ c @ np.asarray(fj.gradient(t, x), dtype=float))
        later_inc = later_inc + np.asarray(fj.increment(t, x, trip.sizes), dtype=float).reshape(-1)
    inc = np.asarray(f.increment(t, x, trip.sizes), dtype=float).reshape(-1)
    jumps = float(((np.expm1(inc) * np.exp(later_inc) - trip.sizes @ g) * trip.intensities).sum())
    return (float(g @ trip.drift) + float(f.time_derivative(t, x)) + 0.5 * float((H * c).sum())
            + 0.5 * float(g @ c @ g) + cross + jumps)


def drift_residual_terminal(spec: ModelSpec, k: int, t: float, x_state) -> float:
    """LHS minus RHS of the terminal-measure drift condition for ``g^k``."""
    spec.check_rate_index(k)
    x = np.asarray(x_state, dtype=float)
    g = spec.terminal_functionals()[k - 1]
    return local_martingale_residual(g, spec.characteristics_at(t, x), t, x)


def default_box(spec: ModelSpec) -> tuple[float, float]:
    return (0.0, 5.0) if spec.family == "affine" else (-5.0, 5.0)


def residual_tolerance(spec: ModelSpec) -> float:
    return ODE_BACKED_TOL if spec.family == "affine" else CLOSED_FORM_TOL


def residual_sweep(spec: ModelSpec, states: int = 1000, seed: int = 0, box=None) -> dict:
    """Max ``|residual|`` per tenor over random ``(t, x_state)``.

    Backward residuals for the market model, terminal residuals otherwise.
    """
    rng = np.random.default_rng(seed)
    lo, hi = box or default_box(spec)
    out = {}
    for k in range(1, spec.N):
        worst = 0.0
        for _ in range(states):
            t = rng.uniform(0.0, spec.tenor.horizon)
            x = rng.uniform(lo, hi, spec.dimension)
            if spec.family == "lmm":
                r = drift_residual_backward(spec, k, t, x)
            else:
                r = drift_residual_terminal(spec, k, t, x)
            worst = max(worst, abs(r))
        out[k] = worst
    return out


# ---------------------------------------------------------------------------
# Assumption audits
# ---------------------------------------------------------------------------


@dataclass
class CheckRecord:
    name: str
    value: float
    passed: bool
    detail: dict = field(default_factory=dict)


@dataclass
class ValidationReport:
    records: list = field(default_factory=list)

    @property
    def verdict(self) -> bool:
        return all(r.passed for r in self.records)

    def add(self, name, value, passed, **detail) -> None:
        self.records.append(CheckRecord(name, float(value), bool(passed), detail))

    def __getitem__(self, name: str) -> CheckRecord:
        for r in self.records:
            if r.name == name:
                return r
        raise KeyError(name)

    def as_table(self) -> str:
        width = max([len(r.name) for r in self.records] + [5])
        lines = [f"{'check':<{width}}  {'value':>14}  result"]
        for r in self.records:
            lines.append(f"{r.name:<{width}}  {r.value:>14.6g}  {'pass' if r.passed else 'FAIL'}")
        lines.append(f"verdict: {'pass' if self.verdict else 'FAIL'}")
        return "\n".join(lines)


def _time_pieces(spec: ModelSpec) -> np.ndarray:
    bp = getattr(spec.driver, "breakpoints", None)
    T = spec.tenor.horizon
    if bp is None:
        return np.array([0.0, T])
    return _merged_breaks(bp, horizon=T)


def _jump_integrand(sizes: np.ndarray, lam: np.ndarray, K: float) -> float:
    if not lam.size:
        return 0.0
    r = np.linalg.norm(sizes, axis=1)
    with np.errstate(over="ignore"):
        vals = np.where(r <= 1.0, r**2, r * np.exp(K * r))
    return float((vals * lam).sum())


def characteristic_integrals(spec: ModelSpec, K: float, method: str = "exact", steps: int = 10_000,
                             x_ref=None) -> tuple[float, float]:
    """``(int jump moment dt, int ||c_t|| dt)`` over ``[0, T_N]`` along ``x_ref``.

    ``method="exact"`` sums the piecewise-constant segments; ``"riemann"`` is a
    midpoint rule with ``steps`` cells, kept as an independent cross-check.
    """
    x = spec.initial_state if x_ref is None else np.asarray(x_ref, dtype=float)
    T = spec.tenor.horizon

    def rates(t):
        trip = spec.driver.characteristics_at(t, x)
        return _jump_integrand(trip.sizes, trip.intensities, K), float(np.linalg.norm(trip.diffusion, 2))

    if method == "exact":
        pts = _time_pieces(spec)
        jump = diff = 0.0
        for t0, t1 in zip(pts[:-1], pts[1:]):
            j, c = rates(t0)
            jump += j * (t1 - t0)
            diff += c * (t1 - t0)
        return jump, diff
    if method == "riemann":
        h = T / steps
        mids = (np.arange(steps) + 0.5) * h
        vals = np.array([rates(t) for t in mids])
        return float(vals[:, 0].sum() * h), float(vals[:, 1].sum() * h)
    raise ValueError(f"unknown integration method {method!r}")


def validate_assumptions(spec: ModelSpec, samples: int = 10_000, box=None, seed: int = 0) -> ValidationReport:
    """Audit Lipschitz bounds, integrability constants and family conditions.

    Failures become report entries; nothing is raised. Integrals for
    state-dependent drivers are taken along the initial state.
    """
    report = ValidationReport()
    box = box or default_box(spec)
    T = spec.tenor.horizon
    fs = spec.backward_functionals()
    for k, f in enumerate(fs, start=1):
        audit = lipschitz_audit(f, T, samples, box, seed + k)
        report.add(f"LIP f^{k}", audit["observed"], audit["passed"], declared=audit["declared"], box=box)
    if spec.family != "lmm":
        for k, g in enumerate(spec.terminal_functionals(), start=1):
            audit = lipschitz_audit(g, T, samples, box, seed + 100 + k)
            report.add(f"LIP' g^{k}", audit["observed"], audit["passed"], declared=audit["declared"], box=box)

    K = sum(f.lipschitz_bound for f in fs)
    c1, c2 = characteristic_integrals(spec, K)
    report.add("INT jump moment (C1)", c1, np.isfinite(c1), K=K, C1=c1)
    report.add("INT diffusion (C2)", c2, np.isfinite(c2), C2=c2)
    if spec.family != "lmm":
        for k, g in enumerate(spec.terminal_functionals(), start=1):
            ck1, ck2 = characteristic_integrals(spec, g.lipschitz_bound)
            report.add(f"INT' jump moment k={k}", ck1, np.isfinite(ck1), K=g.lipschitz_bound, C1=ck1, C2=ck2)

    block = spec.lmm if spec.family == "lmm" else spec.fpm
    if block is not None:
        _audit_levy_block(report, block)
    if spec.family == "affine" and spec.affine is not None:
        drv = spec.affine.driver
        b = drv.b
        report.add("affine admissibility", b, drv.alpha >= 0 and b >= 0, alpha=drv.alpha, b=b,
                   b_tilde=drv.b_tilde)
    return report


def _audit_levy_block(report: ValidationReport, block: LevyVolatilityData) -> None:
    vol = block.volatility
    tenor = block.tenor
    mids = 0.5 * (vol.breaks[:-1] + vol.breaks[1:])
    support_violation = 0.0
    for k in tenor.K_bar:
        late = mids > tenor.date(k)
        if np.any(late):
            support_violation = max(support_violation, float(np.abs(vol.values[late, k - 1]).max()))
    report.add("VOL support", support_violation, support_violation == 0.0)
    report.add("VOL non-negative", float(vol.values.min()), bool(vol.values.min() >= 0))
    total = float(vol.values.sum(axis=1).max())
    report.add("VOL bound M", total, total <= block.bound * (1 + 1e-12), M=block.bound)
    reach = (1.0 + block.epsilon) * block.bound
    em = 0.0
    for seg in block.levy.segments:
        sizes, lam = seg.jumps.sizes, seg.jumps.intensities
        big = np.linalg.norm(sizes, axis=1) > 1.0 if lam.size else np.zeros(0, bool)
        if np.any(big):
            with np.errstate(over="ignore"):
                em += float((np.exp(reach * np.abs(sizes[big]).sum(axis=1)) * lam[big]).sum()) * (seg.t_end - seg.t_start)
    report.add("EM exponential moment", em, np.isfinite(em), M=block.bound, epsilon=block.epsilon)


# ---------------------------------------------------------------------------
# Property checks
# ---------------------------------------------------------------------------


@dataclass
class PositivityReport:
    passed: bool
    part: str
    samples: int
    box: tuple
    witness: dict | None = None


def positivity_check(spec: ModelSpec, sample_count: int = 10_000, box=None, seed: int = 0) -> PositivityReport:
    """Sufficient conditions for non-negative rates, checked on random ``(t, x)``.

    Backward functionals must be ``>= 0``; terminal ones must be ``>= 0`` and
    decreasing in ``k``. The first violation found is returned as witness.
    """
    rng = np.random.default_rng(seed)
    lo, hi = box or default_box(spec)
    ts = rng.uniform(0.0, spec.tenor.horizon, sample_count)
    xs = rng.uniform(lo, hi, (sample_count, spec.dimension))
    if spec.family == "lmm":
        for k, f in enumerate(spec.backward_functionals(), start=1):
            for t, x in zip(ts, xs):
                v = float(f.value(t, x))
                if v < 0:
                    return PositivityReport(False, "f^k >= 0", sample_count, (lo, hi),
                                            {"k": k, "t": float(t), "x": x.tolist(), "value": v})
        return PositivityReport(True, "f^k >= 0", sample_count, (lo, hi))
    gs = spec.terminal_functionals()
    for t, x in zip(ts, xs):
        vals = [float(g.value(t, x)) for g in gs] + [0.0]
        for k in range(1, spec.N):
            if vals[k - 1] < 0 or vals[k - 1] < vals[k]:
                return PositivityReport(False, "g^k >= g^{k+1} >= 0", sample_count, (lo, hi),
                                        {"k": k, "t": float(t), "x": x.tolist(),
                                         "g_k": vals[k - 1], "g_k+1": vals[k]})
    return PositivityReport(True, "g^k >= g^{k+1} >= 0", sample_count, (lo, hi))


@dataclass
class StructureReport:
    preserving: bool
    all_affine: bool
    per_tenor: dict
    witness: dict | None = None


def structure_preservation_check(spec: ModelSpec, state_samples: int = 100, seed: int = 0,
                                 times: int = 5, box=None) -> StructureReport:
    """Does each measure change ``P_{k+1} -> P_k`` act deterministically?

    Evaluates ``(beta, atom multipliers)`` of the tilt by ``f^k`` at random
    states for a few fixed times and requires exact equality across states.
    """
    rng = np.random.default_rng(seed)
    lo, hi = box or default_box(spec)
    fs = spec.backward_functionals()
    all_affine = all(f.is_affine for f in fs)
    per_tenor = {}
    witness = None
    ts = rng.uniform(0.0, spec.tenor.horizon, times)
    for k, f in enumerate(fs, start=1):
        same = True
        for t in ts:
            states = rng.uniform(lo, hi, (state_samples, spec.dimension))
            sizes = spec.driver.characteristics_at(t, states[0]).sizes
            ref = tilt(f, t, states[0], sizes)
            for x in states[1:]:
                other = tilt(f, t, x, sizes)
                if not (np.array_equal(ref.beta, other.beta) and np.array_equal(ref.multipliers, other.multipliers)):
                    same = False
                    if witness is None:
                        witness = {"k": k, "t": float(t), "x1": states[0].tolist(), "x2": x.tolist(),
                                   "beta1": ref.beta.tolist(), "beta2": other.beta.tolist()}
                    break
            if not same:
                break
        per_tenor[k] = same
    preserving = all(per_tenor.values())
    if all_affine and not preserving:
        raise AssertionError("affine functionals produced a state-dependent tilt")
    return StructureReport(preserving, all_affine, per_tenor, witness)
