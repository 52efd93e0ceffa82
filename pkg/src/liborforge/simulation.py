"""Monte Carlo paths of the driver under the terminal measure ``P_N``.

Stepping is explicit with the drift frozen at the left grid point; the
Gaussian part uses covariance ``c * dt`` and the jump part is exact
compound-Poisson for the (left-point) intensities of each atom.

Paths are generated in fixed-size blocks.  Block ``b`` draws from
``SeedSequence(master_seed, spawn_key=(b,))``, so every path's randomness is a
function of the master seed and its index alone, and the output does not
depend on how many workers run the blocks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import DATE_TOL, ModelSpec

BLOCK_SIZE = 8192
DEFAULT_PATHS = 100_000
STEPS_PER_ACCRUAL = 32


class SimulationError(ArithmeticError):
    """A simulated state became non-finite."""


@dataclass(frozen=True)
class SimulationConfig:
    """Monte Carlo settings.

    ``time_step=None`` means ``min(delta_k) / 32``.  ``record_times=None``
    stores every grid time; otherwise only the listed times (plus ``0``) are
    kept, which bounds memory for large runs.
    """

    path_count: int = DEFAULT_PATHS
    time_step: float | None = None
    master_seed: int = 0
    worker_count: int = 1
    record_times: tuple | None = None
    log_jumps: bool = True
    block_size: int = BLOCK_SIZE

    def __post_init__(self):
        if int(self.path_count) < 1:
            raise ValueError("path_count must be at least 1")
        if self.time_step is not None and not self.time_step > 0:
            raise ValueError("time_step must be positive")
        if int(self.worker_count) < 1:
            raise ValueError("worker_count must be at least 1")
        if int(self.block_size) < 1:
            raise ValueError("block_size must be at least 1")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")

    def step_for(self, spec: ModelSpec) -> float:
        if self.time_step is not None:
            return float(self.time_step)
        return float(np.min(spec.tenor.accruals)) / STEPS_PER_ACCRUAL


@dataclass(frozen=True, eq=False)
class PathGrid:
    """Simulated driver states.

    ``states[p, i]`` is ``X`` on path ``p`` at ``times[i]``; ``grid`` is the
    full stepping grid (``times`` is a subset when recording was thinned).
    Jump logs hold one entry per jump: path, time and atom index within the
    active characteristics segment.
    """

    times: np.ndarray
    states: np.ndarray
    grid: np.ndarray
    initial_state: np.ndarray
    jump_paths: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    jump_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    jump_atoms: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def path_count(self) -> int:
        return self.states.shape[0]

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9:
            raise ValueError(f"time {t} is not a recorded grid time")
        return i

    def at(self, t: float) -> np.ndarray:
        return self.states[:, self.index_of(t)]

    def jump_counts(self, atoms: int) -> np.ndarray:
        """Jumps per path and atom, shape ``(paths, atoms)``."""
        counts = np.zeros((self.path_count, atoms), dtype=np.int64)
        np.add.at(counts, (self.jump_paths, self.jump_atoms), 1)
        return counts


def time_grid(spec: ModelSpec, step: float) -> np.ndarray:
    """Tenor dates and driver breakpoints, each gap split uniformly into ``ceil(len/step)`` steps."""
    knots = list(spec.tenor.dates)
    knots += [float(b) for b in getattr(spec.driver, "breakpoints", []) if b < spec.tenor.horizon]
    knots = np.unique(np.round(np.asarray(knots, dtype=float), 14))
    pieces = [np.array([0.0])]
    for a, b in zip(knots[:-1], knots[1:]):
        n = max(1, int(math.ceil((b - a) / step - 1e-9)))
        pieces.append(np.linspace(a, b, n + 1)[1:])
    return np.concatenate(pieces)


def _record_mask(grid: np.ndarray, record_times) -> np.ndarray:
    if record_times is None:
        return np.ones(grid.size, dtype=bool)
    mask = np.zeros(grid.size, dtype=bool)
    mask[0] = True
    for t in record_times:
        i = int(np.argmin(np.abs(grid - t)))
        if abs(grid[i] - t) > 1e-9:
            raise ValueError(f"record time {t} is not on the simulation grid")
        mask[i] = True
    return mask


def _sqrt_psd(c: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(c)
    return v * np.sqrt(np.clip(w, 0.0, None))


class _Stepper:
    """Per-step drift, diffusion factor and jump data for one family."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.affine = spec.family == "affine"
        if self.affine:
            drv = spec.driver
            F1, F2 = drv.jumps_constant, drv.jumps_state
            self.sizes = np.concatenate([F1.sizes, F2.sizes])
            self.lam_const = np.concatenate([F1.intensities, np.zeros(F2.size)])
            self.lam_state = np.concatenate([np.zeros(F1.size), F2.intensities])
            if spec.zero_drift:
                # identity-truncation drift set to 0: only the compensator remains
                self.const_drift = -float(self.sizes[:, 0] @ self.lam_const)
                self.lin_drift = -float(self.sizes[:, 0] @ self.lam_state)
            else:
                h2 = np.minimum(1.0, F2.sizes[:, 0])
                self.const_drift = drv.b
                self.lin_drift = drv.beta - float(h2 @ F2.intensities)
            self.alpha = drv.alpha

    def pathwise(self, t: float, x: np.ndarray):
        """``(drift, diffusion factor or scale, sizes, intensities)`` at the left point.

        The drift returned is the compensated one, ``b - sum_i y_i lambda_i``.
        """
        spec = self.spec
        if self.affine:
            xs = x[:, 0]
            drift = (self.const_drift + self.lin_drift * xs)[:, None]
            scale = np.sqrt(2.0 * self.alpha * xs)[:, None]
            lam = self.lam_const[None, :] + xs[:, None] * self.lam_state[None, :]
            return drift, scale, self.sizes, lam
        trip = spec.characteristics_at(t, spec.initial_state)
        if spec.family == "lmm" and spec.lmm is not None and not spec.zero_drift:
            b = spec.lmm.drift_vector(t, x)
        else:
            b = np.broadcast_to(trip.drift, x.shape)
        drift = b - trip.intensities @ trip.sizes
        return drift, _sqrt_psd(trip.diffusion), trip.sizes, trip.intensities


def _simulate_block(spec: ModelSpec, grid: np.ndarray, mask: np.ndarray, n: int, offset: int,
                    seed: int, block: int, log_jumps: bool):
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(block,)))
    stepper = _Stepper(spec)
    d = spec.dimension
    x = np.broadcast_to(spec.initial_state, (n, d)).copy()
    out = np.empty((n, int(mask.sum()), d))
    out[:, 0] = x
    col = 1
    jp, jt, ja = [], [], []
    for m in range(grid.size - 1):
        t0, t1 = grid[m], grid[m + 1]
        dt = t1 - t0
        drift, factor, sizes, lam = stepper.pathwise(t0, x)
        z = rng.standard_normal((n, d))
        if stepper.affine:
            dx = drift * dt + factor * z * math.sqrt(dt)
        else:
            dx = drift * dt + (z @ factor.T) * math.sqrt(dt)
        if sizes.shape[0]:
            counts = rng.poisson(np.broadcast_to(lam * dt, (n, sizes.shape[0])))
            if counts.any():
                dx = dx + counts @ sizes
                if log_jumps:
                    p, a = np.nonzero(counts)
                    reps = counts[p, a]
                    p, a = np.repeat(p, reps), np.repeat(a, reps)
                    jp.append(p + offset)
                    jt.append(t0 + dt * rng.random(p.size))
                    ja.append(a)
        with np.errstate(over="ignore", invalid="ignore"):
            x = x + dx
        if stepper.affine:
            np.maximum(x, 0.0, out=x)
        bad = ~np.isfinite(x).all(axis=1)
        if bad.any():
            p = int(np.argmax(bad)) + offset
            raise SimulationError(f"non-finite state on path {p} at t={t1:.6g}")
        if mask[m + 1]:
            out[:, col] = x
            col += 1
    cat = (lambda parts, dt_: np.concatenate(parts) if parts else np.zeros(0, dtype=dt_))
    return out, cat(jp, np.int64), cat(jt, float), cat(ja, np.int64)


def simulate_driver(spec: ModelSpec, config: SimulationConfig | None = None) -> PathGrid:
    """Simulate ``X`` under ``P_N`` on :func:`time_grid`."""
    config = config or SimulationConfig()
    grid = time_grid(spec, config.step_for(spec))
    mask = _record_mask(grid, config.record_times)
    total, size = int(config.path_count), int(config.block_size)
    blocks = [(b, b * size, min(size, total - b * size)) for b in range(-(-total // size))]

    def run(item):
        b, offset, n = item
        return _simulate_block(spec, grid, mask, n, offset, int(config.master_seed), b, config.log_jumps)

    workers = min(int(config.worker_count), len(blocks))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, blocks))
    else:
        results = [run(item) for item in blocks]
    states = np.concatenate([r[0] for r in results])
    return PathGrid(grid[mask], states, grid, spec.initial_state.copy(),
                    np.concatenate([r[1] for r in results]),
                    np.concatenate([r[2] for r in results]),
                    np.concatenate([r[3] for r in results]))


# ---------------------------------------------------------------------------
# Prices along paths
# ---------------------------------------------------------------------------


def _evaluate(f, grid: PathGrid) -> np.ndarray:
    cols = [np.asarray(f.value(float(t), grid.states[:, i]), dtype=float)
            for i, t in enumerate(grid.times)]
    return np.stack(cols, axis=1)


def _log_terminal(spec: ModelSpec, grid: PathGrid, k: int) -> np.ndarray:
    """``log F(t, T_k, T_N)`` on every path and recorded time."""
    if k == spec.N:
        return np.zeros(grid.states.shape[:2])
    spec.check_rate_index(k)
    if spec.family == "lmm":
        return sum(_evaluate(f, grid) for f in spec.backward_functionals()[k - 1:])
    return _evaluate(spec.terminal_functionals()[k - 1], grid)


def _log_period(spec: ModelSpec, grid: PathGrid, k: int) -> np.ndarray:
    """``log F(t, T_k, T_{k+1})``."""
    spec.check_rate_index(k)
    if spec.family == "lmm":
        return _evaluate(spec.functionals[k - 1], grid)
    return _log_terminal(spec, grid, k) - _log_terminal(spec, grid, k + 1)


def forward_price_paths(spec: ModelSpec, grid: PathGrid, k: int) -> np.ndarray:
    """The family's native forward price on every path, shape ``(paths, times)``.

    ``lmm``: ``F(t, T_k, T_{k+1}) = exp(f^k(t, X_t))``; ``fpm`` and ``affine``:
    ``F(t, T_k, T_N) = exp(g^k(t, X_t))``.  Values past ``T_k`` are the
    functional evaluated there and carry no pricing meaning.
    """
    spec.check_rate_index(k)
    if spec.family == "lmm":
        return np.exp(_log_period(spec, grid, k))
    return np.exp(_log_terminal(spec, grid, k))


def terminal_forward_price_paths(spec: ModelSpec, grid: PathGrid, k: int) -> np.ndarray:
    """``F(t, T_k, T_N)``; for the LMM the telescoping product of period prices."""
    if spec.family == "lmm" and k < spec.N:
        spec.check_rate_index(k)
        out = np.ones(grid.states.shape[:2])
        for j in range(k, spec.N):
            out = out * np.exp(_log_period(spec, grid, j))
        return out
    return np.exp(_log_terminal(spec, grid, k))


def period_forward_price_paths(spec: ModelSpec, grid: PathGrid, k: int) -> np.ndarray:
    """``F(t, T_k, T_{k+1})``."""
    return np.exp(_log_period(spec, grid, k))


def libor_paths(spec: ModelSpec, grid: PathGrid, k: int) -> np.ndarray:
    """``L(t, T_k) = (F(t, T_k, T_{k+1}) - 1) / delta``."""
    return np.expm1(_log_period(spec, grid, k)) / spec.tenor.period(k)


def telescoping_error(spec: ModelSpec, grid: PathGrid) -> float:
    """Max relative gap between ``prod_j F(t, T_j, T_{j+1})`` and ``F(t, T_k, T_N)``."""
    worst = 0.0
    for k in spec.tenor.K_bar:
        prod = np.ones(grid.states.shape[:2])
        for j in range(k, spec.N):
            prod = prod * period_forward_price_paths(spec, grid, j)
        direct = np.exp(_log_terminal(spec, grid, k))
        worst = max(worst, float(np.max(np.abs(prod / direct - 1.0))))
    return worst


# ---------------------------------------------------------------------------
# Martingale tests, densities, caplets
# ---------------------------------------------------------------------------

Z_LIMIT = 3.0


@dataclass(frozen=True)
class MartingaleRow:
    k: int
    t: float
    mean: float
    target: float
    std_error: float
    z: float

    @property
    def passed(self) -> bool:
        return abs(self.z) <= Z_LIMIT


@dataclass(frozen=True)
class MartingaleReport:
    rows: tuple
    path_count: int

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def max_abs_z(self) -> float:
        return max((abs(r.z) for r in self.rows), default=0.0)


def _z_score(mean: float, target: float, se: float) -> float:
    gap = mean - target
    # a round-off gap is exact agreement, whatever the (round-off) standard error
    if abs(gap) <= 1e-12 * max(1.0, abs(target)):
        return 0.0
    return gap / se if se > 0 else math.copysign(math.inf, gap)


def _mean_se(samples: np.ndarray) -> tuple[float, float]:
    n = samples.size
    mean = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se


def default_checkpoints(spec: ModelSpec) -> list[float]:
    return [float(t) for t in spec.tenor.dates[1:-1]]


def martingale_test(spec: ModelSpec, config: SimulationConfig | None = None,
                    checkpoints=None, grid: PathGrid | None = None) -> MartingaleReport:
    """Sample means of ``F(t, T_k, T_N)`` against ``F(0, T_k, T_N)`` under ``P_N``.

    Rows cover every ``k`` and checkpoint ``0 < t <= T_k``; a row passes when
    ``|z| <= 3``.
    """
    config = config or SimulationConfig()
    checkpoints = default_checkpoints(spec) if checkpoints is None else [float(t) for t in checkpoints]
    if grid is None:
        rec = sorted(set(checkpoints) | set(float(t) for t in spec.tenor.dates))
        config = SimulationConfig(config.path_count, config.time_step, config.master_seed,
                                  config.worker_count, tuple(rec), False, config.block_size)
        grid = simulate_driver(spec, config)
    rows = []
    for k in spec.tenor.K_bar:
        target = spec.initial_terminal_price(k)
        prices = terminal_forward_price_paths(spec, grid, k)
        for t in checkpoints:
            if t <= 0 or t > spec.tenor.date(k) + DATE_TOL:
                continue
            mean, se = _mean_se(prices[:, grid.index_of(t)])
            rows.append(MartingaleRow(k, t, mean, target, se, _z_score(mean, target, se)))
    return MartingaleReport(tuple(rows), grid.path_count)


def density_process(spec: ModelSpec, grid: PathGrid, k: int) -> np.ndarray:
    """``exp(f^k(t, X_t) - f^k(0, x_0))``, the density of ``P_k`` w.r.t. ``P_{k+1}`` seen at ``t``."""
    spec.check_rate_index(k)
    f = spec.backward_functionals()[k - 1]
    return np.exp(_evaluate(f, grid) - float(f.value(0.0, grid.initial_state)))


def measure_weights(spec: ModelSpec, grid: PathGrid, k: int) -> np.ndarray:
    """``dP_{k+1}/dP_N`` seen at ``t``: ``F(t, T_{k+1}, T_N) / F(0, T_{k+1}, T_N)``.

    Paths are simulated under ``P_N``; expectations under ``P_{k+1}`` are
    weighted means with these weights.
    """
    spec.check_rate_index(k)
    return terminal_forward_price_paths(spec, grid, k + 1) / spec.initial_terminal_price(k + 1)


def caplet_price(spec: ModelSpec, config: SimulationConfig | None = None, k: int = 1,
                 strike: float = 0.0, grid: PathGrid | None = None) -> tuple[float, float]:
    """Caplet on ``L(T_k, T_k)`` paid at ``T_{k+1}``, priced under ``P_N``.

    ``B(0, T_N) * E_N[delta (L(T_k, T_k) - K)^+ F(T_{k+1}, T_{k+1}, T_N)]``.
    """
    spec.check_rate_index(k)
    if grid is None:
        config = config or SimulationConfig()
        rec = (spec.tenor.date(k), spec.tenor.date(k + 1))
        config = SimulationConfig(config.path_count, config.time_step, config.master_seed,
                                  config.worker_count, rec, False, config.block_size)
        grid = simulate_driver(spec, config)
    delta = spec.tenor.period(k)
    i_fix, i_pay = grid.index_of(spec.tenor.date(k)), grid.index_of(spec.tenor.date(k + 1))
    rate = libor_paths(spec, grid, k)[:, i_fix]
    numeraire = terminal_forward_price_paths(spec, grid, k + 1)[:, i_pay]
    payoff = delta * np.maximum(rate - strike, 0.0) * numeraire
    mean, se = _mean_se(payoff)
    bond = spec.initial_curve.bond_price(spec.N)
    return bond * mean, bond * se
