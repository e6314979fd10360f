"""Event-driven simulation of open Jackson networks with on-the-fly
Laplace-domain correlation estimates.

For every probed frequency ``omega`` and queue ``beta`` the simulator keeps
the exponential average

    B_beta(omega, T) = integral_0^inf b_beta(T - t) exp(-omega t) dt

of the busy indicator, and for every pair ``(alpha, beta)`` the running
integral of ``b_alpha(T) B_beta(omega, T)``.  Indicators are constant between
events, so both updates are closed-form per inter-event interval.  The time
average of ``b_alpha B_beta`` estimates the Laplace transform of
Prob(beta busy at 0, alpha busy at t).

Error bars come from disjoint sub-runs (batch means).  The measured time is
split into ``n_subruns`` sub-runs of ``subrun_length``; these are distributed
over ``chains`` independent Markov chains, each started from the stationary
product-geometric law and run through its own warmup.  Chain ``c`` draws its
randomness from ``SeedSequence(seed).spawn(chains)[c]`` (numpy PCG64), so the
output depends only on ``(seed, config)`` and never on how many worker
processes execute the chains.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernel
from .analytics import CorrelationCurve
from .errors import ConfigInvalid, DeadNetwork, TooFewPeriods
from .network import NetworkSpec

CHUNK_EVENTS = 1 << 16
HIST_LEVELS = 64


@dataclass
class SimConfig:
    spec: NetworkSpec
    duration: float
    seed: int
    omegas: list[float]
    pairs: list[tuple[int, int]]
    subrun_length: float = 10_000.0
    warmup: float | None = None
    chains: int = 1
    hist_levels: int = HIST_LEVELS

    def __post_init__(self):
        if self.warmup is None:
            self.warmup = 0.01 * self.duration
        self.omegas = sorted({float(w) for w in self.omegas})
        self.pairs = [(int(a), int(b)) for a, b in self.pairs]
        if not self.duration > self.warmup >= 0:
            raise ConfigInvalid(f"need duration > warmup >= 0, got {self.duration}, {self.warmup}")
        if not self.subrun_length > 0:
            raise ConfigInvalid("subrun_length must be > 0")
        if self.duration - self.warmup < 10 * self.subrun_length:
            raise ConfigInvalid(
                "duration - warmup must cover at least 10 sub-runs for error bars"
            )
        if not self.omegas or min(self.omegas) <= 0:
            raise ConfigInvalid("omega grid must be non-empty and positive")
        for a, b in self.pairs:
            if not (0 <= a < self.spec.n and 0 <= b < self.spec.n):
                raise ConfigInvalid(f"pair {(a, b)} out of range for {self.spec.n} queues")
        if not 1 <= self.chains <= self.n_subruns:
            raise ConfigInvalid(f"chains must be between 1 and {self.n_subruns}")
        if not 0 <= self.seed < 2**64:
            raise ConfigInvalid("seed must be a 64-bit unsigned integer")

    @property
    def n_subruns(self) -> int:
        return int(math.floor((self.duration - self.warmup) / self.subrun_length + 1e-9))

    def chain_subruns(self) -> list[range]:
        k, s = self.n_subruns, self.chains
        return [range(c * k // s, (c + 1) * k // s) for c in range(s)]


@dataclass
class SimState:
    clock: float
    lengths: np.ndarray
    rng: np.random.Generator


class Event(NamedTuple):
    kind: str  # "arrival" or "service"
    source: int  # -1 for an external arrival
    dest: int  # -1 when the customer leaves the network


def route_table(routing: np.ndarray) -> np.ndarray:
    """Cumulative routing probabilities; row i, column j is sum_{k<=j} r[i, k]."""
    cum = np.cumsum(np.asarray(routing, dtype=float), axis=1)
    return np.ascontiguousarray(cum)


def sample_initial(rng: np.random.Generator, rho) -> np.ndarray:
    """Draw occupancies from the product of geometric laws (1-rho) rho^n."""
    rho = np.asarray(rho, dtype=float)
    return (rng.geometric(1.0 - rho) - 1).astype(np.int64)


def next_event(state: SimState, spec: NetworkSpec) -> tuple[float, Event]:
    """Sample the waiting time and identity of the next event (no mutation)."""
    lengths = np.asarray(state.lengths, dtype=np.int64)
    rate = _kernel.total_rate(lengths, spec.gamma, spec.mu)
    if rate <= 0.0:
        raise DeadNetwork("all queues are empty and there are no external arrivals")
    u, v = state.rng.random(2)
    dt = -math.log(1.0 - u) / rate
    kind, src, dst = _kernel.pick_event(v, rate, lengths, spec.gamma, spec.mu, route_table(spec.routing))
    return dt, Event("arrival" if kind == _kernel.ARRIVAL else "service", int(src), int(dst))


def apply_event(state: SimState, dt: float, event: Event) -> None:
    state.clock += dt
    if event.source >= 0:
        state.lengths[event.source] -= 1
    if event.dest >= 0:
        state.lengths[event.dest] += 1


def estimator_advance(B, delta, b_beta, omega):
    """Exponential average after holding indicator ``b_beta`` for ``delta``."""
    omega = np.asarray(omega, dtype=float)
    decay = np.exp(-omega * delta)
    return decay * B + (-np.expm1(-omega * delta) / omega) * b_beta


def estimator_accumulate(delta, b_alpha, b_beta, B_at_T0, omega):
    """Increment of the integral of ``b_alpha(T) B_beta(T)`` over ``delta``.

    ``b_a B e1 + (b_a b_b / omega)(delta - e1)`` with ``e1 = (1 - e^{-w d})/w``.
    """
    omega = np.asarray(omega, dtype=float)
    z = omega * delta
    e1 = -np.expm1(-z) / omega
    small = z < 1e-3
    tail = np.where(
        small,
        z * z * (0.5 - z * (1.0 / 6.0 - z * (1.0 / 24.0 - z / 120.0))),
        z + np.expm1(-z),
    )
    return b_alpha * B_at_T0 * e1 + b_alpha * b_beta * tail / (omega * omega)


@dataclass
class EstimatorState:
    """Exponential averages per (queue, omega) and integrals per (pair, omega)."""

    omegas: np.ndarray
    pairs: list[tuple[int, int]]
    n_queues: int
    B: np.ndarray = field(init=False)
    integral: np.ndarray = field(init=False)
    elapsed: float = 0.0

    def __post_init__(self):
        self.omegas = np.asarray(self.omegas, dtype=float)
        self.B = np.zeros((self.n_queues, self.omegas.size))
        self.integral = np.zeros((len(self.pairs), self.omegas.size))

    def hold(self, delta: float, busy, measure: bool = True) -> None:
        busy = np.asarray(busy, dtype=float)
        if measure:
            for p, (a, b) in enumerate(self.pairs):
                self.integral[p] += estimator_accumulate(delta, busy[a], busy[b], self.B[b], self.omegas)
            self.elapsed += delta
        self.B = estimator_advance(self.B, delta, busy[:, None], self.omegas)

    def estimate(self) -> np.ndarray:
        return self.integral / self.elapsed


@dataclass
class SimResult:
    config: SimConfig
    integrals: np.ndarray  # (sub-run, pair, omega)
    busy_time: np.ndarray  # (sub-run, queue)
    level_time: np.ndarray  # (sub-run, queue, level); last level collects overflow
    arrivals: np.ndarray  # (sub-run, queue), external plus routed-in
    departures: np.ndarray  # (sub-run, queue)
    routed: np.ndarray  # (sub-run, source, dest); dest == n means exit
    busy_periods: np.ndarray  # rows (queue, duration, sub-run)

    @property
    def omegas(self) -> np.ndarray:
        return np.asarray(self.config.omegas)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return self.config.pairs

    @property
    def n_subruns(self) -> int:
        return self.integrals.shape[0]

    @property
    def measured_time(self) -> float:
        return self.n_subruns * self.config.subrun_length

    def _batch(self, per_subrun_totals):
        means = per_subrun_totals / self.config.subrun_length
        k = means.shape[0]
        return means.mean(axis=0), means.std(axis=0, ddof=1) / math.sqrt(k)

    def correlation(self):
        """``(estimate, stderr)`` arrays of shape (pair, omega)."""
        return self._batch(self.integrals)

    def curves(self) -> dict[tuple[int, int], CorrelationCurve]:
        est, err = self.correlation()
        return {
            pair: CorrelationCurve(pair[0], pair[1], self.omegas, est[p], "simulation", err[p])
            for p, pair in enumerate(self.pairs)
        }

    def busy_fraction(self):
        return self._batch(self.busy_time)

    def occupancy(self):
        """Per-sub-run fraction of time at each level, shape (sub-run, queue, level)."""
        return self.level_time / self.config.subrun_length

    def event_rates(self):
        """``(arrival_rate, departure_rate)`` batch estimates per queue."""
        return self._batch(self.arrivals.astype(float)), self._batch(self.departures.astype(float))


def _run_chain(config: SimConfig, chain: int) -> dict:
    spec = config.spec
    subruns = config.chain_subruns()[chain]
    n_sub = len(subruns)
    seq = np.random.SeedSequence(config.seed).spawn(config.chains)[chain]
    rng = np.random.Generator(np.random.PCG64(seq))

    n = spec.n
    m = len(config.omegas)
    P = len(config.pairs)
    omegas = np.asarray(config.omegas, dtype=float)
    pair_a = np.array([a for a, _ in config.pairs], dtype=np.int64)
    pair_b = np.array([b for _, b in config.pairs], dtype=np.int64)
    mu = np.ascontiguousarray(spec.mu, dtype=float)
    gamma = np.ascontiguousarray(spec.gamma, dtype=float)
    cum = route_table(spec.routing)

    lengths = sample_initial(rng, spec.rho)
    clock = np.zeros(1)
    B = np.zeros((n, m))
    integ = np.zeros((n_sub, P, m))
    busy_time = np.zeros((n_sub, n))
    level_time = np.zeros((n_sub, n, config.hist_levels))
    arrivals = np.zeros((n_sub, n), dtype=np.int64)
    departures = np.zeros((n_sub, n), dtype=np.int64)
    routed = np.zeros((n_sub, n, n + 1), dtype=np.int64)
    bp_start = np.full(n, np.nan)
    periods = []

    finished = False
    while not finished:
        uniforms = rng.random(2 * CHUNK_EVENTS)
        bp_out = np.zeros((CHUNK_EVENTS + 1, 3))
        _, n_bp, finished = _kernel.advance(
            clock, lengths, B, uniforms, float(config.warmup), float(config.subrun_length), n_sub,
            mu, gamma, cum, omegas, pair_a, pair_b,
            integ, busy_time, level_time, arrivals, departures, routed,
            bp_start, bp_out,
        )
        if n_bp:
            chunk = bp_out[:n_bp].copy()
            chunk[:, 2] += subruns.start
            periods.append(chunk)

    return {
        "integrals": integ,
        "busy_time": busy_time,
        "level_time": level_time,
        "arrivals": arrivals,
        "departures": departures,
        "routed": routed,
        "busy_periods": np.concatenate(periods) if periods else np.zeros((0, 3)),
    }


def _run_chain_star(args):
    return _run_chain(*args)


def run(config: SimConfig, workers: int = 1) -> SimResult:
    """Simulate the network and collect all estimators.

    Chains are merged in ascending order, so the result is identical for any
    ``workers``.
    """
    if float(np.sum(config.spec.gamma)) <= 0.0:
        raise DeadNetwork("network has no external arrivals; it empties and stays empty")
    jobs = [(config, c) for c in range(config.chains)]
    if workers > 1 and config.chains > 1:
        with ProcessPoolExecutor(max_workers=min(workers, config.chains)) as pool:
            parts = list(pool.map(_run_chain_star, jobs))
    else:
        parts = [_run_chain(*job) for job in jobs]
    merged = {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}
    return SimResult(config=config, **merged)


@dataclass(frozen=True)
class BusyPeriodStats:
    mean: float
    stderr: float
    count: int


def busy_period_stats(result: SimResult, queue: int, min_count: int = 100) -> BusyPeriodStats:
    """Mean busy-period length of ``queue`` with a sub-run (ratio) error bar.

    A busy period is attributed to the sub-run in which it ends; periods
    already in progress when a chain starts are skipped.
    """
    rows = result.busy_periods[result.busy_periods[:, 0] == queue]
    count = rows.shape[0]
    if count < min_count:
        raise TooFewPeriods(f"only {count} completed busy periods on queue {queue}")
    k = result.n_subruns
    sub = rows[:, 2].astype(np.int64)
    sums = np.bincount(sub, weights=rows[:, 1], minlength=k)
    counts = np.bincount(sub, minlength=k).astype(float)
    mean = sums.sum() / counts.sum()
    # delta-method variance of a ratio of batch totals
    resid = sums - mean * counts
    stderr = math.sqrt(np.sum(resid**2) / (k * (k - 1))) / counts.mean()
    return BusyPeriodStats(float(mean), float(stderr), int(count))


def occupancy_tv(result: SimResult, queue: int, rho: float, levels: int = 20,
                 n_boot: int = 400, seed: int = 0):
    """Total-variation distance between the empirical occupancy law of a queue
    and geometric(rho), over the first ``levels`` levels.

    Returns ``(tv, boot_scale)`` where ``boot_scale`` is the RMS of the same
    distance between sub-run bootstrap resamples and the empirical law: the
    size of distance that sampling noise alone produces.
    """
    if levels > result.config.hist_levels - 1:
        raise ValueError("not enough histogram levels recorded")
    per_sub = result.occupancy()[:, queue, :levels]
    empirical = per_sub.mean(axis=0)
    geometric = (1.0 - rho) * rho ** np.arange(levels)
    tv = 0.5 * np.abs(empirical - geometric).sum()
    rng = np.random.default_rng(seed)
    k = per_sub.shape[0]
    draws = rng.integers(0, k, size=(n_boot, k))
    boot = per_sub[draws].mean(axis=1)
    boot_tv = 0.5 * np.abs(boot - empirical).sum(axis=1)
    return float(tv), float(np.sqrt(np.mean(boot_tv**2)))
