"""Event-driven Monte Carlo for processes A, B and AB.

Arrivals are Poisson with rate ``lam``: inter-event times are drawn by
inverse CDF as ``-log(U)/lam`` with ``U`` in (0, 1]. Every jump updates the
one-bit sign memory, including jumps that a mixture draws from process A.

Ensembles are simulated in fixed-size blocks of paths, vectorized across the
block. Block ``k`` draws from its own Philox stream keyed by
``SeedSequence(master_seed, spawn_key=(ENSEMBLE_STREAM, k))``, and block
accumulators are merged in block order. Results are therefore bit-identical
for a given seed whatever the number of workers.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .jumpdist import draw_from_uniforms
from .model import (
    MemorylessSpec,
    MixedSpec,
    ProcessSpec,
    SignMemorySpec,
    SignState,
    positive_probability,
)

__all__ = [
    "InitialSign",
    "SimConfig",
    "Path",
    "EnsembleStats",
    "InsufficientEventsError",
    "substream",
    "simulate_path",
    "simulate_ensemble",
    "empirical_sign_fraction",
]

BLOCK_SIZE = 8192
ENSEMBLE_STREAM = 0
PATH_STREAM = 1


class InsufficientEventsError(ValueError):
    """Too few jumps were observed to form the requested estimate."""


class InitialSign(enum.Enum):
    """How the sign memory is set before the first jump."""

    STATIONARY = "stationary"
    POSITIVE = "positive"
    NEGATIVE = "negative"


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 100_000
    horizon: float = 1.0
    grid_points: int = 101
    master_seed: int = 42
    initial_sign: InitialSign = InitialSign.STATIONARY
    workers: int = 1

    def __post_init__(self):
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ValueError(f"n_paths must be a positive integer, got {self.n_paths!r}")
        if not self.horizon > 0 or math.isinf(self.horizon):
            raise ValueError(f"horizon must be positive and finite, got {self.horizon!r}")
        if int(self.grid_points) != self.grid_points or self.grid_points < 2:
            raise ValueError(f"grid_points must be an integer >= 2, got {self.grid_points!r}")
        if self.master_seed < 0:
            raise ValueError("master_seed must be non-negative")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        object.__setattr__(self, "initial_sign", InitialSign(self.initial_sign))

    @property
    def t_grid(self) -> np.ndarray:
        return np.linspace(0.0, float(self.horizon), int(self.grid_points))


def substream(master_seed: int, stream: int, index: int) -> np.random.Generator:
    """Independent generator for ``(stream, index)`` under ``master_seed``.

    ``SeedSequence`` spawn keys give statistically independent, non-colliding
    Philox keys for distinct ``(stream, index)`` pairs.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(stream), int(index)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Path:
    """One realization: jump times in (0, horizon] and the jump sizes."""

    times: np.ndarray
    jumps: np.ndarray
    horizon: float

    @property
    def events(self) -> list[tuple[float, float]]:
        return list(zip(self.times.tolist(), self.jumps.tolist()))

    def value_at(self, t):
        """X(t) = sum of jumps with t_n <= t (right-continuous)."""
        csum = np.concatenate(([0.0], np.cumsum(self.jumps)))
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right")
        out = csum[idx]
        return out if out.ndim else float(out)

    def steps(self) -> tuple[np.ndarray, np.ndarray]:
        """Corner points (t, X) of the step function, from 0 to the horizon."""
        t = np.concatenate(([0.0], self.times, [self.horizon]))
        x = np.concatenate(([0.0], np.cumsum(self.jumps)))
        x = np.concatenate((x, x[-1:]))
        return t, x


@dataclass
class EnsembleStats:
    """Per-grid-point ensemble estimators plus pooled jump-sign counts.

    ``cond_*`` arrays are indexed ``[0]`` for jumps that follow a non-negative
    jump and ``[1]`` for jumps that follow a negative one. ``bin_*`` count
    jumps falling in each grid interval ``(t_{k-1}, t_k]``. ``cf`` holds the
    empirical characteristic function ``E[exp(i*omega*X(t))]`` with shape
    ``(len(cf_omegas), len(t_grid))``.
    """

    t_grid: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    stderr: np.ndarray
    n_paths: int
    positive_jump_fraction: float
    seed: int
    n_jumps: int = 0
    n_positive: int = 0
    cond_count: np.ndarray = field(default_factory=lambda: np.zeros(2))
    cond_mean: np.ndarray = field(default_factory=lambda: np.zeros(2))
    cond_stderr: np.ndarray = field(default_factory=lambda: np.zeros(2))
    bin_positive: np.ndarray | None = None
    bin_total: np.ndarray | None = None
    cf_omegas: np.ndarray | None = None
    cf: np.ndarray | None = None
    cf_stderr_re: np.ndarray | None = None
    cf_stderr_im: np.ndarray | None = None

    def at(self, t: float) -> tuple[float, float]:
        """(mean, stderr) at the grid point equal to ``t``."""
        k = int(np.argmin(np.abs(self.t_grid - t)))
        if not math.isclose(self.t_grid[k], t, rel_tol=1e-12, abs_tol=1e-12):
            raise KeyError(f"t = {t} is not on the grid")
        return float(self.mean[k]), float(self.stderr[k])


def _initial_positive(spec, mode: InitialSign, u):
    if mode is InitialSign.POSITIVE:
        return np.ones(u.shape, dtype=bool)
    if mode is InitialSign.NEGATIVE:
        return np.zeros(u.shape, dtype=bool)
    if isinstance(spec, MemorylessSpec):
        # A never reads its memory; keep the stream layout identical anyway
        return u < float(spec.law.q)
    return u < float(positive_probability(spec))


class _JumpKernel:
    """Vectorized jump sampler: parameters selected by sign (and A/B choice)."""

    def __init__(self, spec: ProcessSpec):
        self.spec = spec
        if isinstance(spec, MemorylessSpec):
            self.a = self._params(spec.law)
            self.pos = self.neg = None
            self.r = 1.0
        elif isinstance(spec, SignMemorySpec):
            self.a = None
            self.pos, self.neg = self._params(spec.law_pos), self._params(spec.law_neg)
            self.r = 0.0
        elif isinstance(spec, MixedSpec):
            self.a = self._params(spec.a_law)
            self.pos, self.neg = self._params(spec.b.law_pos), self._params(spec.b.law_neg)
            self.r = float(spec.r)
        else:
            raise TypeError(f"not a process spec: {spec!r}")
        self.lam = float(spec.lam)
        self.mixed = isinstance(spec, MixedSpec)

    @staticmethod
    def _params(law):
        return np.array([float(law.q), float(law.gamma), float(law.eta)])

    def draw(self, rng: np.random.Generator, prev_positive: np.ndarray) -> np.ndarray:
        k = prev_positive.shape[0]
        if self.mixed:
            use_a = rng.random(k) < self.r
        if self.pos is not None:
            p = np.where(prev_positive[:, None], self.pos, self.neg)
            if self.mixed:
                p = np.where(use_a[:, None], self.a, p)
            q, g, e = p[:, 0], p[:, 1], p[:, 2]
        else:
            q, g, e = self.a
        u_sign = rng.random(k)
        u_size = 1.0 - rng.random(k)
        return draw_from_uniforms(q, g, e, u_sign, u_size)

    def waits(self, rng: np.random.Generator, k: int) -> np.ndarray:
        return -np.log(1.0 - rng.random(k)) / self.lam


def simulate_path(
    spec: ProcessSpec,
    horizon: float,
    rng: np.random.Generator,
    initial_sign: InitialSign | SignState = InitialSign.STATIONARY,
) -> Path:
    """Sample one path on ``(0, horizon]``.

    ``initial_sign`` is an :class:`InitialSign` mode, or a :class:`SignState`
    to condition on the sign of the jump preceding time 0.
    """
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon!r}")
    if isinstance(initial_sign, SignState):
        initial_sign = InitialSign.POSITIVE if initial_sign is SignState.POSITIVE else InitialSign.NEGATIVE
    kernel = _JumpKernel(spec)
    prev = _initial_positive(spec, InitialSign(initial_sign), rng.random(1))
    times, jumps = [], []
    t = 0.0
    while True:
        t += float(kernel.waits(rng, 1)[0])
        if t > horizon:
            break
        j = kernel.draw(rng, prev)
        times.append(t)
        jumps.append(float(j[0]))
        prev = j >= 0
    return Path(np.array(times), np.array(jumps), float(horizon))


@dataclass
class _Accumulator:
    n: int
    mean: np.ndarray
    m2: np.ndarray
    n_jumps: int
    n_positive: int
    cond_n: np.ndarray
    cond_sum: np.ndarray
    cond_sumsq: np.ndarray
    bin_positive: np.ndarray
    bin_total: np.ndarray
    cf_sum: np.ndarray | None
    cf_sumsq_re: np.ndarray | None
    cf_sumsq_im: np.ndarray | None

    def merge(self, other: "_Accumulator") -> "_Accumulator":
        # Chan et al. pairwise update for mean and M2
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        m2 = self.m2 + other.m2 + delta * delta * (self.n * other.n / n)

        def add(a, b):
            return None if a is None else a + b

        return _Accumulator(
            n,
            mean,
            m2,
            self.n_jumps + other.n_jumps,
            self.n_positive + other.n_positive,
            self.cond_n + other.cond_n,
            self.cond_sum + other.cond_sum,
            self.cond_sumsq + other.cond_sumsq,
            self.bin_positive + other.bin_positive,
            self.bin_total + other.bin_total,
            add(self.cf_sum, other.cf_sum),
            add(self.cf_sumsq_re, other.cf_sumsq_re),
            add(self.cf_sumsq_im, other.cf_sumsq_im),
        )


def _simulate_block(spec, n, config: SimConfig, block: int, omegas) -> _Accumulator:
    rng = substream(config.master_seed, ENSEMBLE_STREAM, block)
    kernel = _JumpKernel(spec)
    grid = config.t_grid
    horizon = float(config.horizon)
    n_grid = grid.size

    prev = _initial_positive(spec, config.initial_sign, rng.random(n))
    t = np.zeros(n)
    inc = np.zeros((n, n_grid))
    cond_n = np.zeros(2)
    cond_sum = np.zeros(2)
    cond_sumsq = np.zeros(2)
    bin_positive = np.zeros(n_grid - 1, dtype=np.int64)
    bin_total = np.zeros(n_grid - 1, dtype=np.int64)
    n_jumps = n_positive = 0

    alive = np.arange(n)
    while alive.size:
        t[alive] += kernel.waits(rng, alive.size)
        alive = alive[t[alive] <= horizon]
        if not alive.size:
            break
        before = prev[alive]
        j = kernel.draw(rng, before)
        pos = j >= 0
        # first grid point at or after the event time: X is right-continuous
        idx = np.searchsorted(grid, t[alive], side="left")
        inc[alive, idx] += j
        for k, mask in enumerate((before, ~before)):
            jm = j[mask]
            cond_n[k] += jm.size
            cond_sum[k] += jm.sum()
            cond_sumsq[k] += np.dot(jm, jm)
        # a zero wait (probability 2**-53) lands at t = 0; count it in the first bin
        b = np.maximum(idx - 1, 0)
        bin_total += np.bincount(b, minlength=n_grid - 1)
        bin_positive += np.bincount(b[pos], minlength=n_grid - 1)
        n_jumps += j.size
        n_positive += int(pos.sum())
        prev[alive] = pos

    x = np.cumsum(inc, axis=1)
    mean = x.mean(axis=0)
    m2 = ((x - mean) ** 2).sum(axis=0)

    cf_sum = cf_re2 = cf_im2 = None
    if omegas is not None:
        phase = omegas[:, None, None] * x[None, :, :]
        c, s = np.cos(phase), np.sin(phase)
        cf_sum = c.sum(axis=1) + 1j * s.sum(axis=1)
        cf_re2 = (c * c).sum(axis=1)
        cf_im2 = (s * s).sum(axis=1)

    return _Accumulator(
        n, mean, m2, n_jumps, n_positive, cond_n, cond_sum, cond_sumsq,
        bin_positive, bin_total, cf_sum, cf_re2, cf_im2,
    )


def _run_block(args):
    return _simulate_block(*args)


def simulate_ensemble(spec: ProcessSpec, config: SimConfig, cf_omegas=None) -> EnsembleStats:
    """Simulate ``config.n_paths`` independent paths and aggregate them on the grid.

    Args:
        spec: process to simulate.
        config: ensemble size, grid, seed, initial-sign mode and worker count.
        cf_omegas: optional real frequencies at which to also estimate the
            empirical characteristic function of X(t) on the grid.

    Returns:
        EnsembleStats. ``variance`` is the unbiased sample variance and
        ``stderr = sqrt(variance / n_paths)``.
    """
    omegas = None if cf_omegas is None else np.atleast_1d(np.asarray(cf_omegas, dtype=float))
    sizes = [BLOCK_SIZE] * (config.n_paths // BLOCK_SIZE)
    if config.n_paths % BLOCK_SIZE:
        sizes.append(config.n_paths % BLOCK_SIZE)
    tasks = [(spec, n, config, k, omegas) for k, n in enumerate(sizes)]
    if config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            parts = list(pool.map(_run_block, tasks))
    else:
        parts = [_run_block(task) for task in tasks]

    acc = parts[0]
    for part in parts[1:]:
        acc = acc.merge(part)

    n = acc.n
    variance = acc.m2 / (n - 1) if n > 1 else np.full_like(acc.m2, np.nan)
    stats = EnsembleStats(
        t_grid=config.t_grid,
        mean=acc.mean,
        variance=variance,
        stderr=np.sqrt(variance / n),
        n_paths=n,
        positive_jump_fraction=acc.n_positive / acc.n_jumps if acc.n_jumps else float("nan"),
        seed=config.master_seed,
        n_jumps=acc.n_jumps,
        n_positive=acc.n_positive,
        bin_positive=acc.bin_positive,
        bin_total=acc.bin_total,
    )
    with np.errstate(invalid="ignore", divide="ignore"):
        cm = acc.cond_sum / acc.cond_n
        cvar = (acc.cond_sumsq - acc.cond_n * cm * cm) / (acc.cond_n - 1)
        stats.cond_count = acc.cond_n
        stats.cond_mean = cm
        stats.cond_stderr = np.sqrt(cvar / acc.cond_n)
    if omegas is not None:
        cf = acc.cf_sum / n
        stats.cf_omegas = omegas
        stats.cf = cf
        var_re = (acc.cf_sumsq_re - n * cf.real**2) / (n - 1)
        var_im = (acc.cf_sumsq_im - n * cf.imag**2) / (n - 1)
        stats.cf_stderr_re = np.sqrt(np.maximum(var_re, 0.0) / n)
        stats.cf_stderr_im = np.sqrt(np.maximum(var_im, 0.0) / n)
    return stats


def empirical_sign_fraction(spec: ProcessSpec, config: SimConfig, min_events: int = 100):
    """Pooled fraction of non-negative jumps and its binomial standard error.

    Raises:
        InsufficientEventsError: fewer than ``min_events`` jumps in total.
    """
    stats = simulate_ensemble(spec, config)
    n = stats.n_jumps
    if n < min_events:
        raise InsufficientEventsError(f"only {n} jumps observed, need at least {min_events}")
    p = stats.n_positive / n
    return p, math.sqrt(p * (1.0 - p) / n)
