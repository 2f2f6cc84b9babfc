import math

import numpy as np
import pytest

from parrondo_ctrw import simulate
from parrondo_ctrw.jumpdist import JumpLaw, mean_jump
from parrondo_ctrw.model import (
    MemorylessSpec,
    MixedSpec,
    SignMemorySpec,
    SignState,
    alpha,
    beta,
    drift,
    fig1_spec,
    fig2_spec,
)
from parrondo_ctrw.simulate import (
    BLOCK_SIZE,
    InitialSign,
    InsufficientEventsError,
    Path,
    SimConfig,
    empirical_sign_fraction,
    simulate_ensemble,
    simulate_path,
    substream,
)
from parrondo_ctrw.spectral import compound_poisson_cf

Z = 4.0

SPECS = {
    "A": MemorylessSpec(6.0, JumpLaw(0.35, 2.0, 0.7)),
    "B": SignMemorySpec(6.0, JumpLaw(0.7, 3.0, 1.5), JumpLaw(0.2, 0.8, 2.5)),
    "AB": MixedSpec(0.4, JumpLaw(0.55, 1.0, 2.0),
                    SignMemorySpec(6.0, JumpLaw(0.9, 4.0, 1.0), JumpLaw(0.3, 1.0, 1.0))),
}


def second_moment(law):
    return 2 * law.q / law.gamma**2 + 2 * (1 - law.q) / law.eta**2


# --- configuration and streams -----------------------------------------------

@pytest.mark.parametrize(
    "kwargs",
    [dict(n_paths=0), dict(n_paths=2.5), dict(horizon=0), dict(horizon=float("inf")),
     dict(grid_points=1), dict(master_seed=-1), dict(workers=0), dict(initial_sign="sideways")],
)
def test_simconfig_validation(kwargs):
    with pytest.raises(ValueError):
        SimConfig(**kwargs)


def test_simconfig_defaults_and_grid():
    c = SimConfig()
    assert (c.n_paths, c.horizon, c.grid_points, c.master_seed) == (100_000, 1.0, 101, 42)
    assert c.initial_sign is InitialSign.STATIONARY
    assert c.t_grid[0] == 0.0 and c.t_grid[-1] == 1.0 and len(c.t_grid) == 101
    assert SimConfig(initial_sign="positive").initial_sign is InitialSign.POSITIVE


def test_substreams_reproducible_and_distinct():
    a = substream(42, 0, 3).random(5)
    assert np.array_equal(a, substream(42, 0, 3).random(5))
    assert not np.array_equal(a, substream(42, 0, 4).random(5))
    assert not np.array_equal(a, substream(42, 1, 3).random(5))
    assert not np.array_equal(a, substream(43, 0, 3).random(5))


# --- single paths ---------------------------------------------------------------

def test_path_structure():
    p = simulate_path(fig1_spec(), 2.0, substream(1, 1, 0))
    assert np.all(np.diff(p.times) > 0)
    assert p.times[0] > 0 and p.times[-1] <= 2.0
    assert len(p.events) == len(p.jumps)
    t, x = p.steps()
    assert t[0] == 0 and t[-1] == 2.0 and x[0] == 0.0
    assert x[-1] == pytest.approx(p.jumps.sum())
    # right-continuous step function
    assert p.value_at(p.times[0]) == p.jumps[0]
    assert p.value_at(np.nextafter(p.times[0], 0)) == 0.0
    assert p.value_at(2.0) == pytest.approx(p.jumps.sum())


def test_path_manual_value():
    p = Path(np.array([0.1, 0.5]), np.array([1.0, -3.0]), 1.0)
    assert list(p.value_at([0.0, 0.1, 0.3, 0.5, 1.0])) == [0.0, 1.0, 1.0, -2.0, -2.0]


def test_path_reproducible_and_validated():
    a = simulate_path(SPECS["B"], 1.0, substream(9, 1, 0))
    b = simulate_path(SPECS["B"], 1.0, substream(9, 1, 0))
    assert np.array_equal(a.times, b.times) and np.array_equal(a.jumps, b.jumps)
    with pytest.raises(ValueError):
        simulate_path(SPECS["B"], 0.0, substream(9, 1, 0))


def test_path_jump_counts_are_poisson():
    rng = substream(3, 1, 0)
    counts = np.array([len(simulate_path(SPECS["A"], 1.5, rng).jumps) for _ in range(4000)])
    lam_t = 6.0 * 1.5
    assert abs(counts.mean() - lam_t) < Z * math.sqrt(lam_t / len(counts))
    assert counts.var(ddof=1) == pytest.approx(lam_t, rel=0.1)


@pytest.mark.parametrize("name", ["A", "B", "AB"])
def test_loop_and_vectorized_samplers_agree(name):
    spec = SPECS[name]
    rng = substream(5, 1, 0)
    ends = np.array([simulate_path(spec, 1.0, rng).value_at(1.0) for _ in range(6000)])
    stats = simulate_ensemble(spec, SimConfig(n_paths=60_000, grid_points=2, master_seed=8))
    m, se = stats.at(1.0)
    pooled = math.hypot(se, ends.std(ddof=1) / math.sqrt(len(ends)))
    assert abs(ends.mean() - m) < Z * pooled


def test_path_initial_sign_as_sign_state():
    # B with q1 = 1 after + and q2 = 0 after -: a forced sign is never left
    b = SignMemorySpec(5.0, JumpLaw(1.0, 1.0, 1.0), JumpLaw(0.0, 1.0, 1.0))
    p = simulate_path(b, 3.0, substream(0, 1, 0), SignState.NEGATIVE)
    assert len(p.jumps) and np.all(p.jumps < 0)
    p = simulate_path(b, 3.0, substream(0, 1, 0), InitialSign.POSITIVE)
    assert len(p.jumps) and np.all(p.jumps >= 0)


# --- ensembles ------------------------------------------------------------------

@pytest.mark.parametrize("name", ["A", "B", "AB"])
def test_ensemble_mean_matches_closed_form(name):
    spec = SPECS[name]
    stats = simulate_ensemble(spec, SimConfig(n_paths=40_000, grid_points=5, horizon=2.0, master_seed=11))
    for t in stats.t_grid[1:]:
        m, se = stats.at(t)
        assert abs(m - float(drift(spec, t))) < Z * se
    assert stats.mean[0] == 0 and stats.variance[0] == 0


def test_ensemble_variance_of_compound_poisson():
    spec = SPECS["A"]
    stats = simulate_ensemble(spec, SimConfig(n_paths=60_000, grid_points=3, master_seed=2))
    var_exact = 6.0 * 1.0 * second_moment(spec.law)
    # stderr of the sample variance via the fourth cumulant is awkward; 3% is many sigma here
    assert stats.variance[-1] == pytest.approx(var_exact, rel=0.03)
    assert np.allclose(stats.stderr, np.sqrt(stats.variance / stats.n_paths))


def test_ensemble_cf_matches_compound_poisson():
    spec = SPECS["A"]
    omegas = np.array([0.2, 0.7, 1.5])
    stats = simulate_ensemble(spec, SimConfig(n_paths=30_000, grid_points=4, master_seed=4), cf_omegas=omegas)
    assert stats.cf.shape == (3, 4)
    for i, w in enumerate(omegas):
        for k, t in enumerate(stats.t_grid):
            exact = compound_poisson_cf(spec, w, t)
            assert abs(stats.cf[i, k].real - exact.real) <= Z * stats.cf_stderr_re[i, k] + 1e-12
            assert abs(stats.cf[i, k].imag - exact.imag) <= Z * stats.cf_stderr_im[i, k] + 1e-12


def test_ensemble_deterministic_and_seed_sensitive():
    cfg = SimConfig(n_paths=BLOCK_SIZE + 123, grid_points=11, master_seed=77)
    a = simulate_ensemble(SPECS["AB"], cfg)
    b = simulate_ensemble(SPECS["AB"], cfg)
    assert np.array_equal(a.mean, b.mean) and np.array_equal(a.variance, b.variance)
    assert a.n_paths == BLOCK_SIZE + 123 and a.seed == 77
    c = simulate_ensemble(SPECS["AB"], SimConfig(n_paths=BLOCK_SIZE + 123, grid_points=11, master_seed=78))
    assert not np.array_equal(a.mean, c.mean)


def test_worker_count_does_not_change_results():
    base = dict(n_paths=3 * BLOCK_SIZE + 5, grid_points=6, master_seed=5)
    one = simulate_ensemble(SPECS["B"], SimConfig(workers=1, **base), cf_omegas=[0.5])
    two = simulate_ensemble(SPECS["B"], SimConfig(workers=2, **base), cf_omegas=[0.5])
    for field in ("mean", "variance", "stderr", "cf", "bin_positive", "cond_mean"):
        assert np.array_equal(getattr(one, field), getattr(two, field)), field
    assert one.n_jumps == two.n_jumps


def test_block_prefix_is_shared():
    # the first block depends only on (seed, block index), not on n_paths
    small = simulate_ensemble(SPECS["A"], SimConfig(n_paths=BLOCK_SIZE, grid_points=3, master_seed=6))
    large = simulate_ensemble(SPECS["A"], SimConfig(n_paths=2 * BLOCK_SIZE, grid_points=3, master_seed=6))
    assert not np.array_equal(small.mean, large.mean)
    small2 = simulate_ensemble(SPECS["A"], SimConfig(n_paths=BLOCK_SIZE, grid_points=3, master_seed=6))
    assert np.array_equal(small.mean, small2.mean)


def test_conditional_jump_means():
    m = SPECS["AB"]
    stats = simulate_ensemble(m, SimConfig(n_paths=20_000, grid_points=2, master_seed=10))
    r = m.r
    expect_plus = r * mean_jump(m.a_law) + (1 - r) * mean_jump(m.b.law_pos)
    expect_minus = r * mean_jump(m.a_law) + (1 - r) * mean_jump(m.b.law_neg)
    assert abs(stats.cond_mean[0] - expect_plus) < Z * stats.cond_stderr[0]
    assert abs(stats.cond_mean[1] - expect_minus) < Z * stats.cond_stderr[1]
    assert stats.cond_count.sum() == stats.n_jumps


def test_bins_cover_all_jumps():
    stats = simulate_ensemble(SPECS["B"], SimConfig(n_paths=5000, grid_points=11, master_seed=1))
    assert stats.bin_total.sum() == stats.n_jumps
    assert stats.bin_positive.sum() == stats.n_positive
    assert len(stats.bin_total) == 10


def test_stationary_start_has_flat_sign_fraction():
    b = SPECS["B"]
    stats = simulate_ensemble(b, SimConfig(n_paths=20_000, grid_points=11, master_seed=12))
    frac = stats.bin_positive / stats.bin_total
    se = np.sqrt(beta(b) * (1 - beta(b)) / stats.bin_total)
    assert np.all(np.abs(frac - beta(b)) < Z * se)


def test_forced_initial_sign_shifts_early_mean():
    b = SPECS["B"]
    pos = simulate_ensemble(b, SimConfig(n_paths=20_000, grid_points=11, master_seed=3, initial_sign="positive"))
    neg = simulate_ensemble(b, SimConfig(n_paths=20_000, grid_points=11, master_seed=3, initial_sign="negative"))
    assert pos.mean[1] - neg.mean[1] > Z * math.hypot(pos.stderr[1], neg.stderr[1])


def test_empirical_sign_fraction():
    m = fig2_spec(0.02)
    p, se = empirical_sign_fraction(m, SimConfig(n_paths=5000, master_seed=21))
    assert abs(p - alpha(m)) < Z * se
    quiet = MemorylessSpec(1e-3, JumpLaw(0.5, 1, 1))
    with pytest.raises(InsufficientEventsError):
        empirical_sign_fraction(quiet, SimConfig(n_paths=100, master_seed=0))


def test_at_rejects_off_grid_time():
    stats = simulate_ensemble(SPECS["A"], SimConfig(n_paths=100, grid_points=3, master_seed=0))
    with pytest.raises(KeyError):
        stats.at(0.3)
    assert stats.at(0.5)[0] == stats.mean[1]


def test_module_constants():
    assert simulate.ENSEMBLE_STREAM != simulate.PATH_STREAM
