import numpy as np
import pytest

from amwg import sample_store
from amwg.errors import ContractViolation, DivergenceError, UnsupportedSchemeError
from amwg.integrate import (
    assemble_terminal,
    commit_patch,
    em_full,
    em_local,
    local_window,
    rk4_full,
    rk4_local,
    solve_full,
    time_steps,
)
from amwg.model import linear_flow, lorenz96
from amwg.prior import sample_prior
from helpers import local_error_vs_bound, perturbation_decay, surrogate_values


def decay_model(sigma=0.0):
    # dx = -x dt on a single component
    return linear_flow(1, 1, l=1.0, mu=0.0, nu=1.0, w=0.0, sigma_x=sigma)


def test_time_steps():
    assert time_steps(0.01, 0.4) == 40
    with pytest.raises(ValueError):
        time_steps(0.03, 0.4)
    with pytest.raises(ValueError):
        time_steps(0.0, 0.4)


def test_em_scalar_decay():
    cache = em_full(decay_model(), np.ones(1), None, 0.01, 0.4)
    assert cache.values.shape == (1, 41, 1, 1)
    assert cache.terminal()[0, 0] == pytest.approx(0.99**40, rel=1e-13)
    assert cache.terminal()[0, 0] == pytest.approx(0.6690, abs=1e-4)


def test_em_zero_dynamics_is_constant():
    model = linear_flow(6, 2, l=1.0, mu=0.0, nu=0.0, w=0.0, sigma_x=0.0)
    x0 = np.arange(6.0)
    cache = em_full(model, x0, None, 0.01, 0.4)
    np.testing.assert_array_equal(cache.values[0], np.broadcast_to(model.blocks(x0), (41, 3, 2)))


def test_em_uses_scaled_increments():
    model = linear_flow(4, 2, l=1.0, mu=0.0, nu=0.0, w=0.0, sigma_x=0.5)
    store = sample_store(1, 2, 2, 2, 4)
    cache = em_full(model, np.zeros(4), store, 0.25, 1.0)
    expect = 0.5 * np.sqrt(0.25) * np.cumsum(store.increments, axis=1)
    np.testing.assert_allclose(cache.values[:, 1:], expect, rtol=1e-14, atol=1e-15)


def test_em_realization_subset(linear_problem, rng):
    model, prior, obs, store = linear_problem
    x0 = rng.standard_normal(model.n)
    everything = em_full(model, x0, store, 0.01, 0.4)
    two = em_full(model, x0, store, 0.01, 0.4, c=[3, 7])
    np.testing.assert_array_equal(two.values, everything.values[[3, 7]])


def test_em_rejects_bad_grid_and_store(linear_problem):
    model, prior, obs, store = linear_problem
    with pytest.raises(ValueError):
        em_full(model, np.zeros(model.n), store, 0.03, 0.4)
    with pytest.raises(ValueError):
        em_full(model, np.zeros(model.n), None, 0.01, 0.4)
    with pytest.raises(ValueError):
        em_full(model, np.zeros(model.n), store, 0.02, 0.4)


def test_rk4_one_step_expansion():
    cache = rk4_full(decay_model(), np.ones(1), 0.01, 0.01)
    h = 0.01
    assert cache.terminal()[0, 0] == pytest.approx(1 - h + h**2 / 2 - h**3 / 6 + h**4 / 24, rel=1e-15)
    assert cache.rk4_stages.shape == (1, 1, 4, 1, 1)


def test_rk4_zero_drift_has_zero_stages():
    model = linear_flow(4, 2, l=1.0, mu=0.0, nu=0.0, w=0.0, sigma_x=0.0)
    cache = rk4_full(model, np.arange(4.0), 0.1, 0.5)
    assert np.all(cache.rk4_stages == 0)
    np.testing.assert_array_equal(cache.terminal()[0], np.arange(4.0))


def test_rk4_step_halving_lorenz(l96_prior, rng):
    model = lorenz96(40, 2)
    x0 = sample_prior(l96_prior, rng)
    xs = [rk4_full(model, x0, h, 0.4).terminal()[0] for h in (0.01, 0.005, 0.0025)]
    gaps = [np.max(np.abs(a - b)) for a, b in zip(xs, xs[1:])]
    # fourth order: each halving shrinks the gap about 16-fold
    assert 13 < gaps[0] / gaps[1] < 19
    # at h=0.01 the gap is a few 1e-6 to 2e-5 on this chaotic flow, not below 1e-6
    assert gaps[0] < 1e-4
    assert gaps[1] < 5e-6


def test_rk4_rejects_sde():
    with pytest.raises(UnsupportedSchemeError):
        rk4_full(linear_flow(4, 2), np.zeros(4), 0.01, 0.4)
    with pytest.raises(UnsupportedSchemeError):
        solve_full(lorenz96(4, 2), np.zeros(4), None, 0.01, 0.4, scheme="milstein")


def test_divergence_reports_location():
    model = lorenz96(8, 2)
    x0 = np.zeros(8)
    x0[3] = 1e150
    with pytest.raises(DivergenceError) as info:
        rk4_full(model, x0, 0.01, 0.4)
    assert info.value.step >= 0 and 0 <= info.value.block < model.m


def test_local_window_layout():
    blocks, left, right, active, halo = local_window(10, 1, 2)
    assert blocks.tolist() == [8, 9, 0, 1, 2, 3, 4]
    assert blocks[active].tolist() == [9, 0, 1, 2, 3]
    assert blocks[halo].tolist() == [8, 4]
    full = local_window(10, 4, 5)
    assert full[0].tolist() == list(range(10)) and full[4].size == 0
    with pytest.raises(ValueError):
        local_window(10, 0, -1)
    with pytest.raises(ValueError):
        local_window(10, 10, 1)


def _perturb(model, x, j, rng, scale=1.0):
    xp = x.copy()
    xp[j * model.b : (j + 1) * model.b] += scale * rng.standard_normal(model.b)
    return xp


def test_em_local_without_perturbation_matches_base(linear_problem, rng):
    model, prior, obs, store = linear_problem
    x0 = rng.standard_normal(model.n)
    base = em_full(model, x0, store, 0.01, 0.4)
    for j in (0, 4, model.m - 1):
        patch = em_local(model, x0, base, store, j, 2)
        np.testing.assert_array_equal(patch.values[:, :, patch.active], base.values[:, :, patch.active_blocks])


@pytest.mark.parametrize("j", [0, 3, 9])
def test_em_local_maximal_radius_is_full_solve(linear_problem, rng, j):
    model, prior, obs, store = linear_problem
    x0 = rng.standard_normal(model.n)
    base = em_full(model, x0, store, 0.01, 0.4)
    xp = _perturb(model, x0, j, rng)
    patch = em_local(model, xp, base, store, j, model.m // 2)
    assert patch.covers_torus
    assert patch.values.tobytes() == em_full(model, xp, store, 0.01, 0.4).values.tobytes()


@pytest.mark.parametrize("j", [0, 5, 19])
def test_rk4_local_degeneracy(l96_prior, rng, j):
    model = lorenz96(40, 2)
    x0 = sample_prior(l96_prior, rng)
    base = rk4_full(model, x0, 0.01, 0.4)
    same = rk4_local(model, x0, base, j, 4)
    np.testing.assert_array_equal(same.values[:, :, same.active], base.values[:, :, same.active_blocks])
    np.testing.assert_array_equal(same.rk4_stages[:, :, :, same.active], base.rk4_stages[:, :, :, same.active_blocks])
    xp = _perturb(model, x0, j, rng)
    patch = rk4_local(model, xp, base, j, model.m // 2)
    full = rk4_full(model, xp, 0.01, 0.4)
    assert patch.values.tobytes() == full.values.tobytes()
    assert patch.rk4_stages.tobytes() == full.rk4_stages.tobytes()


def test_em_local_error_largest_near_domain_edge(rng):
    model = linear_flow(8, 1)
    store = sample_store(2, 4, 8, 1, 40)
    x0 = rng.standard_normal(8)
    base = em_full(model, x0, store, 0.01, 0.4)
    xp = x0.copy()
    xp[0] += 1.0
    patch = em_local(model, xp, base, store, 0, 2)
    gap = np.abs(surrogate_values(base, patch) - em_full(model, xp, store, 0.01, 0.4).values)
    assert gap[:, :, 0].max() < gap[:, :, 2].max()


def test_local_rejects_proposal_outside_block(linear_problem, rng):
    model, prior, obs, store = linear_problem
    x0 = rng.standard_normal(model.n)
    base = em_full(model, x0, store, 0.01, 0.4)
    xp = _perturb(model, x0, 3, rng)
    with pytest.raises(ContractViolation):
        em_local(model, xp, base, store, 4, 2)


def test_rk4_local_needs_stages(linear_problem):
    model = lorenz96(20, 2)
    base = em_full(model, np.ones(20), None, 0.01, 0.4)
    with pytest.raises(ContractViolation):
        rk4_local(model, np.ones(20), base, 0, 2)


def test_commit_touches_only_the_domain(linear_problem, rng):
    model, prior, obs, store = linear_problem
    x0 = rng.standard_normal(model.n)
    base = em_full(model, x0, store, 0.01, 0.4)
    before = base.values.copy()
    xp = _perturb(model, x0, 5, rng)
    patch = em_local(model, xp, base, store, 5, 2)
    expect_T = assemble_terminal(base, patch)
    commit_patch(base, patch)
    outside = np.setdiff1d(np.arange(model.m), patch.active_blocks)
    assert base.values[:, :, outside].tobytes() == before[:, :, outside].tobytes()
    np.testing.assert_array_equal(base.terminal(), expect_T)


def test_commit_identity_patch_leaves_base(linear_problem, rng):
    model, prior, obs, store = linear_problem
    x0 = rng.standard_normal(model.n)
    base = em_full(model, x0, store, 0.01, 0.4)
    before = base.values.copy()
    commit_patch(base, em_local(model, x0, base, store, 2, 3))
    assert base.values.tobytes() == before.tobytes()


def test_commit_maximal_patch_equals_full_solve(linear_problem, rng):
    model, prior, obs, store = linear_problem
    x0 = rng.standard_normal(model.n)
    base = em_full(model, x0, store, 0.01, 0.4)
    xp = _perturb(model, x0, 7, rng)
    commit_patch(base, em_local(model, xp, base, store, 7, model.m // 2))
    assert base.values.tobytes() == em_full(model, xp, store, 0.01, 0.4).values.tobytes()


def test_commit_rejects_mismatched_patch(linear_problem, rng):
    model, prior, obs, store = linear_problem
    x0 = rng.standard_normal(model.n)
    base = em_full(model, x0, store, 0.01, 0.4)
    patch = em_local(model, x0, base, store, 0, 2)
    other = em_full(model, x0, store, 0.01, 0.4, c=[0])
    with pytest.raises(ContractViolation):
        commit_patch(other, patch)


def test_em_strong_order_one():
    # additive noise: Euler-Maruyama converges with strong order 1
    model = linear_flow(8, 1, l=0.5, mu=0.1, nu=0.2, w=0.5, sigma_x=0.3)
    T, fine = 0.4, 640
    store = sample_store(4, 50, 8, 1, fine)
    x0 = np.random.default_rng(0).standard_normal(8)
    ref = em_full(model, x0, store, T / fine, T).terminal()

    def coarse(k):
        W = store.increments.reshape(50, fine // k, k, 8, 1).sum(axis=2) / np.sqrt(k)
        from amwg import BrownianStore

        return em_full(model, x0, BrownianStore(W), T * k / fine, T).terminal()

    errs = [np.sqrt(np.mean(np.sum((coarse(k) - ref) ** 2, axis=1))) for k in (32, 16, 8)]
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 1.6) & (ratios < 2.5)), ratios


def test_local_error_within_discrete_bound():
    model = linear_flow(20, 2, l=1.0, mu=0.1, nu=0.1, w=0.2)
    store = sample_store(3, 5, model.m, model.b, 40)
    worst = local_error_vs_bound(model, store, np.random.default_rng(1), 2, [0.5, 1.0, 2.0], 20, 0.01, 0.4)
    assert np.all(worst <= 1.0)


def test_perturbation_effect_decays_with_distance():
    model = linear_flow(40, 2)
    store = sample_store(4, 5, model.m, model.b, 40)
    dist, log_msd, fit = perturbation_decay(model, store, np.random.default_rng(2), 30, 0.01, 0.4)
    assert fit.slope < 0 and fit.pvalue < 0.01
