import numpy as np
import pytest

from amwg import sample_store
from amwg.integrate import assemble_terminal, em_full, em_local, rk4_full, rk4_local
from amwg.likelihood import (
    ObservationModel,
    every_other,
    load_vector_csv,
    local_pm_log_ratio,
    observation_matrix,
    ode_loglik,
    pm_loglik,
    save_vector_csv,
)
from amwg.model import linear_flow, lorenz96
from amwg.prior import GaussianPrior, conditional_block_sample, sample_prior


def test_every_other_layout():
    H = every_other(6)
    assert H.shape == (3, 6)
    assert [int(np.flatnonzero(r)[0]) for r in H] == [0, 2, 4]
    with pytest.raises(ValueError):
        every_other(5)


def test_observation_model_validation():
    with pytest.raises(ValueError):
        ObservationModel(np.array([[1.0, 0.0], [0.0, 0.0]]), np.eye(2), np.zeros(2))
    with pytest.raises(ValueError):
        ObservationModel(np.eye(2), np.array([[1.0, 2.0], [2.0, 1.0]]), np.zeros(2))
    with pytest.raises(ValueError):
        ObservationModel(np.eye(2), np.eye(2), np.zeros(3))


def test_ode_loglik_examples():
    x = np.array([1.0, -2.0, 0.5, 3.0])
    obs = ObservationModel(np.eye(4), np.eye(4), x)
    assert ode_loglik(obs, x) == 0.0
    e = np.zeros(4)
    e[2] = 1.0
    assert ode_loglik(obs, x - e) == pytest.approx(-0.5)
    obs2 = ObservationModel(np.eye(4), 2 * np.eye(4), np.ones(4))
    assert ode_loglik(obs2, np.zeros(4)) == pytest.approx(-1.0, rel=1e-15)


def test_ode_loglik_correlated_noise(rng):
    R = np.array([[2.0, 0.5], [0.5, 1.0]])
    H = rng.standard_normal((2, 3))
    y = rng.standard_normal(2)
    x = rng.standard_normal(3)
    r = y - H @ x
    obs = ObservationModel(H, R, y)
    assert ode_loglik(obs, x) == pytest.approx(-0.5 * r @ np.linalg.solve(R, r), rel=1e-12)


def test_pm_loglik_reductions(rng):
    obs = ObservationModel(every_other(6), 0.5 * np.eye(3), rng.standard_normal(3))
    x = rng.standard_normal(6)
    assert pm_loglik(obs, x[None]) == pytest.approx(ode_loglik(obs, x), rel=1e-14)
    assert pm_loglik(obs, np.tile(x, (7, 1))) == pytest.approx(ode_loglik(obs, x), rel=1e-14)


def test_pm_loglik_two_states():
    obs = ObservationModel(np.eye(1), np.eye(1), np.zeros(1))
    # exponents 0 and -2
    got = pm_loglik(obs, np.array([[0.0], [2.0]]))
    assert got == pytest.approx(np.log((1 + np.exp(-2.0)) / 2), rel=1e-14)


def test_pm_loglik_matches_naive_and_survives_underflow(rng):
    obs = ObservationModel(np.eye(3), np.eye(3), np.zeros(3))
    X = rng.standard_normal((5, 3))
    naive = np.log(np.mean(np.exp(-0.5 * np.sum(X**2, axis=1))))
    assert pm_loglik(obs, X) == pytest.approx(naive, rel=1e-13)
    far = X + 60.0
    with np.errstate(under="ignore"):
        assert np.mean(np.exp(-0.5 * np.sum(far**2, axis=1))) == 0.0
    val = pm_loglik(obs, far)
    q = -0.5 * np.sum(far**2, axis=1)
    assert np.isfinite(val)
    assert q.max() - np.log(5) <= val <= q.max()


def test_observation_io(tmp_path, rng):
    obs = ObservationModel(every_other(4), np.diag([0.5, 2.0]), rng.standard_normal(2))
    obs.save(tmp_path / "obs")
    back = ObservationModel.load(tmp_path / "obs")
    np.testing.assert_array_equal(back.H, obs.H)
    np.testing.assert_array_equal(back.R, obs.R)
    np.testing.assert_array_equal(back.y, obs.y)
    save_vector_csv(tmp_path / "v.csv", np.array([1.5]))
    np.testing.assert_array_equal(load_vector_csv(tmp_path / "v.csv"), [1.5])
    np.savetxt(tmp_path / "H.csv", np.eye(4)[:2], delimiter=",")
    np.testing.assert_array_equal(observation_matrix(str(tmp_path / "H.csv"), 4), np.eye(4)[:2])
    with pytest.raises(ValueError):
        observation_matrix(str(tmp_path / "H.csv"), 5)
    np.testing.assert_array_equal(observation_matrix("identity", 3), np.eye(3))


def test_window_keeps_only_rows_inside():
    H = np.zeros((3, 10))
    H[0, 0] = 1
    H[1, [4, 5]] = 1  # reads components 4 and 5
    H[2, [3, 8]] = 1
    obs = ObservationModel(H, np.eye(3), np.zeros(3))
    win = obs.window(2, 2, 4)  # block 2 is components 4,5; window 3..6
    assert sorted(win.comps.tolist()) == [3, 4, 5, 6]
    assert win.rows.tolist() == [1]
    assert obs.window(0, 2, 10).rows.tolist() == [0, 1, 2]
    with pytest.raises(ValueError):
        obs.window(0, 2, 1)


@pytest.fixture(scope="module")
def pm_setup():
    model = linear_flow(40, 2)
    prior = GaussianPrior.standard(40, 2)
    store = sample_store(21, 100, model.m, model.b, 40)
    rng = np.random.default_rng(22)
    truth = sample_prior(prior, rng)
    obs0 = ObservationModel(every_other(40), 0.01 * np.eye(20), np.zeros(20))
    xT = em_full(model, truth, store, 0.01, 0.4, c=[0]).terminal()[0]
    obs = obs0.with_data(obs0.simulate(xT, rng))
    return model, prior, obs, store, truth


def test_local_ratio_degenerates_to_full_ratio(pm_setup, rng):
    model, prior, obs, store, truth = pm_setup
    x = rng.standard_normal(model.n)
    base = em_full(model, x, store, 0.01, 0.4)
    for j in (0, 7, 19):
        xp = x.copy()
        xp[2 * j : 2 * j + 2] = conditional_block_sample(prior, x, j, rng)
        patch = em_local(model, xp, base, store, j, model.m // 2)
        full = pm_loglik(obs, em_full(model, xp, store, 0.01, 0.4).terminal()) - pm_loglik(obs, base.terminal())
        assert local_pm_log_ratio(obs, base, patch, model.n) == full
        assert local_pm_log_ratio(obs, base, em_local(model, x, base, store, j, 3), 20) == 0.0


def test_local_ratio_ode_exact_once_window_covers_domain(l96_prior, rng):
    model = lorenz96(40, 2)
    obs0 = ObservationModel(every_other(40), np.eye(20), np.zeros(20))
    x = sample_prior(l96_prior, rng)
    obs = obs0.with_data(obs0.simulate(x, rng))
    base = rk4_full(model, x, 0.01, 0.4)
    xp = x.copy()
    xp[10:12] += 1.0
    patch = rk4_local(model, xp, base, 5, 2)
    full = pm_loglik(obs, assemble_terminal(base, patch)) - pm_loglik(obs, base.terminal())
    # window of 12 components covers blocks 3..8, a superset of the domain
    assert local_pm_log_ratio(obs, base, patch, 12) == pytest.approx(full, rel=1e-12, abs=1e-12)


def test_local_ratio_converges_with_window(pm_setup):
    # averaged over proposals and noise draws from states near the data;
    # a single proposal need not be monotone when S > 1
    model, prior, obs, _, truth = pm_setup
    rng = np.random.default_rng(23)
    widths = np.arange(4, 41, 4)
    gaps = np.zeros(widths.size)
    for _ in range(100):
        x = truth + 0.3 * rng.standard_normal(model.n)
        store = sample_store(rng, 100, model.m, model.b, 40)
        base = em_full(model, x, store, 0.01, 0.4)
        j = int(rng.integers(model.m))
        xp = x.copy()
        xp[2 * j : 2 * j + 2] = conditional_block_sample(prior, x, j, rng)
        patch = em_local(model, xp, base, store, j, 4)
        full = local_pm_log_ratio(obs, base, patch, model.n)
        gaps += [abs(local_pm_log_ratio(obs, base, patch, w) - full) for w in widths]
    assert np.all(np.diff(gaps) <= 0)
    assert gaps[-1] == 0.0


def test_local_and_full_decisions_agree(pm_setup):
    model, prior, obs, store, truth = pm_setup
    rng = np.random.default_rng(24)
    x = sample_prior(prior, rng)
    base = em_full(model, x, store, 0.01, 0.4)
    agree = 0
    for _ in range(500):
        j = int(rng.integers(model.m))
        xp = x.copy()
        xp[2 * j : 2 * j + 2] = conditional_block_sample(prior, x, j, rng)
        patch = em_local(model, xp, base, store, j, 4)
        logu = np.log(rng.random())
        agree += (logu < local_pm_log_ratio(obs, base, patch, 20)) == (logu < local_pm_log_ratio(obs, base, patch, 40))
    assert agree / 500 >= 0.99
