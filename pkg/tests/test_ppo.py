import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kanppo.envs import make_env
from kanppo.networks import ARCHS, NetworkSpec, build_network
from kanppo.nn_core import NonFiniteError, finite_diff_check, make_rng, zero_grads
from kanppo.policy import entropy, gaussian_log_prob, log_prob_backward
from kanppo.ppo import (
    Minibatch,
    PpoConfig,
    clip_objective,
    combined_loss,
    evaluate_policy,
    l_pg,
    make_optimizer,
    ppo_update,
    ratio,
    train,
)
from kanppo.rl_core import AdvantageBatch, RolloutBuffer


def test_ratio():
    assert ratio(-1.3, -1.3) == 1.0
    assert ratio(np.log(2.0), 0.0) == pytest.approx(2.0, rel=1e-15)
    assert ratio(0.3, -0.4) == pytest.approx(np.exp(0.7), rel=1e-15)
    assert ratio(1000.0, 0.0) == np.exp(20.0)
    assert ratio(-1000.0, 0.0) == np.exp(-20.0)


def test_clip_objective_examples():
    assert clip_objective(1.5, 1.0, 0.2) == pytest.approx(1.2)
    assert clip_objective(0.5, -1.0, 0.2) == pytest.approx(-0.8)
    for adv in (-3.0, 0.0, 2.5):
        assert clip_objective(1.0, adv, 0.2) == adv


@settings(max_examples=300, deadline=None)
@given(st.floats(1e-3, 10.0), st.floats(-10.0, 10.0), st.floats(1e-3, 0.9))
def test_clip_objective_pessimistic(r, adv, eps):
    assert clip_objective(r, adv, eps) <= r * adv


def test_l_pg():
    assert l_pg(np.array([-1.0, -2.0]), np.zeros(2)) == 0.0
    assert l_pg(np.array([-1.0]), np.array([2.0])) == -2.0


def test_l_pg_gradient_is_score_function_estimator():
    net = build_network(NetworkSpec("kan-actor"), 4, 2, seed=1)
    rng = make_rng(4)
    obs, act, adv = rng.normal(size=(6, 4)), rng.normal(size=(6, 2)), rng.normal(size=6)

    def loss(_):
        # gradient of mean(logp * A) is mean(grad logp * A)
        logp = log_prob_backward(net, obs, act, adv / len(adv))
        return l_pg(logp, adv)

    assert finite_diff_check(loss, net.params) <= 1e-5


def kink_free_batch(net, rng, n=8, eps=0.2):
    """Random minibatch whose ratios stay 0.02 away from 1 +- eps so central
    differences never straddle a clip kink."""
    obs = rng.normal(size=(n, net.obs_dim))
    act = net.mean(obs) + rng.normal(size=(n, net.act_dim)) * np.exp(net.log_std)
    logp = gaussian_log_prob(net.mean(obs), net.log_std, act)
    lo, hi = 1 - eps, 1 + eps
    bands = [(0.5, lo - 0.02), (lo + 0.02, hi - 0.02), (hi + 0.02, 1.6)]
    r = np.array([rng.uniform(*bands[rng.integers(3)]) for _ in range(n)])
    return Minibatch(obs, act, logp - np.log(r), rng.normal(size=n), rng.normal(size=n))


@pytest.mark.parametrize("arch", ARCHS)
def test_combined_loss_gradcheck(arch):
    rng = make_rng(11)
    net = build_network(NetworkSpec(arch, hidden_width=8), 5, 2, seed=2)
    net.params.values[:] += rng.normal(0, 0.05, len(net.params))
    cfg = PpoConfig(c1=0.5, c2=0.01)
    batch = kink_free_batch(net, rng)
    assert finite_diff_check(lambda _: combined_loss(batch, net, cfg).total_loss, net.params) <= 1e-5


def test_combined_loss_at_old_policy():
    net = build_network(NetworkSpec("mlp-a1c2"), 3, 1, seed=0)
    rng = make_rng(1)
    obs = rng.normal(size=(16, 3))
    act = rng.normal(size=(16, 1))
    logp = gaussian_log_prob(net.mean(obs), net.log_std, act)
    adv = rng.normal(size=16)
    adv = (adv - adv.mean()) / adv.std()
    ret = rng.normal(size=16)
    cfg = PpoConfig(c1=0.5, c2=0.01)
    rep = combined_loss(Minibatch(obs, act, logp, adv, ret), net, cfg)
    assert abs(rep.l_clip) <= 1e-12
    assert rep.total_loss == pytest.approx(0.5 * rep.l_vf - 0.01 * entropy(net), abs=1e-12)
    assert rep.approx_kl == 0.0 and rep.clip_fraction == 0.0

    cfg0 = PpoConfig(c1=0.0, c2=0.0)
    batch = kink_free_batch(net, rng, n=16)
    rep = combined_loss(batch, net, cfg0)
    r = ratio(gaussian_log_prob(net.mean(batch.obs), net.log_std, batch.actions), batch.logp_old)
    assert rep.total_loss == pytest.approx(-np.mean(clip_objective(r, batch.advantages, 0.2)), abs=1e-14)
    assert 0.0 <= rep.clip_fraction <= 1.0


def test_combined_loss_nonfinite():
    net = build_network(NetworkSpec("mlp-a1c2"), 3, 1, seed=0)
    b = Minibatch(np.zeros((2, 3)), np.zeros((2, 1)), np.zeros(2), np.array([np.nan, 0.0]), np.zeros(2))
    with pytest.raises(NonFiniteError, match="l_clip"):
        combined_loss(b, net, PpoConfig())


def filled_buffer(net, rng, T=32):
    buf = RolloutBuffer(T, net.obs_dim, net.act_dim)
    buf.obs[:] = rng.normal(size=(T, net.obs_dim))
    buf.actions[:] = net.mean(buf.obs) + rng.normal(size=(T, net.act_dim))
    buf.log_probs[:] = gaussian_log_prob(net.mean(buf.obs), net.log_std, buf.actions)
    buf.values[:] = net.value(buf.obs)
    buf.size = T
    return buf


def test_ppo_update_single_step():
    net = build_network(NetworkSpec("kan-actor"), 4, 2, seed=0)
    rng = make_rng(0)
    buf = filled_buffer(net, rng)
    adv = AdvantageBatch(rng.normal(size=32), rng.normal(size=32), 0.99, 0.95)
    cfg = PpoConfig(epochs=1, minibatch=32, horizon=32)
    opt = make_optimizer(net, cfg)
    reports = ppo_update(net, buf, adv, cfg, opt, rng)
    assert len(reports) == 1 and opt.t == 1
    cfg = PpoConfig(epochs=3, minibatch=10, horizon=32)
    assert len(ppo_update(net, buf, adv, cfg, make_optimizer(net, cfg), rng)) == 3 * 4


def test_ppo_update_zero_signal_is_noop():
    net = build_network(NetworkSpec("full-kan"), 4, 2, seed=0)
    rng = make_rng(0)
    buf = filled_buffer(net, rng)
    adv = AdvantageBatch(np.zeros(32), rng.normal(size=32), 0.99, 0.95)
    before = net.params.values.copy()
    cfg = PpoConfig(epochs=2, minibatch=8, horizon=32, c1=0.0, c2=0.0)
    ppo_update(net, buf, adv, cfg, make_optimizer(net, cfg), rng)
    assert np.array_equal(net.params.values, before)


def test_ppo_update_moves_policy():
    net = build_network(NetworkSpec("kan-actor"), 4, 2, seed=0)
    rng = make_rng(0)
    buf = filled_buffer(net, rng, T=64)
    adv = AdvantageBatch(rng.normal(size=64), rng.normal(size=64), 0.99, 0.95)
    cfg = PpoConfig(epochs=4, minibatch=16, horizon=64, lr=1e-2)
    ppo_update(net, buf, adv, cfg, make_optimizer(net, cfg), rng)
    r = ratio(gaussian_log_prob(net.mean(buf.obs), net.log_std, buf.actions), buf.log_probs)
    assert abs(r.mean() - 1.0) > 1e-3


def small_cfg(**kw):
    base = dict(horizon=64, minibatch=16, epochs=2, total_steps=64, eval_episodes=2)
    base.update(kw)
    return PpoConfig(**base)


def run(arch="kan-actor", seed=0, **kw):
    env = make_env("point-reacher")
    net = build_network(NetworkSpec(arch), 6, 2, seed, env.action_low, env.action_high)
    rows = []
    res = train(env, net, small_cfg(**kw), make_rng(seed), rows.append, seed=seed)
    return res, rows


def test_train_one_cycle():
    res, rows = run()
    assert len(rows) == 1 and rows[0].env_step == 64
    assert res.normalizer.frozen and res.normalizer.count == 64


def test_train_deterministic():
    a, rows_a = run(total_steps=192, seed=3)
    b, rows_b = run(total_steps=192, seed=3)
    assert [r.env_step for r in rows_a] == [64, 128, 192]
    assert [repr(r) for r in rows_a] == [repr(r) for r in rows_b]
    assert a.net.params.values.tobytes() == b.net.params.values.tobytes()
    c, _ = run(total_steps=192, seed=4)
    assert c.net.params.values.tobytes() != a.net.params.values.tobytes()


def test_evaluate_policy_deterministic():
    res, _ = run(total_steps=64)
    env = make_env("point-reacher")
    a = evaluate_policy(res.net, env, res.normalizer, 3)
    b = evaluate_policy(res.net, env, res.normalizer, 3)
    assert np.array_equal(a, b) and res.normalizer.count == 64


def test_config_validation():
    for kw in (dict(epsilon=0.0), dict(epochs=0), dict(minibatch=128, horizon=64), dict(gamma=1.2), dict(lr=-1.0)):
        with pytest.raises(ValueError):
            PpoConfig(**kw)
