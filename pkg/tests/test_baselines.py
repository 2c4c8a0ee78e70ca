import math

import numpy as np
import pytest

from ppod import nn, policy, ppo
from ppod.baselines import (
    DemoDataset,
    bc_loss,
    bc_loss_and_grads,
    bc_train,
    policy_layer_names,
    ppo_bc_update,
)
from ppod.replay import Origin, Trajectory


def make_policy(continuous=False, obs_dim=4, n_actions=3, hidden=(8,), seed=0):
    rng = np.random.default_rng(seed)
    return policy.build_policy_params(obs_dim, n_actions, continuous, rng, hidden=hidden)


def pairs(seed=1, n=12, obs_dim=4, n_actions=3, continuous=False):
    rng = np.random.default_rng(seed)
    obs = rng.normal(size=(n, obs_dim))
    if continuous:
        actions = rng.normal(size=(n, n_actions)) * 0.5
    else:
        actions = rng.integers(0, n_actions, size=n)
    return obs, actions


def rollout_batch(seed=12, N=2, T=8, obs_dim=3, n_actions=4):
    rng = np.random.default_rng(seed)
    params = policy.build_policy_params(obs_dim, n_actions, False, rng, hidden=(8,))
    L = N * T
    dones = rng.random(L) < 0.2
    dones[T - 1] = True
    dones[-1] = True
    batch = ppo.RolloutBatch(
        obs=rng.normal(size=(L, obs_dim)),
        actions=rng.integers(0, n_actions, size=L),
        rewards=rng.normal(size=L),
        dones=dones,
        behavior_log_probs=np.log(rng.uniform(0.1, 0.9, size=L)),
        is_replay=np.zeros(L, dtype=bool),
        values=rng.normal(size=L),
        num_actors=N,
        horizon=T,
    )
    ppo.compute_gae(batch, np.zeros(N), 0.99, 0.95)
    return params, batch


def demo_dataset_for(params, seed=3, n=24):
    obs_dim = policy.obs_dim_of(params)
    a = policy.action_dim_of(params)
    obs, actions = pairs(seed, n, obs_dim, a, policy.is_continuous(params))
    kind = "box" if policy.is_continuous(params) else "discrete"
    return DemoDataset(observations=obs, actions=actions, kind=kind)


# ------------------------------------------------------------------- losses


def test_ce_is_one_when_prob_is_inverse_e():
    params = make_policy(obs_dim=2, n_actions=2, hidden=(4,))
    # zero the trunk so the logits are exactly the head bias
    for name in params.names():
        w, b = params[name]
        w[:] = 0.0
        b[:] = 0.0
    params["pi"][1][:] = [0.0, math.log(math.e - 1.0)]  # softmax -> [1/e, ...]
    obs = np.zeros((1, 2))
    loss = bc_loss(params, obs, np.array([0]), "discrete")
    assert abs(loss - 1.0) < 1e-12


def test_ce_is_zero_when_policy_deterministic_on_demo():
    params = make_policy(obs_dim=2, n_actions=3, hidden=(4,))
    for name in params.names():
        w, b = params[name]
        w[:] = 0.0
        b[:] = 0.0
    params["pi"][1][:] = [60.0, 0.0, 0.0]
    loss = bc_loss(params, np.zeros((5, 2)), np.zeros(5, dtype=int), "discrete")
    assert loss < 1e-12


def test_mse_is_zero_when_mean_matches_demo():
    params = make_policy(continuous=True)
    obs, _ = pairs(continuous=True)
    mean = policy.forward_policy(params, obs).head
    assert bc_loss(params, obs, mean, "box") == 0.0


def test_mse_value_oracle():
    params = make_policy(continuous=True, n_actions=2)
    obs, _ = pairs(n=2, n_actions=2, continuous=True)
    mean = policy.forward_policy(params, obs).head
    delta = np.array([[1.0, 2.0], [3.0, 4.0]])
    loss = bc_loss(params, obs, mean + delta, "box")
    assert abs(loss - np.mean(delta ** 2)) < 1e-12  # (1+4+9+16)/4


def test_ce_matches_loop_oracle():
    params = make_policy(seed=9)
    obs, actions = pairs(seed=4)
    loss = bc_loss(params, obs, actions, "discrete")
    total = 0.0
    for i in range(len(obs)):
        out = policy.policy_output(params, obs[i])
        z = out.logits - out.logits.max()
        logp = z - np.log(np.exp(z).sum())
        total += -logp[actions[i]]
    assert abs(loss - total / len(obs)) < 1e-12


def test_bc_loss_permutation_invariant():
    params = make_policy()
    obs, actions = pairs()
    perm = np.random.default_rng(0).permutation(len(obs))
    a = bc_loss(params, obs, actions, "discrete")
    b = bc_loss(params, obs[perm], actions[perm], "discrete")
    assert abs(a - b) < 1e-12


def test_kind_mismatch_is_a_configuration_error():
    disc = make_policy()
    cont = make_policy(continuous=True)
    obs, actions = pairs()
    with pytest.raises(ValueError, match="policy head"):
        bc_loss(disc, obs, actions, "box")
    with pytest.raises(ValueError, match="policy head"):
        bc_loss(cont, obs, actions, "discrete")


def test_empty_batch_rejected():
    params = make_policy()
    with pytest.raises(ValueError, match="empty"):
        bc_loss(params, np.zeros((0, 4)), np.zeros(0, dtype=int), "discrete")


# ---------------------------------------------------------------- gradients


def test_grads_zero_outside_trunk_and_pi():
    params = make_policy(continuous=True)
    obs, actions = pairs(continuous=True)
    _, grads = bc_loss_and_grads(params, obs, actions)
    for name in ("vf", "log_std"):
        dw, db = grads[name]
        assert not dw.any() and not db.any()
    assert grads["pi"][0].any()
    assert grads["body.0"][0].any()


@pytest.mark.parametrize("continuous", [False, True])
def test_bc_gradients_match_finite_differences(continuous):
    params = make_policy(continuous=continuous, obs_dim=3, n_actions=2, hidden=(5,))
    obs, actions = pairs(n=6, obs_dim=3, n_actions=2, continuous=continuous)

    report = nn.grad_check(
        params, lambda p: bc_loss_and_grads(p, obs, actions), tolerance=1e-4
    )
    assert report.passed, report.per_param


# ----------------------------------------------------------------- training


def test_bc_train_zero_steps_is_noop():
    params = make_policy()
    before = params.copy()
    data = demo_dataset_for(params)
    _, losses = bc_train(params, data, steps=0, lr=1e-3)
    assert losses == []
    assert params.allclose(before)


def test_bc_train_overfits_ten_pairs():
    """10 distinct pairs, 2000 full-batch steps: loss collapses and the
    5-point moving average of the trace never rises."""
    params = make_policy(obs_dim=6, n_actions=5, hidden=(16,))
    rng = np.random.default_rng(2)
    data = DemoDataset(
        observations=rng.normal(size=(10, 6)),
        actions=rng.integers(0, 5, size=10),
        kind="discrete",
    )
    _, losses = bc_train(
        params, data, steps=2000, lr=1e-3, batch_size=10,
        rng=np.random.default_rng(0),
    )
    assert losses[-1] < 0.05
    ma = np.convolve(losses, np.ones(5) / 5, mode="valid")
    assert np.all(np.diff(ma) <= 1e-9)


def test_bc_train_never_moves_value_head_or_log_std():
    params = make_policy(continuous=True)
    vf_before = (params["vf"][0].copy(), params["vf"][1].copy())
    ls_before = (params["log_std"][0].copy(), params["log_std"][1].copy())
    data = demo_dataset_for(params)
    bc_train(params, data, steps=50, lr=1e-2, rng=np.random.default_rng(1))
    assert np.array_equal(params["vf"][0], vf_before[0])
    assert np.array_equal(params["vf"][1], vf_before[1])
    assert np.array_equal(params["log_std"][0], ls_before[0])
    assert np.array_equal(params["log_std"][1], ls_before[1])
    assert policy_layer_names(params) == {"body.0", "pi"}


def test_bc_train_small_dataset_batches_clamp():
    params = make_policy()
    data = demo_dataset_for(params, n=3)
    _, losses = bc_train(params, data, steps=7, lr=1e-3, batch_size=64)
    assert len(losses) == 7


# ---------------------------------------------------------------- datasets


def test_demo_dataset_from_trajectories():
    def traj(n, kind_int, tid):
        acts = (np.arange(n) % 3 if kind_int
                else np.random.default_rng(tid).normal(size=(n, 2)))
        return Trajectory(
            observations=np.full((n, 4), float(tid)),
            actions=acts,
            rewards=np.zeros(n),
            origin=Origin.HUMAN_DEMO,
            id=tid,
        )

    data = DemoDataset.from_trajectories([traj(3, True, 1), traj(5, True, 2)])
    assert len(data) == 8
    assert data.kind == "discrete"
    assert (data.observations[:3] == 1.0).all()
    assert (data.observations[3:] == 2.0).all()

    with pytest.raises(ValueError, match="mixed action kinds"):
        DemoDataset.from_trajectories([traj(3, True, 1), traj(3, False, 2)])
    with pytest.raises(ValueError, match="no trajectories"):
        DemoDataset.from_trajectories([])


def test_demo_dataset_validation():
    with pytest.raises(ValueError, match="empty"):
        DemoDataset(np.zeros((0, 3)), np.zeros(0, dtype=int), "discrete")
    with pytest.raises(ValueError, match="counts differ"):
        DemoDataset(np.zeros((3, 2)), np.zeros(2, dtype=int), "discrete")


# ------------------------------------------------------------- mixed update


def mixed_setup(seed=12):
    params, batch = rollout_batch(seed=seed)
    demos = demo_dataset_for(params, seed=seed + 1, n=30)
    cfg = ppo.TrainConfig(epochs=2, minibatches=4, num_actors=2, horizon=8, lr=1e-3)
    return params, batch, demos, cfg


def test_rho_zero_is_bit_identical_to_plain_ppo():
    params_a, batch = rollout_batch()
    params_b = params_a.copy()
    demos = demo_dataset_for(params_a, n=10)
    cfg = ppo.TrainConfig(epochs=3, minibatches=4, num_actors=2, horizon=8, lr=1e-3)
    adam_a = nn.AdamState.for_params(params_a, eps=cfg.adam_eps)
    adam_b = nn.AdamState.for_params(params_b, eps=cfg.adam_eps)

    _, reports_a = ppo.ppo_update(params_a, adam_a, batch, cfg, np.random.default_rng(5))
    _, reports_b, bc_trace = ppo_bc_update(
        params_b, adam_b, batch, demos, 0.0, cfg,
        np.random.default_rng(5), np.random.default_rng(99),
    )
    assert bc_trace == []
    for name, (w, b) in params_a:
        assert np.array_equal(w, params_b[name][0]), name
        assert np.array_equal(b, params_b[name][1]), name
    assert reports_a == reports_b


def test_rho_one_clones_and_leaves_value_head_alone():
    params, batch, demos, cfg = mixed_setup()
    adam = nn.AdamState.for_params(params, eps=cfg.adam_eps)
    vf_before = (params["vf"][0].copy(), params["vf"][1].copy())
    pi_before = params["pi"][0].copy()

    _, reports, bc_trace = ppo_bc_update(
        params, adam, batch, demos, 1.0, cfg,
        np.random.default_rng(0), np.random.default_rng(1),
    )
    assert reports == []  # no PPO slots anywhere
    assert len(bc_trace) == cfg.epochs * cfg.minibatches
    assert np.array_equal(params["vf"][0], vf_before[0])
    assert np.array_equal(params["vf"][1], vf_before[1])
    assert not np.array_equal(params["pi"][0], pi_before)
    # optimizer moments for the value head never accumulated either
    assert not adam.m["vf"][0].any()


def test_bc_slot_frequency_matches_rho():
    """~10000 slot draws at rho=0.3 -> clone fraction within +/-0.02."""
    params, batch, demos, _ = mixed_setup()
    cfg = ppo.TrainConfig(epochs=5, minibatches=8, num_actors=2, horizon=8, lr=0.0)
    adam = nn.AdamState.for_params(params, eps=cfg.adam_eps)
    rng = np.random.default_rng(3)
    bc_rng = np.random.default_rng(4)

    total = bc_count = 0
    for _ in range(250):
        _, reports, bc_trace = ppo_bc_update(
            params, adam, batch, demos, 0.3, cfg, rng, bc_rng)
        total += cfg.epochs * cfg.minibatches
        bc_count += len(bc_trace)
    assert total == 10000
    assert abs(bc_count / total - 0.3) < 0.02


def test_literal_case_swaps_the_loss_assignment():
    params, batch, demos, cfg = mixed_setup()
    adam = nn.AdamState.for_params(params, eps=cfg.adam_eps)
    # demo branch at rho=1 now runs the PPO loss
    _, reports, bc_trace = ppo_bc_update(
        params, adam, batch, demos, 1.0, cfg,
        np.random.default_rng(0), np.random.default_rng(1), literal_case=True,
    )
    assert bc_trace == []
    assert len(reports) == cfg.epochs

    # env branch at rho=0 now clones the batch's own actions
    params, batch, demos, cfg = mixed_setup()
    adam = nn.AdamState.for_params(params, eps=cfg.adam_eps)
    vf_before = params["vf"][0].copy()
    _, reports, bc_trace = ppo_bc_update(
        params, adam, batch, demos, 0.0, cfg,
        np.random.default_rng(0), np.random.default_rng(1), literal_case=True,
    )
    assert reports == []
    assert len(bc_trace) == cfg.epochs * cfg.minibatches
    assert np.array_equal(params["vf"][0], vf_before)


def test_mixed_update_requires_gae():
    params, batch, demos, cfg = mixed_setup()
    batch.advantages = None
    adam = nn.AdamState.for_params(params)
    with pytest.raises(ValueError, match="advantages"):
        ppo_bc_update(params, adam, batch, demos, 0.5, cfg,
                      np.random.default_rng(0), np.random.default_rng(1))


def test_mixed_update_checks_demo_kind():
    params, batch, _, cfg = mixed_setup()
    bad = demo_dataset_for(make_policy(continuous=True, obs_dim=3, n_actions=4))
    adam = nn.AdamState.for_params(params)
    with pytest.raises(ValueError, match="policy head"):
        ppo_bc_update(params, adam, batch, bad, 0.5, cfg,
                      np.random.default_rng(0), np.random.default_rng(1))
