"""The training loop end to end: N actors fill a rollout segment from live
envs and the two replay buffers, GAE runs over the segment, the learner
updates, finished live episodes are routed into the buffers (annealing the
replay schedule), and metrics/checkpoints stream to disk.

Everything is strictly serial and seeded from one root, so a run is
reproducible bit for bit: actor i's generator is consumed only by actor
i's own episode-source draws and action samples, never by batch peers.
"""

from __future__ import annotations

import collections
import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .baselines import DemoDataset, bc_train, ppo_bc_update
from .config import ConfigError, RunConfig, dump_config, initial_value_cap
from .demo_io import load_demos
from .envs import make_env
from .policy import (
    act_batch,
    build_policy_params,
    greedy_action,
    is_continuous,
    value_of,
)
from .ppo import LossReport, RolloutBatch, UpdateAborted, compute_gae, ppo_update
from .replay import (
    Origin,
    ReplayScheduler,
    RewardBuffer,
    Source,
    Trajectory,
    ValueBuffer,
    insert_episode,
    refresh_priority,
    sample_reward_traj,
    sample_value_traj,
    select_source,
)

METRICS_FIELDS = (
    "update", "live_frames", "mean_return", "success_rate", "rho", "phi",
    "dr_size", "dv_size", "surrogate", "value_loss", "entropy", "clip_fraction",
)

CHECKPOINT_NAME = "checkpoint.json"
METRICS_NAME = "metrics.csv"


class TrainingHalted(RuntimeError):
    """The learner hit a non-finite loss; a checkpoint was written first."""


@dataclass
class _Actor:
    """One rollout lane: either stepping its private env or copying out a
    stored trajectory. mode '' means the next collect step must pick a new
    episode source."""

    env: object
    rng: np.random.Generator
    mode: str = ""              # "" | "live" | "replay"
    obs: np.ndarray | None = None
    traj: Trajectory | None = None
    pos: int = 0
    ep_obs: list = field(default_factory=list)
    ep_actions: list = field(default_factory=list)
    ep_rewards: list = field(default_factory=list)


@dataclass
class RunState:
    cfg: RunConfig
    params: nn.ParameterSet
    adam: nn.AdamState
    sched: ReplayScheduler
    dr: RewardBuffer
    dv: ValueBuffer
    actors: list
    update_rng: np.random.Generator
    bc_rng: np.random.Generator
    demo_trajectories: list
    replay_enabled: bool
    live_frames: int = 0
    updates: int = 0
    next_traj_id: int = 0
    recent_returns: collections.deque = field(
        default_factory=lambda: collections.deque(maxlen=100))

    def value_fn(self, obs_matrix):
        return value_of(self.params, obs_matrix, self.cfg.train.activation)


@dataclass
class EvalReport:
    episodes: int
    success_rate: float
    mean_return: float
    mean_length: float


def _seed_int(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1, np.uint64)[0])


def setup_run(cfg: RunConfig) -> RunState:
    """Build params, envs, buffers and rng streams for a run.

    Stream layout under SeedSequence(cfg.seed): one child per env, one per
    actor, then init/update/bc children — fixed, so runs with equal seeds
    are replicas.
    """
    cfg.validate()
    N = cfg.train.num_actors
    root = np.random.SeedSequence(cfg.seed)
    env_seqs = root.spawn(N)
    actor_seqs = root.spawn(N)
    init_seq, update_seq, bc_seq = root.spawn(3)

    actors = []
    for i in range(N):
        env = make_env(cfg.task, seed=_seed_int(env_seqs[i]),
                       frame_stack=cfg.frame_stack)
        actors.append(_Actor(env=env, rng=np.random.default_rng(actor_seqs[i])))
    probe = actors[0].env
    continuous = cfg.task.startswith("reacher")
    action_dim = 2 if continuous else 9
    params = build_policy_params(
        probe.obs_dim, action_dim, continuous,
        np.random.default_rng(init_seq), hidden=cfg.hidden_sizes,
    )

    demos = load_demos(cfg.demos, cfg.task, cfg.frame_stack)
    for t in demos:
        if t.observations.shape[1] != probe.obs_dim:
            raise ConfigError(
                f"demo {t.id} observation width {t.observations.shape[1]} "
                f"does not match env width {probe.obs_dim}"
            )
    if cfg.algo == "ppod" and cfg.rho > 0 and not demos:
        raise ConfigError("rho > 0 needs at least one demonstration file")
    if cfg.algo in ("ppo_bc", "bc") and not demos:
        raise ConfigError(f"algo {cfg.algo} needs demonstration files")

    # vanilla PPO is the same engine with both replay probabilities pinned
    rho, phi = (0.0, 0.0) if cfg.algo == "ppo" else (cfg.rho, cfg.phi)
    replay_enabled = cfg.algo in ("ppod", "ppo")

    dv_cap = initial_value_cap(cfg.buffer_total, len(demos))
    dr = RewardBuffer(cfg.buffer_total)
    for t in demos:
        dr.append(t)
    dv = ValueBuffer(dv_cap, alpha=cfg.alpha, use_shift=cfg.prioritize_shift)
    sched = ReplayScheduler.create(rho, phi, dv_cap_0=dv_cap, dr_size=len(dr))
    sched.dv_size = 0

    return RunState(
        cfg=cfg,
        params=params,
        adam=nn.AdamState.for_params(params, eps=cfg.train.adam_eps),
        sched=sched,
        dr=dr,
        dv=dv,
        actors=actors,
        update_rng=np.random.default_rng(update_seq),
        bc_rng=np.random.default_rng(bc_seq),
        demo_trajectories=demos,
        replay_enabled=replay_enabled,
    )


def _begin_episode(state: RunState, actor: _Actor) -> None:
    source = (select_source(state.sched, actor.rng)
              if state.replay_enabled else Source.ENV)
    if source is Source.ENV:
        actor.mode = "live"
        actor.obs = actor.env.reset()
        actor.ep_obs, actor.ep_actions, actor.ep_rewards = [], [], []
    else:
        actor.mode = "replay"
        if source is Source.REWARD:
            actor.traj = sample_reward_traj(state.dr, actor.rng)
        else:
            actor.traj = sample_value_traj(state.dv, actor.rng)
            refresh_priority(actor.traj, state.value_fn)
        actor.pos = 0


def _finish_live_episode(state: RunState, actor: _Actor) -> Trajectory:
    rewards = np.array(actor.ep_rewards, dtype=np.float64)
    origin = Origin.SELF_SUCCESS if rewards.sum() > 0 else Origin.SELF_UNSUCCESSFUL
    traj = Trajectory(
        observations=np.array(actor.ep_obs, dtype=np.float64),
        actions=np.array(actor.ep_actions),
        rewards=rewards,
        origin=origin,
        id=state.next_traj_id,
    )
    state.next_traj_id += 1
    state.recent_returns.append(float(rewards.sum()))
    actor.ep_obs, actor.ep_actions, actor.ep_rewards = [], [], []
    actor.mode = ""
    actor.obs = None
    return traj


def collect_rollout(state: RunState) -> RolloutBatch:
    """Fill one N x T segment; finished live episodes are routed into the
    buffers after the last step so mid-segment insertions cannot bias this
    segment's own source draws."""
    cfg = state.cfg.train
    N, T = cfg.num_actors, cfg.horizon
    actors = state.actors
    width = actors[0].env.obs_dim
    continuous = is_continuous(state.params)

    obs = np.zeros((N, T, width))
    actions = (np.zeros((N, T, 2)) if continuous
               else np.zeros((N, T), dtype=np.int64))
    rewards = np.zeros((N, T))
    dones = np.zeros((N, T), dtype=bool)
    blp = np.zeros((N, T))
    is_replay = np.zeros((N, T), dtype=bool)
    values = np.zeros((N, T))
    finished: list[Trajectory] = []

    for t in range(T):
        for actor in actors:
            if actor.mode == "":
                _begin_episode(state, actor)
        live = [i for i, a in enumerate(actors) if a.mode == "live"]
        if live:
            acts, lps, vals = act_batch(
                state.params,
                np.stack([actors[i].obs for i in live]),
                [actors[i].rng for i in live],
                cfg.activation,
            )
        for k, i in enumerate(live):
            actor = actors[i]
            action = acts[k]
            result = actor.env.step(action)
            obs[i, t] = actor.obs
            actions[i, t] = action
            rewards[i, t] = result.reward
            dones[i, t] = result.done
            blp[i, t] = lps[k]
            values[i, t] = vals[k]
            actor.ep_obs.append(actor.obs)
            actor.ep_actions.append(action)
            actor.ep_rewards.append(result.reward)
            state.live_frames += 1
            if result.done:
                finished.append(_finish_live_episode(state, actor))
            else:
                actor.obs = result.obs
        for i, actor in enumerate(actors):
            if actor.mode != "replay":
                continue
            traj = actor.traj
            obs[i, t] = traj.observations[actor.pos]
            actions[i, t] = traj.actions[actor.pos]
            rewards[i, t] = traj.rewards[actor.pos]
            is_replay[i, t] = True
            blp[i, t] = 0.0
            last = actor.pos == len(traj) - 1
            dones[i, t] = last
            actor.pos += 1
            if last:
                actor.mode = ""
                actor.traj = None

    batch = RolloutBatch(
        obs=obs.reshape(N * T, width),
        actions=actions.reshape(N * T, 2) if continuous else actions.reshape(N * T),
        rewards=rewards.reshape(-1),
        dones=dones.reshape(-1),
        behavior_log_probs=blp.reshape(-1),
        is_replay=is_replay.reshape(-1),
        values=values.reshape(-1),
        num_actors=N,
        horizon=T,
    )
    # replayed rows get value estimates under the same (frozen) parameters
    mask = batch.is_replay
    if mask.any():
        batch.values[mask] = state.value_fn(batch.obs[mask])

    bootstrap = np.zeros(N)
    for i, actor in enumerate(actors):
        if dones[i, -1]:
            continue
        if actor.mode == "live":
            bootstrap[i] = float(state.value_fn(actor.obs.reshape(1, -1))[0])
        elif actor.mode == "replay":
            nxt = actor.traj.observations[actor.pos]
            bootstrap[i] = float(state.value_fn(nxt.reshape(1, -1))[0])

    for traj in finished:
        if state.replay_enabled:
            insert_episode(traj, state.dr, state.dv, state.sched, state.value_fn)
        elif (state.cfg.algo == "ppo_bc" and state.cfg.bc_use_reward_buffer
              and traj.episode_return > 0):
            state.dr.append(traj)
            state.sched.dr_size = len(state.dr.items)

    compute_gae(batch, bootstrap, cfg.gamma, cfg.lam)
    return batch


def _bc_pool(state: RunState) -> DemoDataset:
    pool = list(state.demo_trajectories)
    if state.cfg.bc_use_reward_buffer:
        pool += [t for t in state.dr.items if t.origin is not Origin.HUMAN_DEMO]
    return DemoDataset.from_trajectories(pool)


def run_update(state: RunState, batch: RolloutBatch) -> list[LossReport]:
    if state.cfg.algo == "ppo_bc":
        _, reports, _ = ppo_bc_update(
            state.params, state.adam, batch, _bc_pool(state),
            state.cfg.rho, state.cfg.train, state.update_rng, state.bc_rng,
            literal_case=state.cfg.bc_literal_case,
        )
    else:
        _, reports = ppo_update(
            state.params, state.adam, batch, state.cfg.train, state.update_rng)
    state.updates += 1
    return reports


def save_checkpoint(state: RunState, path) -> None:
    sched = state.sched
    nn.save_params(state.params, path, extra={
        "task": state.cfg.task,
        "algo": state.cfg.algo,
        "frame_stack": state.cfg.frame_stack,
        "activation": state.cfg.train.activation,
        "update": state.updates,
        "live_frames": state.live_frames,
        "scheduler": {
            "rho": sched.rho, "phi": sched.phi,
            "rho_0": sched.rho_0, "phi_0": sched.phi_0,
            "dv_cap_0": sched.dv_cap_0, "dv_cap": sched.dv_cap,
            "dr_size": sched.dr_size, "dv_size": sched.dv_size,
        },
    })


class MetricsWriter:
    """Append-only CSV; one row per update."""

    def __init__(self, path):
        self.path = path
        new = not os.path.exists(path)
        self._fh = open(path, "a")
        if new:
            self._fh.write(",".join(METRICS_FIELDS) + "\n")
            self._fh.flush()

    def write(self, **fields) -> None:
        missing = set(METRICS_FIELDS) - set(fields)
        if missing:
            raise ValueError(f"metrics row missing {sorted(missing)}")
        self._fh.write(
            ",".join(repr(fields[k]) if isinstance(fields[k], float)
                     else str(fields[k]) for k in METRICS_FIELDS) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def _window_stats(state: RunState) -> tuple[float, float]:
    window = state.recent_returns
    if not window:
        return 0.0, 0.0
    returns = np.array(window)
    return float(returns.mean()), float((returns > 0).mean())


def evaluate(params, task_id, episodes, seed, frame_stack=1,
             activation="tanh", policy_fn=None) -> EvalReport:
    """Greedy rollouts on fresh seeded envs; no buffers, no learning.

    policy_fn(env, obs) overrides the policy (scripted-oracle hook).
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    env = make_env(task_id, seed=seed, frame_stack=frame_stack)
    ep_seeds = np.random.SeedSequence(seed).generate_state(episodes, np.uint64)
    successes = 0
    returns = np.zeros(episodes)
    lengths = np.zeros(episodes)
    for e in range(episodes):
        obs = env.reset(seed=int(ep_seeds[e]))
        done = False
        while not done:
            if policy_fn is not None:
                action = policy_fn(env, obs)
            else:
                action = greedy_action(params, obs, activation)
            result = env.step(action)
            returns[e] += result.reward
            lengths[e] += 1
            obs, done = result.obs, result.done
        successes += int(result.success)
    return EvalReport(
        episodes=episodes,
        success_rate=successes / episodes,
        mean_return=float(returns.mean()),
        mean_length=float(lengths.mean()),
    )


def _eval_seed(cfg: RunConfig, update: int) -> int:
    return (cfg.seed * 1_000_003 + update) % (2 ** 31)


def train_loop(cfg: RunConfig, progress=None) -> RunState:
    """Run cfg to completion; artifacts land in cfg.out_dir.

    Writes metrics.csv (one row per update), eval.jsonl (one row per
    evaluation pass), the resolved config, and checkpoint.json (rolling on
    the checkpoint interval, final at exit, and on a non-finite-loss halt
    before TrainingHalted is raised).
    """
    os.makedirs(cfg.out_dir, exist_ok=True)
    state = setup_run(cfg)
    with open(os.path.join(cfg.out_dir, "resolved.cfg"), "w") as fh:
        fh.write(dump_config(cfg))
    ckpt_path = os.path.join(cfg.out_dir, CHECKPOINT_NAME)
    metrics = MetricsWriter(os.path.join(cfg.out_dir, METRICS_NAME))
    eval_path = os.path.join(cfg.out_dir, "eval.jsonl")

    if cfg.algo == "bc":
        try:
            _bc_loop(cfg, state, metrics, ckpt_path, eval_path)
        finally:
            metrics.close()
        return state

    def run_eval() -> EvalReport:
        report = evaluate(
            state.params, cfg.task, cfg.eval_episodes,
            _eval_seed(cfg, state.updates), cfg.frame_stack,
            cfg.train.activation,
        )
        with open(eval_path, "a") as fh:
            fh.write(json.dumps({"update": state.updates,
                                 "live_frames": state.live_frames,
                                 **dataclasses.asdict(report)}) + "\n")
        return report

    try:
        while state.live_frames < cfg.total_frames:
            batch = collect_rollout(state)
            try:
                reports = run_update(state, batch)
            except UpdateAborted as exc:
                save_checkpoint(state, ckpt_path)
                raise TrainingHalted(
                    f"non-finite loss at update {state.updates}, {exc}; "
                    f"checkpoint saved to {ckpt_path}"
                )
            mean_ret, succ = _window_stats(state)
            losses = (LossReport.combine(reports) if reports
                      else LossReport(0.0, 0.0, 0.0, 0.0, 0.0))
            metrics.write(
                update=state.updates, live_frames=state.live_frames,
                mean_return=mean_ret, success_rate=succ,
                rho=state.sched.rho, phi=state.sched.phi,
                dr_size=state.sched.dr_size, dv_size=state.sched.dv_size,
                surrogate=losses.surrogate, value_loss=losses.value_loss,
                entropy=losses.entropy, clip_fraction=losses.clip_fraction,
            )
            if cfg.checkpoint_interval and state.updates % cfg.checkpoint_interval == 0:
                save_checkpoint(state, ckpt_path)
            if cfg.eval_interval and state.updates % cfg.eval_interval == 0:
                report = run_eval()
                if (cfg.stop_at_success_rate
                        and report.success_rate >= cfg.stop_at_success_rate):
                    break
            if progress is not None:
                progress(state)
    finally:
        metrics.close()
    save_checkpoint(state, ckpt_path)
    return state


def _bc_loop(cfg: RunConfig, state: RunState, metrics, ckpt_path, eval_path) -> None:
    """Offline path: clone the demos, evaluating between chunks."""
    data = DemoDataset.from_trajectories(state.demo_trajectories)
    chunks = 10 if cfg.bc_steps >= 10 else max(cfg.bc_steps, 1)
    per_chunk = cfg.bc_steps // chunks if chunks else 0
    done_steps = 0
    rng = state.bc_rng
    for chunk in range(chunks):
        steps = per_chunk if chunk < chunks - 1 else cfg.bc_steps - done_steps
        bc_train(state.params, data, steps, cfg.bc_lr,
                 batch_size=cfg.bc_batch_size, rng=rng,
                 activation=cfg.train.activation, adam=state.adam)
        done_steps += steps
        state.updates += 1
        report = evaluate(state.params, cfg.task, cfg.eval_episodes,
                          _eval_seed(cfg, state.updates), cfg.frame_stack,
                          cfg.train.activation)
        with open(eval_path, "a") as fh:
            fh.write(json.dumps({"update": state.updates, "bc_steps": done_steps,
                                 **dataclasses.asdict(report)}) + "\n")
        metrics.write(
            update=state.updates, live_frames=0,
            mean_return=report.mean_return, success_rate=report.success_rate,
            rho=0.0, phi=0.0, dr_size=state.sched.dr_size, dv_size=0,
            surrogate=0.0, value_loss=0.0, entropy=0.0, clip_fraction=0.0,
        )
    save_checkpoint(state, ckpt_path)
