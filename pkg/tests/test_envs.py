import copy
from collections import deque

import numpy as np
import pytest

from ppod.envs import (
    ACTIONS, GRID_TASKS, TASKS, GridBoxWorld, SparsePointReacher,
    action_space_of, is_success, make_env,
)
from ppod.envs import grid as grid_mod
from ppod.envs.grid import (
    A_FORWARD, A_NOOP, A_PUSH, A_ROT_L, A_ROT_R, GOAL, RAW_OBS_DIM,
)
from ppod.envs.reacher import sparse_reward, tip_position
from ppod.envs.solver import reacher_controller, solve_grid, solve_reacher
from ppod.replay import Origin, Trajectory


# --- catalog ----------------------------------------------------------------

def test_task_catalog_and_factory():
    assert TASKS == ("grid.onebox.easy", "grid.onebox.hard",
                     "grid.twobox.easy", "grid.twobox.hard", "reacher.sparse")
    for task in TASKS:
        env = make_env(task, seed=0)
        obs = env.reset(seed=0)
        assert obs.shape == (env.obs_dim,)
    with pytest.raises(ValueError, match="unknown task"):
        make_env("grid.nope")


def test_action_catalog_has_nine_ids():
    assert len(ACTIONS) == 9
    assert ACTIONS == ("forward", "back", "left", "right", "rotate-left",
                       "rotate-right", "push", "no-op", "interact")


def test_action_space_descriptions():
    assert action_space_of(make_env("grid.onebox.easy")) == {"kind": "discrete", "n": 9}
    assert action_space_of(make_env("reacher.sparse")) == {"kind": "box", "dims": 2}


# --- determinism ----------------------------------------------------------------

@pytest.mark.parametrize("task", TASKS)
def test_same_seed_same_episode(task):
    rng = np.random.default_rng(0)
    if task == "reacher.sparse":
        actions = rng.uniform(-1, 1, size=(40, 2))
    else:
        actions = rng.integers(0, 9, size=40)
    traces = []
    for _ in range(2):
        env = make_env(task, seed=123)
        obs = env.reset(seed=7)
        frames, rewards = [obs], []
        for a in actions:
            res = env.step(a)
            frames.append(res.obs)
            rewards.append(res.reward)
            if res.done:
                break
        traces.append((np.concatenate(frames), np.array(rewards)))
    assert np.array_equal(traces[0][0], traces[1][0])
    assert np.array_equal(traces[0][1], traces[1][1])


def test_internal_stream_used_when_no_reset_seed():
    a = make_env("grid.onebox.hard", seed=9)
    b = make_env("grid.onebox.hard", seed=9)
    for _ in range(5):
        a.reset()
        b.reset()
        assert a.agent == b.agent and a.boxes == b.boxes
        assert a.orientation == b.orientation


# --- spawning --------------------------------------------------------------------

def test_onebox_easy_box_is_always_fixed():
    for seed in range(50):
        env = make_env("grid.onebox.easy")
        env.reset(seed=seed)
        assert env.boxes == {(1, 1)}


def test_onebox_hard_boxes_vary_over_seeds():
    sites = {(1, 2), (1, 6), (3, 2), (3, 6)}
    seen_configs, seen_sites = set(), set()
    for seed in range(1000):
        env = make_env("grid.onebox.hard")
        env.reset(seed=seed)
        assert len(env.boxes) == 2
        assert env.boxes <= sites
        seen_configs.add(frozenset(env.boxes))
        seen_sites |= env.boxes
    assert len(seen_configs) >= 2
    assert seen_sites == sites  # all four sites actually used


def test_twobox_hard_fixed_boxes_and_restricted_spawn():
    for seed in range(100):
        env = make_env("grid.twobox.hard")
        env.reset(seed=seed)
        assert env.boxes == {(1, 2), (1, 6)}
        r, c = env.agent
        assert r in (1, 2) and c in (3, 4)


def test_agent_spawn_varies_and_avoids_boxes():
    positions, orientations = set(), set()
    for seed in range(200):
        env = make_env("grid.onebox.easy")
        env.reset(seed=seed)
        assert env.agent not in env.boxes
        assert env.agent[0] <= 3  # south of the barrier
        positions.add(env.agent)
        orientations.add(env.orientation)
    assert len(positions) > 10
    assert orientations == {0, 1, 2, 3}


def test_reacher_never_spawns_inside_reward_zone():
    for seed in range(100):
        env = make_env("reacher.sparse")
        env.reset(seed=seed)
        d = float(np.linalg.norm(tip_position(env.q) - env.target))
        assert d > env.threshold


# --- grid mechanics -----------------------------------------------------------------

def east_facing(variant="onebox.easy"):
    env = GridBoxWorld(variant, step_limit=10_000)
    env.reset(seed=0)
    env.orientation = 1  # east
    return env

def test_move_actions_are_orientation_relative():
    env = east_facing()
    env.agent = (2, 2)
    env.boxes = set()
    env.step(A_FORWARD)
    assert env.agent == (2, 3)
    env.step(grid_mod.A_BACK)
    assert env.agent == (2, 2)
    env.step(grid_mod.A_LEFT)   # left of east is north
    assert env.agent == (3, 2)
    env.step(grid_mod.A_RIGHT)
    assert env.agent == (2, 2)


def test_rotations_cycle_and_moves_do_not_rotate():
    env = east_facing()
    env.step(A_ROT_L)
    assert env.orientation == 0  # east -> north
    env.step(A_ROT_R)
    env.step(A_ROT_R)
    assert env.orientation == 2  # north -> east -> south
    ori = env.orientation
    env.step(A_FORWARD)
    assert env.orientation == ori


def test_moves_blocked_by_walls_boxes_bounds_and_gaps():
    env = east_facing()
    env.boxes = {(2, 3)}
    env.agent = (2, 2)
    env.step(A_FORWARD)          # box ahead
    assert env.agent == (2, 2)
    env.agent = (3, 0)
    env.orientation = 0
    env.step(A_FORWARD)          # wall at (4,0)
    assert env.agent == (3, 0)
    env.agent = (0, 0)
    env.orientation = 2
    env.step(A_FORWARD)          # south edge
    assert env.agent == (0, 0)
    env.agent = (3, 4)
    env.orientation = 0
    env.step(A_FORWARD)          # unfilled gap at (4,4)
    assert env.agent == (3, 4)
    env.filled = {(4, 4)}
    env.step(A_FORWARD)          # now filled -> traversable
    assert env.agent == (4, 4)


def test_push_moves_box_and_agent_follows():
    env = east_facing()
    env.boxes = {(2, 3)}
    env.agent = (2, 2)
    env.step(A_PUSH)
    assert env.boxes == {(2, 4)}
    assert env.agent == (2, 3)


def test_push_into_gap_fills_it_and_box_disappears():
    env = east_facing()
    env.orientation = 0
    env.boxes = {(3, 4)}
    env.agent = (2, 4)
    env.step(A_PUSH)
    assert env.boxes == set()
    assert env.filled == {(4, 4)}
    assert env.agent == (3, 4)


def test_push_blocked_when_box_destination_occupied():
    env = east_facing()
    env.boxes = {(2, 3), (2, 4)}
    env.agent = (2, 2)
    env.step(A_PUSH)             # box behind box
    assert env.boxes == {(2, 3), (2, 4)}
    assert env.agent == (2, 2)
    env.boxes = {(3, 0)}
    env.agent = (2, 0)
    env.orientation = 0
    env.step(A_PUSH)             # wall ahead of box
    assert env.boxes == {(3, 0)}
    assert env.agent == (2, 0)


def test_push_without_box_ahead_is_noop():
    env = east_facing()
    env.boxes = set()
    env.agent = (2, 2)
    env.step(A_PUSH)
    assert env.agent == (2, 2)


def test_box_slides_onto_filled_gap():
    env = GridBoxWorld("twobox.easy", step_limit=10_000)
    env.reset(seed=0)
    env.boxes = {(3, 4)}
    env.filled = {(4, 4)}
    env.agent = (2, 4)
    env.orientation = 0
    env.step(A_PUSH)
    assert env.boxes == {(4, 4)}  # resting on the filled cell
    env.step(A_PUSH)
    assert env.boxes == set()     # fell into (5,4)
    assert env.filled == {(4, 4), (5, 4)}


def test_noop_and_interact_change_nothing_but_time():
    env = east_facing()
    before = (env.agent, env.orientation, frozenset(env.boxes))
    env.step(A_NOOP)
    env.step(grid_mod.A_INTERACT)
    assert (env.agent, env.orientation, frozenset(env.boxes)) == before
    assert env.step_count == 2


def test_reaching_goal_gives_reward_one_and_done():
    env = east_facing()
    env.boxes = set()
    env.filled = {(4, 4)}
    env.agent = (7, 4)
    env.orientation = 0
    res = env.step(A_FORWARD)
    assert env.agent == GOAL
    assert res.reward == 1.0 and res.done and res.success


def test_step_limit_ends_episode_without_reward():
    env = GridBoxWorld("onebox.easy", step_limit=5)
    env.reset(seed=0)
    for i in range(5):
        res = env.step(A_NOOP)
    assert res.done and not res.success and res.reward == 0.0


def test_step_after_done_raises():
    env = GridBoxWorld("onebox.easy", step_limit=2)
    env.reset(seed=0)
    env.step(A_NOOP)
    env.step(A_NOOP)
    with pytest.raises(RuntimeError, match="reset"):
        env.step(A_NOOP)


def test_reward_sparsity_sum_in_zero_one():
    rng = np.random.default_rng(1)
    for task in GRID_TASKS:
        for trial in range(20):
            env = make_env(task, seed=trial)
            env.reset(seed=trial)
            total, done = 0.0, False
            while not done:
                res = env.step(int(rng.integers(0, 9)))
                total += res.reward
                done = res.done
            assert total in (0.0, 1.0)


def test_gap_safety_exhaustive_state_search():
    """Breadth-first over the complete reachable state space of onebox.easy:
    the agent can never stand on an unfilled gap."""
    env0 = GridBoxWorld("onebox.easy", step_limit=10**9)
    env0.reset(seed=0)
    gaps = env0.layout.gaps

    def key(e):
        return (e.agent, e.orientation, frozenset(e.boxes), frozenset(e.filled))

    seen = {key(env0)}
    queue = deque([env0])
    explored = 0
    while queue and explored < 20000:
        env = queue.popleft()
        explored += 1
        for action in range(9):
            child = copy.deepcopy(env)
            res = child.step(action)
            assert not (child.agent in gaps and child.agent not in child.filled), \
                f"agent on unfilled gap {child.agent} after {ACTIONS[action]}"
            if res.done:
                continue
            k = key(child)
            if k not in seen:
                seen.add(k)
                queue.append(child)
    assert explored > 1000  # the search actually covered ground


# --- observations ---------------------------------------------------------------------

def test_obs_plane_accounting():
    env = make_env("grid.twobox.hard")
    env.reset(seed=3)
    obs = env.encode_obs()
    planes = obs[:-4].reshape(6, 9, 9)
    assert planes[0].sum() == 1                      # agent
    assert planes[1].sum() == len(env.boxes)         # boxes
    assert planes[2].sum() == len(env.layout.gaps)   # none filled yet
    assert planes[3].sum() == 0
    assert planes[4].sum() == len(env.layout.walls)
    assert planes[5].sum() == 1                      # goal
    assert obs[-4:].sum() == 1                       # orientation one-hot
    assert obs.shape == (RAW_OBS_DIM,)


def test_obs_bit_identical_for_fixed_state():
    env = make_env("grid.onebox.easy")
    env.reset(seed=4)
    assert np.array_equal(env.encode_obs(), env.encode_obs())


def test_frame_stacking_repeats_first_frame_then_slides():
    env = make_env("grid.onebox.easy", frame_stack=4)
    obs0 = env.reset(seed=5)
    raw = env.raw_obs_dim
    assert obs0.shape == (4 * raw,)
    for i in range(3):
        assert np.array_equal(obs0[i * raw:(i + 1) * raw], obs0[3 * raw:])
    res = env.step(A_ROT_L)
    assert np.array_equal(res.obs[:raw], obs0[raw:2 * raw])
    assert np.array_equal(res.obs[3 * raw:], env.encode_obs())
    assert not np.array_equal(res.obs[2 * raw:3 * raw], res.obs[3 * raw:])


def test_reacher_obs_bounded_and_tip_vector_zero_at_target():
    env = make_env("reacher.sparse")
    env.reset(seed=6)
    rng = np.random.default_rng(7)
    for _ in range(100):
        res = env.step(rng.uniform(-1, 1, size=2))
        assert np.abs(res.obs).max() <= 1.0 + 1e-12
        if res.done:
            env.reset()
    env.target = tip_position(env.q).copy()
    obs = env.encode_obs()
    assert obs[8] == 0.0 and obs[9] == 0.0


# --- reacher reward ------------------------------------------------------------------------

def test_reacher_reward_cases():
    assert sparse_reward(np.zeros(2), np.array([0.3, 0.0]), 1.0) == pytest.approx(0.7)
    assert sparse_reward(np.zeros(2), np.array([2.0, 0.0]), 1.0) == 0.0
    assert sparse_reward(np.zeros(2), np.array([1.0, 0.0]), 1.0) == 0.0  # boundary
    assert sparse_reward(np.zeros(2), np.zeros(2), 1.0) == 1.0


def test_reacher_step_reward_matches_formula_and_ends_on_success():
    env = make_env("reacher.sparse", seed=8)
    env.reset(seed=8)
    rng = np.random.default_rng(9)
    while True:
        res = env.step(rng.uniform(-1, 1, size=2))
        d = float(np.linalg.norm(tip_position(env.q) - env.target))
        want = env.threshold - d if d <= env.threshold else 0.0
        assert res.reward == pytest.approx(want, abs=0)
        assert 0.0 <= res.reward <= env.threshold
        if res.done:
            assert res.success == (res.reward > 0.0)
            break


def test_reacher_torque_clipping():
    a = make_env("reacher.sparse")
    b = make_env("reacher.sparse")
    a.reset(seed=10)
    b.reset(seed=10)
    ra = a.step(np.array([50.0, -50.0]))
    rb = b.step(np.array([1.0, -1.0]))
    assert np.array_equal(ra.obs, rb.obs)


def test_reacher_step_limit():
    env = SparsePointReacher(seed=11, step_limit=3)
    env.reset(seed=11)
    env.target = np.array([10.0, 10.0])  # unreachable
    for _ in range(3):
        res = env.step(np.zeros(2))
    assert res.done and not res.success


# --- is_success -------------------------------------------------------------------------------

def success_traj(rewards):
    L = len(rewards)
    return Trajectory(np.zeros((L, 3)), np.zeros(L, dtype=np.int64),
                      np.array(rewards), Origin.SELF_SUCCESS, id=0)


def test_is_success_examples():
    assert is_success(success_traj([0, 0, 0, 1.0]))
    assert not is_success(success_traj([0.0, 0.0]))
    assert is_success(success_traj([0.0, 0.42]))  # one in-threshold reacher step


# --- solvers (reachability oracle) ---------------------------------------------------------------

@pytest.mark.parametrize("task", GRID_TASKS)
def test_solver_completes_every_grid_variant(task):
    for seed in range(50):
        env = make_env(task, seed=seed)
        env.reset(seed=seed)
        plan = solve_grid(env)
        assert len(plan) <= env.step_limit
        total = 0.0
        for a in plan:
            res = env.step(a)
            total += res.reward
        assert total == 1.0, f"{task} seed {seed}"
        assert res.success


def test_solver_reacher_completes():
    for seed in range(50):
        env = make_env("reacher.sparse", seed=seed)
        env.reset(seed=seed)
        _, rewards, success = solve_reacher(env)
        assert success
        assert sum(rewards) > 0


def test_reacher_controller_is_pure_function_of_state():
    env = make_env("reacher.sparse")
    env.reset(seed=12)
    assert np.array_equal(reacher_controller(env), reacher_controller(env))
