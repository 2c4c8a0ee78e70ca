"""Recorder backend: a websocket session for playing episodes by hand plus
a few REST endpoints the browser client uses.

One interactive session at a time.  Wire messages are JSON objects with a
``type`` field: the client sends ``reset``/``action``/``save``, the server
answers with ``state``/``saved``/``error``.  Every ``action`` gets exactly
one reply, and a malformed message never kills the session.
"""

from __future__ import annotations

import json
import os

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from pydantic import BaseModel

from . import __version__
from .demo_io import DemoError, DemoFile, load_demo, save_demo
from .envs import ACTIONS, TASKS, action_space_of, make_env
from .envs.grid import GOAL, RAW_OBS_DIM as GRID_OBS_DIM
from .envs.reacher import OBS_DIM as REACHER_OBS_DIM, tip_position


class TaskInfo(BaseModel):
    id: str
    kind: str
    n: int | None = None
    dims: int | None = None
    obs_dims: int
    actions: list[str] | None = None


class ValidateRequest(BaseModel):
    path: str
    task: str | None = None


class ValidateReply(BaseModel):
    ok: bool
    error: str | None = None
    line: int | None = None
    env_id: str | None = None
    steps: int | None = None
    episode_return: float | None = None
    seed: int | None = None


def task_catalog() -> list[TaskInfo]:
    infos = []
    for task in TASKS:
        if task.startswith("grid."):
            infos.append(TaskInfo(id=task, kind="discrete", n=len(ACTIONS),
                                  obs_dims=GRID_OBS_DIM, actions=list(ACTIONS)))
        else:
            infos.append(TaskInfo(id=task, kind="box", dims=2,
                                  obs_dims=REACHER_OBS_DIM))
    return infos


def _cells(env) -> dict:
    """Structured view of the env state for the client renderer."""
    if hasattr(env, "agent"):
        unfilled = sorted(set(env.layout.gaps) - env.filled)
        return {
            "kind": "grid",
            "size": 9,
            "agent": list(env.agent),
            "orientation": env.orientation,
            "boxes": sorted(list(b) for b in env.boxes),
            "walls": sorted(list(w) for w in env.layout.walls),
            "gaps_unfilled": [list(g) for g in unfilled],
            "gaps_filled": sorted(list(g) for g in env.filled),
            "goal": list(GOAL),
        }
    tip = tip_position(env.q)
    return {
        "kind": "reacher",
        "q": env.q.tolist(),
        "velocity": env.w.tolist(),
        "tip": tip.tolist(),
        "target": env.target.tolist(),
        "distance": float(np.linalg.norm(tip - env.target)),
    }


class _Session:
    """State machine behind one websocket connection."""

    def __init__(self, default_task: str, rng: np.random.Generator, demo_dir: str):
        self.default_task = default_task
        self.rng = rng
        self.demo_dir = demo_dir
        self.env = None
        self.task = None
        self.seed = None
        self.done = False
        self.success = False
        self.pending_obs = None
        self.obs_log: list = []
        self.action_log: list = []
        self.reward_log: list = []
        self.done_log: list = []

    # -- replies ------------------------------------------------------------

    def _state(self, reward: float = 0.0) -> dict:
        return {
            "type": "state",
            "task": self.task,
            "seed": self.seed,
            "step": self.env.step_count,
            "reward": reward,
            "done": self.done,
            "success": self.success,
            "episode_return": float(sum(self.reward_log)),
            "render": self.env.render(),
            "cells": _cells(self.env),
        }

    @staticmethod
    def _error(message: str) -> dict:
        return {"type": "error", "message": message}

    # -- message handlers ---------------------------------------------------

    def handle(self, msg) -> dict:
        if not isinstance(msg, dict) or "type" not in msg:
            return self._error("message must be a JSON object with a 'type'")
        kind = msg["type"]
        if kind == "reset":
            return self._reset(msg)
        if kind == "action":
            return self._action(msg)
        if kind == "save":
            return self._save(msg)
        return self._error(f"unknown message type {kind!r}")

    def _reset(self, msg) -> dict:
        task = msg.get("task", self.default_task)
        if task not in TASKS:
            return self._error(f"unknown task {task!r}")
        seed = msg.get("seed")
        if seed is None:
            seed = int(self.rng.integers(2 ** 31))
        elif not isinstance(seed, int):
            return self._error("seed must be an integer")
        self.task, self.seed = task, seed
        self.env = make_env(task, seed=seed, frame_stack=1)
        self.pending_obs = self.env.reset(seed=seed)
        self.done = self.success = False
        self.obs_log, self.action_log = [], []
        self.reward_log, self.done_log = [], []
        return self._state()

    def _action(self, msg) -> dict:
        if self.env is None:
            return self._error("no active episode; send reset first")
        if self.done:
            return self._error("episode finished; save it or send reset")
        action = msg.get("action")
        if self.env.action_space_kind == "discrete":
            if not isinstance(action, int) or isinstance(action, bool):
                return self._error("action must be an integer for this task")
            if not 0 <= action < self.env.num_actions:
                return self._error(
                    f"action {action} outside [0, {self.env.num_actions})")
        else:
            if (not isinstance(action, list) or len(action) != 2
                    or not all(isinstance(v, (int, float)) for v in action)):
                return self._error("action must be a list of 2 numbers")
            action = np.asarray(action, dtype=np.float64)
        obs_before = self.pending_obs
        result = self.env.step(action)
        self.obs_log.append(obs_before)
        self.action_log.append(action)
        self.reward_log.append(result.reward)
        self.done_log.append(result.done)
        self.pending_obs = result.obs
        self.done, self.success = result.done, result.success
        return self._state(reward=result.reward)

    def _save(self, msg) -> dict:
        if self.env is None or not self.action_log:
            return self._error("nothing to save; play an episode first")
        if not self.done:
            return self._error("episode not finished; keep playing or reset")
        hint = msg.get("path") or f"{self.task}-seed{self.seed}.jsonl"
        if not isinstance(hint, str):
            return self._error("path must be a string")
        path = hint if os.path.isabs(hint) else os.path.join(self.demo_dir, hint)
        path = _unique_path(path)
        space = action_space_of(self.env)
        if space["kind"] == "discrete":
            actions = np.array(self.action_log, dtype=np.int64)
        else:
            actions = np.array(self.action_log, dtype=np.float64)
        demo = DemoFile(
            env_id=self.task,
            action_space=space,
            obs_dims=self.env.raw_obs_dim,
            seed=self.seed,
            observations=np.array(self.obs_log, dtype=np.float64),
            actions=actions,
            rewards=np.array(self.reward_log, dtype=np.float64),
            dones=np.array(self.done_log, dtype=bool),
        )
        try:
            os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
            save_demo(demo, path)
        except (DemoError, OSError) as exc:
            return self._error(f"save failed: {exc}")
        return {
            "type": "saved",
            "path": path,
            "episode_return": demo.episode_return,
            "length": len(demo),
            "success": self.success,
        }


def _unique_path(path: str) -> str:
    """Never overwrite an earlier recording: foo.jsonl, foo-2.jsonl, ..."""
    if not os.path.exists(path):
        return path
    root, ext = os.path.splitext(path)
    k = 2
    while os.path.exists(f"{root}-{k}{ext}"):
        k += 1
    return f"{root}-{k}{ext}"


def build_app(task: str = "grid.onebox.easy", seed: int | None = None,
              demo_dir: str = "demos") -> FastAPI:
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; known: {', '.join(TASKS)}")
    app = FastAPI(title="demo recorder backend", version=__version__)
    app.state.busy = False
    app.state.rng = np.random.default_rng(seed)
    app.state.default_task = task
    app.state.demo_dir = demo_dir

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.get("/tasks")
    def tasks() -> list[TaskInfo]:
        return task_catalog()

    @app.post("/demos/validate")
    def validate(req: ValidateRequest) -> ValidateReply:
        try:
            demo = load_demo(req.path, expect_env_id=req.task)
        except DemoError as exc:
            return ValidateReply(ok=False, error=str(exc), line=exc.line_no)
        except OSError as exc:
            return ValidateReply(ok=False, error=f"cannot read {req.path}: "
                                                 f"{exc.strerror}")
        return ValidateReply(
            ok=True, env_id=demo.env_id, steps=len(demo),
            episode_return=demo.episode_return, seed=demo.seed,
        )

    @app.websocket("/session")
    async def session(ws: WebSocket):
        await ws.accept()
        if app.state.busy:
            await ws.send_json(
                {"type": "error", "message": "another session is active"})
            await ws.close()
            return
        app.state.busy = True
        sess = _Session(app.state.default_task, app.state.rng, app.state.demo_dir)
        try:
            while True:
                try:
                    raw = await ws.receive_text()
                except WebSocketDisconnect:
                    break
                try:
                    msg = json.loads(raw)
                except ValueError:
                    await ws.send_json(sess._error("message is not valid JSON"))
                    continue
                await ws.send_json(sess.handle(msg))
        finally:
            app.state.busy = False

    return app
