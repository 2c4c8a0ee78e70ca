"""Command-line surface: train, evaluate, and the demo-file utilities.

Every command prints a one-object JSON summary on success.  Bad input
exits nonzero with a single-line message on stderr, never a traceback.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from . import nn
from .config import PRESETS, ConfigError, load_config, preset_config
from .demo_io import DemoError, demo_from_actions, load_demo, replay_demo, save_demo
from .envs import TASKS, make_env
from .envs.solver import SolverError, solve_grid, solve_reacher
from .orchestrator import CHECKPOINT_NAME, TrainingHalted, evaluate, train_loop


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ppod",
        description="Sparse-reward PPO with demonstration and self-trajectory replay.",
    )
    sub = p.add_subparsers(dest="command", metavar="command")

    train = sub.add_parser("train", help="run a training configuration")
    train.add_argument("--config", help="INI config file")
    train.add_argument("--preset", choices=sorted(PRESETS), default="desk",
                       help="base settings the config/flags override")
    train.add_argument("--seed", type=int)
    train.add_argument("--task", choices=TASKS)
    train.add_argument("--algo", choices=("ppod", "ppo", "ppo_bc", "bc"))
    train.add_argument("--rho", type=float, help="initial demo-replay probability")
    train.add_argument("--phi", type=float, help="initial self-replay probability")
    train.add_argument("--demos", help="comma-separated demo files")
    train.add_argument("--frames", type=int, help="live env frames to train for")
    train.add_argument("--out", help="output directory")

    ev = sub.add_parser("evaluate", help="greedy rollouts from a checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--task", choices=TASKS, help="defaults to the checkpoint's task")
    ev.add_argument("--episodes", type=int, default=100)
    ev.add_argument("--seed", type=int, default=0)

    dv = sub.add_parser("demo-validate", help="check a demo file")
    dv.add_argument("file")
    dv.add_argument("--task", choices=TASKS, help="require this env id")

    dr = sub.add_parser("demo-replay",
                        help="re-run a demo's actions and compare records")
    dr.add_argument("file")

    dg = sub.add_parser("demo-generate",
                        help="record a scripted-solver demonstration")
    dg.add_argument("--task", choices=TASKS, required=True)
    dg.add_argument("--seed", type=int, default=0)
    dg.add_argument("--out", required=True)

    sv = sub.add_parser("serve", help="start the demo-recorder backend")
    sv.add_argument("--port", type=int, default=8900)
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--task", choices=TASKS, default="grid.onebox.easy")
    sv.add_argument("--seed", type=int)
    sv.add_argument("--out", default="demos", help="directory for saved demos")
    return p


def _emit(obj) -> None:
    print(json.dumps(obj))


def cmd_train(args) -> int:
    cfg = preset_config(args.preset)
    if args.config:
        cfg = load_config(args.config, base=cfg)
    overrides = {}
    for flag, field in (("seed", "seed"), ("task", "task"), ("algo", "algo"),
                        ("rho", "rho"), ("phi", "phi"),
                        ("frames", "total_frames"), ("out", "out_dir")):
        value = getattr(args, flag)
        if value is not None:
            overrides[field] = value
    if args.demos is not None:
        overrides["demos"] = tuple(
            s.strip() for s in args.demos.split(",") if s.strip())
    cfg = dataclasses.replace(cfg, **overrides)
    cfg.validate()
    state = train_loop(cfg)
    _emit({
        "out_dir": cfg.out_dir,
        "updates": state.updates,
        "live_frames": state.live_frames,
        "checkpoint": f"{cfg.out_dir}/{CHECKPOINT_NAME}",
    })
    return 0


def cmd_evaluate(args) -> int:
    params, extra = nn.load_params(args.checkpoint)
    task = args.task or extra.get("task")
    if not task:
        raise ConfigError("checkpoint has no task tag; pass --task")
    report = evaluate(
        params, task, args.episodes, args.seed,
        frame_stack=extra.get("frame_stack", 1),
        activation=extra.get("activation", "tanh"),
    )
    _emit(dataclasses.asdict(report))
    return 0


def cmd_demo_validate(args) -> int:
    demo = load_demo(args.file, expect_env_id=args.task)
    _emit({
        "ok": True,
        "env_id": demo.env_id,
        "steps": len(demo),
        "episode_return": demo.episode_return,
        "seed": demo.seed,
    })
    return 0


def cmd_demo_replay(args) -> int:
    demo = load_demo(args.file)
    check = replay_demo(demo)
    _emit({"ok": check.ok, **dataclasses.asdict(check)})
    if not check.ok:
        print(
            f"error: replay diverged from the recording at step "
            f"{check.first_mismatch}", file=sys.stderr)
        return 1
    return 0


def cmd_demo_generate(args) -> int:
    env = make_env(args.task, seed=args.seed)
    env.reset(seed=args.seed)
    if args.task.startswith("grid."):
        actions = solve_grid(env)
    else:
        actions, _, success = solve_reacher(env)
        if not success:
            raise SolverError(f"controller failed on seed {args.seed}")
    demo = demo_from_actions(args.task, args.seed, actions)
    parent = os.path.dirname(args.out)
    if parent:
        os.makedirs(parent, exist_ok=True)
    save_demo(demo, args.out)
    _emit({
        "path": args.out,
        "task": args.task,
        "seed": args.seed,
        "steps": len(demo),
        "episode_return": demo.episode_return,
    })
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import build_app

    app = build_app(task=args.task, seed=args.seed, demo_dir=args.out)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


_COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "demo-validate": cmd_demo_validate,
    "demo-replay": cmd_demo_replay,
    "demo-generate": cmd_demo_generate,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("error: name a command: " + ", ".join(_COMMANDS), file=sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, DemoError, SolverError, TrainingHalted,
            OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
