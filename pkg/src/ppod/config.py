"""Run configuration: dataclass, INI files, and named presets.

Config files are flat ``key = value`` text (stdlib configparser) with two
sections::

    [run]
    task = grid.onebox.easy
    algo = ppod
    rho = 0.1

    [train]
    gamma = 0.99
    horizon = 256

Keys are exactly the dataclass field names below.  CLI flags override
file values, which override preset values.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field

from .ppo import TrainConfig

ALGOS = ("ppod", "ppo", "ppo_bc", "bc")

_BOOL_WORDS = {
    "1": True, "true": True, "yes": True, "on": True,
    "0": False, "false": False, "no": False, "off": False,
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Everything a training/evaluation run needs, in one place.

    ``rho`` and ``phi`` are the *initial* replay probabilities; during a
    run the live values anneal inside the scheduler while these stay
    fixed.  ``buffer_total`` is the combined demo + value-buffer slot
    count; the value buffer starts at ``buffer_total - max(1, n_demos)``.
    """

    task: str = "grid.onebox.easy"
    algo: str = "ppod"
    rho: float = 0.1
    phi: float = 0.3
    buffer_total: int = 51
    alpha: float = 10.0
    prioritize_shift: bool = True
    seed: int = 0
    total_frames: int = 500_000
    demos: tuple[str, ...] = ()
    out_dir: str = "run_out"
    frame_stack: int = 1
    hidden_sizes: tuple[int, ...] = (64, 64)
    eval_interval: int = 10       # updates between eval passes; 0 = never
    eval_episodes: int = 32
    checkpoint_interval: int = 0  # updates between checkpoints; 0 = final only
    stop_at_success_rate: float = 0.0  # early stop once eval reaches this; 0 = off
    bc_steps: int = 3000
    bc_lr: float = 1e-5
    bc_batch_size: int = 64
    bc_use_reward_buffer: bool = False  # PPO+BC also clones from collected successes
    bc_literal_case: bool = False       # swap which branch gets the BC loss
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> "RunConfig":
        from .envs import TASKS

        if self.task not in TASKS:
            raise ConfigError(
                f"unknown task {self.task!r}; known: {', '.join(TASKS)}"
            )
        if self.algo not in ALGOS:
            raise ConfigError(
                f"unknown algo {self.algo!r}; known: {', '.join(ALGOS)}"
            )
        if not 0.0 <= self.rho <= 1.0 or not 0.0 <= self.phi <= 1.0:
            raise ConfigError("rho and phi must lie in [0, 1]")
        if self.rho + self.phi > 1.0:
            raise ConfigError(f"rho + phi = {self.rho + self.phi} exceeds 1")
        if self.buffer_total < 1:
            raise ConfigError("buffer_total must be at least 1")
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.total_frames < 0:
            raise ConfigError("total_frames must be nonnegative")
        if self.frame_stack < 1:
            raise ConfigError("frame_stack must be at least 1")
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            raise ConfigError("hidden_sizes must be positive integers")
        if self.eval_interval < 0 or self.checkpoint_interval < 0:
            raise ConfigError("intervals must be nonnegative")
        if self.eval_episodes < 1:
            raise ConfigError("eval_episodes must be at least 1")
        if not 0.0 <= self.stop_at_success_rate <= 1.0:
            raise ConfigError("stop_at_success_rate must lie in [0, 1]")
        if self.bc_steps < 0 or self.bc_batch_size < 1 or self.bc_lr <= 0:
            raise ConfigError("bad behavioral-cloning settings")
        try:
            self.train.validate()
        except ValueError as exc:
            raise ConfigError(f"train: {exc}")
        return self

    @property
    def rho_0(self) -> float:
        return self.rho

    @property
    def phi_0(self) -> float:
        return self.phi


def initial_value_cap(buffer_total: int, n_demos: int) -> int:
    """Starting slot count of the prioritized value buffer.

    One slot is reserved per demonstration (at least one even when
    training without demos, so buffer arithmetic is preset-independent):
    51 total slots with a single demo leaves 50.
    """
    cap = buffer_total - max(1, n_demos)
    if cap < 0:
        raise ConfigError(
            f"{n_demos} demos do not fit a buffer of {buffer_total} slots"
        )
    return cap


def desk_preset() -> RunConfig:
    """Small-scale settings sized for single-core runs."""
    return RunConfig()


def paper_preset() -> RunConfig:
    """Reference settings for full-scale multi-actor runs."""
    return RunConfig(
        frame_stack=4,
        buffer_total=51,
        alpha=10.0,
        train=TrainConfig(
            gamma=0.998,
            lam=0.95,
            clip_eps=0.15,
            c1=0.1,
            c2=0.02,
            lr=1e-5,
            epochs=4,
            minibatches=6,
            num_actors=14,
            horizon=1000,
            max_grad_norm=0.5,
        ),
    )


PRESETS = {"desk": desk_preset, "paper": paper_preset}


def preset_config(name: str) -> RunConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}; known: {', '.join(sorted(PRESETS))}"
        )


def _coerce(raw: str, type_name: str, key: str):
    raw = raw.strip()
    try:
        if type_name == "int":
            return int(raw)
        if type_name == "float":
            return float(raw)
        if type_name == "str":
            return raw
        if type_name == "bool":
            try:
                return _BOOL_WORDS[raw.lower()]
            except KeyError:
                raise ValueError(f"not a boolean: {raw!r}")
        if type_name == "tuple[str, ...]":
            return tuple(p.strip() for p in raw.split(",") if p.strip())
        if type_name == "tuple[int, ...]":
            return tuple(int(p) for p in raw.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}")
    raise ConfigError(f"cannot parse fields of type {type_name}")  # pragma: no cover


def _field_types(cls) -> dict:
    return {f.name: f.type for f in dataclasses.fields(cls)}


_RUN_FIELDS = None
_TRAIN_FIELDS = None


def _tables():
    global _RUN_FIELDS, _TRAIN_FIELDS
    if _RUN_FIELDS is None:
        _RUN_FIELDS = {k: v for k, v in _field_types(RunConfig).items()
                       if k != "train"}
        _TRAIN_FIELDS = _field_types(TrainConfig)
    return _RUN_FIELDS, _TRAIN_FIELDS


def _apply_section(section, fields_table, target: dict, label: str):
    for key, raw in section.items():
        name = "demos" if key == "demo_paths" else key
        if name == "task_id":  # accepted alias for the CLI flag name
            name = "task"
        if name not in fields_table:
            raise ConfigError(f"unknown key {key!r} in [{label}]")
        target[name] = _coerce(raw, fields_table[name], key)


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse INI text on top of ``base`` (default: desk preset)."""
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"bad config file: {exc}")
    for section in parser.sections():
        if section not in ("run", "train"):
            raise ConfigError(f"unknown section [{section}]")

    run_fields, train_fields = _tables()
    run_kw: dict = {}
    train_kw: dict = {}
    if parser.has_section("run"):
        _apply_section(parser["run"], run_fields, run_kw, "run")
    if parser.has_section("train"):
        _apply_section(parser["train"], train_fields, train_kw, "train")

    cfg = base if base is not None else desk_preset()
    train = dataclasses.replace(cfg.train, **train_kw)
    return dataclasses.replace(cfg, train=train, **run_kw)


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}")
    return parse_config_text(text, base=base)


def dump_config(cfg: RunConfig) -> str:
    """Resolved config as INI text (the inverse of parse_config_text)."""
    run_fields, train_fields = _tables()
    parser = configparser.ConfigParser()
    parser["run"] = {}
    for name in run_fields:
        value = getattr(cfg, name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        parser["run"][name] = str(value)
    parser["train"] = {
        name: str(getattr(cfg.train, name)) for name in train_fields
    }
    out = io.StringIO()
    parser.write(out)
    return out.getvalue()
