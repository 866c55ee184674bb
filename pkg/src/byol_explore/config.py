"""Experiment configuration and its flat text format.

Grammar (one entry per line)::

    # comment
    section.key = value

Sections are ``env``, ``world``, ``agent`` and ``run``. Values are parsed by
the declared field type: integers, floats, ``true``/``false``, bare strings,
and comma-separated lists for tuple fields (an empty value is an empty
list). Unknown keys are errors. ``dump`` writes every key in a fixed order,
so ``parse(dump(cfg)) == cfg``.
"""

from __future__ import annotations

import typing
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from byol_explore.agent import AgentConfig
from byol_explore.env import NUM_ACTIONS, EnvConfig
from byol_explore.errors import ConfigurationError
from byol_explore.world_model import WorldModelSpec


@dataclass(frozen=True)
class WorldConfig:
    embed_size: int = 32
    history_size: int = 64
    horizon: int = 8
    alpha: float = 0.99
    action_embed: int = 8
    encoder: str = "mlp"
    encoder_hidden: tuple[int, ...] = (64,)
    predictor_hidden: tuple[int, ...] = (64,)


@dataclass(frozen=True)
class RunConfig:
    learner_steps: int = 1000
    segment_length: int = 16
    batch_size: int = 16
    seeds: tuple[int, ...] = (0,)
    eval_every: int = 1000
    eval_episodes: int = 10
    eval_noop_max: int = 0
    stagger: bool = False
    human_score: float = 1.0
    random_score: float = 0.0
    out_dir: str = "runs/default"

    def __post_init__(self):
        if not self.seeds:
            raise ConfigurationError("run.seeds must not be empty")
        if self.segment_length < 2:
            raise ConfigurationError(f"run.segment_length must be >= 2, got {self.segment_length}")
        if self.batch_size < 1:
            raise ConfigurationError(f"run.batch_size must be >= 1, got {self.batch_size}")
        if self.eval_every < 1:
            raise ConfigurationError(f"run.eval_every must be >= 1, got {self.eval_every}")


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    world: WorldConfig = field(default_factory=WorldConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def world_spec(self) -> WorldModelSpec:
        w = self.world
        return WorldModelSpec(
            obs_dim=self.env.obs_dim,
            num_actions=NUM_ACTIONS,
            embed_size=w.embed_size,
            history_size=w.history_size,
            horizon=w.horizon,
            alpha=w.alpha,
            action_embed=w.action_embed,
            encoder=w.encoder,
            encoder_hidden=tuple(w.encoder_hidden),
            predictor_hidden=tuple(w.predictor_hidden),
            grid_shape=self.env.grid_shape,
        )

    def to_dict(self) -> dict[str, object]:
        out = {}
        for section in SECTIONS:
            for f in fields(getattr(self, section)):
                out[f"{section}.{f.name}"] = getattr(getattr(self, section), f.name)
        return out


SECTIONS = ("env", "world", "agent", "run")
_SECTION_TYPES = {"env": EnvConfig, "world": WorldConfig, "agent": AgentConfig, "run": RunConfig}


def _field_types(cls) -> dict[str, object]:
    return typing.get_type_hints(cls)


def _parse_value(key: str, raw: str, typ) -> object:
    raw = raw.strip()
    origin = typing.get_origin(typ)
    try:
        if origin is tuple:
            (elem, *_rest) = typing.get_args(typ)
            if not raw:
                return ()
            return tuple(_parse_value(key, part, elem) for part in raw.split(","))
        if typ is bool:
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is str:
            return raw
    except ValueError:
        raise ConfigurationError(f"{key}: cannot parse {raw!r} as {getattr(typ, '__name__', typ)}") from None
    raise ConfigurationError(f"{key}: unsupported field type {typ}")


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    return str(value)


def apply_overrides(config: ExperimentConfig, overrides: dict[str, object]) -> ExperimentConfig:
    """Set dotted keys; string values are parsed, others used as-is."""
    pending: dict[str, dict[str, object]] = {s: {} for s in SECTIONS}
    for key, value in overrides.items():
        section, _, name = key.partition(".")
        if section not in _SECTION_TYPES or not name:
            raise ConfigurationError(f"{key}: unknown key (expected section.name with section in {SECTIONS})")
        types = _field_types(_SECTION_TYPES[section])
        if name not in types:
            raise ConfigurationError(f"{key}: unknown key in section {section!r}")
        if isinstance(value, str):
            value = _parse_value(key, value, types[name])
        elif isinstance(value, list):
            value = tuple(value)
        pending[section][name] = value
    updated = {}
    for section, values in pending.items():
        if values:
            try:
                updated[section] = replace(getattr(config, section), **values)
            except ConfigurationError as exc:
                # name the offending key when the section's own validation fails
                raise ConfigurationError(_qualify(section, str(exc))) from None
    return replace(config, **updated)


def _qualify(section: str, message: str) -> str:
    head = message.split(" ", 1)[0]
    if "." in head:
        return message
    return f"{section}.{message}"


def parse(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    overrides: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"line {lineno}: expected 'section.key = value', got {line.strip()!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key in overrides:
            raise ConfigurationError(f"{key}: given twice (line {lineno})")
        overrides[key] = value.strip()
    return apply_overrides(base or ExperimentConfig(), overrides)


def dump(config: ExperimentConfig) -> str:
    lines = []
    for section in SECTIONS:
        for f in fields(getattr(config, section)):
            lines.append(f"{section}.{f.name} = {_format_value(getattr(getattr(config, section), f.name))}")
        lines.append("")
    return "\n".join(lines)


def load(path: str | Path) -> ExperimentConfig:
    return parse(Path(path).read_text())


PRESETS: dict[str, dict[str, object]] = {
    "fixed-targets": {"world.alpha": 1.0},
    "horizon-1": {"world.horizon": 1},
    "no-clipping": {"agent.clipping": False},
    "no-sharing": {"agent.sharing": False},
    "pure-exploration": {"agent.regime": "pure-exploration"},
    "pure-rl": {"agent.algorithm": "pure-rl", "agent.lam": 0.0},
}


def ablation_preset(name: str) -> dict[str, object]:
    """Config delta for a named ablation."""
    try:
        return dict(PRESETS[name])
    except KeyError:
        raise ConfigurationError(f"unknown preset {name!r}; valid presets: {', '.join(PRESETS)}") from None


def with_preset(config: ExperimentConfig, name: str) -> ExperimentConfig:
    return apply_overrides(config, ablation_preset(name))


__all__ = [
    "ExperimentConfig",
    "PRESETS",
    "RunConfig",
    "WorldConfig",
    "ablation_preset",
    "apply_overrides",
    "dump",
    "load",
    "parse",
    "with_preset",
]
