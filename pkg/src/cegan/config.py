"""Run configuration: INI-style ``key = value`` sections with strict key checking.

Sections are ``[run]``, ``[evolution]``, ``[data]``, ``[noise]``,
``[generator]`` and ``[discriminator]``. Any section may be omitted; missing
keys keep their defaults. Unknown sections or keys are errors.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field
from pathlib import Path

from .data import DatasetSpec, NoiseSpec
from .evolution import EvolutionConfig
from .nets import MlpSpec, check_discriminator_spec, default_discriminator_spec, default_generator_spec


@dataclass
class RunConfig:
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    generator: MlpSpec = field(default_factory=default_generator_spec)
    discriminator: MlpSpec = field(default_factory=default_discriminator_spec)
    name: str = "run"
    log_every: int = 100
    checkpoint_every: int = 0
    output_dir: str = ""
    metric_samples: int = 10000
    min_count: int = 20

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        self.evolution.validate()
        check_discriminator_spec(self.discriminator)
        if self.generator.in_dim != self.noise.dim:
            raise ValueError(f"generator input width {self.generator.in_dim} != noise dim {self.noise.dim}")
        if self.generator.out_dim != 2 or self.discriminator.in_dim != 2:
            raise ValueError("generator output and discriminator input must be 2-D")
        if self.log_every < 1 or self.checkpoint_every < 0:
            raise ValueError("log_every must be >= 1 and checkpoint_every >= 0")
        if self.metric_samples < 1 or self.min_count < 1:
            raise ValueError("metric_samples and min_count must be positive")

    def replace(self, **sections) -> "RunConfig":
        return dataclasses.replace(self, **sections)


_RUN_KEYS = ("name", "log_every", "checkpoint_every", "output_dir", "metric_samples", "min_count")
_SECTIONS = ("run", "evolution", "data", "noise", "generator", "discriminator")


def _coerce(text: str, default):
    text = text.strip()
    if isinstance(default, bool):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        return tuple(s.strip() for s in text.split(",") if s.strip())
    return text


def _fill(cls, defaults, items: dict[str, str], section: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(items) - known
    if unknown:
        raise ValueError(f"[{section}] unknown keys: {sorted(unknown)}")
    values = {k: _coerce(v, getattr(defaults, k)) for k, v in items.items()}
    return dataclasses.replace(defaults, **values)


def _mlp(items: dict[str, str], default: MlpSpec, section: str) -> MlpSpec:
    unknown = set(items) - {"layers", "hidden", "output"}
    if unknown:
        raise ValueError(f"[{section}] unknown keys: {sorted(unknown)}")
    layers = items.get("layers")
    sizes = tuple(int(s) for s in layers.split(",")) if layers else default.layer_sizes
    return MlpSpec(sizes, items.get("hidden", default.hidden_activation).strip(),
                   items.get("output", default.output_activation).strip())


def from_sections(sections: dict[str, dict[str, str]]) -> RunConfig:
    unknown = set(sections) - set(_SECTIONS)
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    evo = _fill(EvolutionConfig, EvolutionConfig(), sections.get("evolution", {}), "evolution")
    dataset = _fill(DatasetSpec, DatasetSpec(), sections.get("data", {}), "data")
    noise = _fill(NoiseSpec, NoiseSpec(), sections.get("noise", {}), "noise")
    gen = _mlp(sections.get("generator", {}), default_generator_spec(noise.dim), "generator")
    disc = _mlp(sections.get("discriminator", {}), default_discriminator_spec(), "discriminator")
    run = sections.get("run", {})
    bad = set(run) - set(_RUN_KEYS)
    if bad:
        raise ValueError(f"[run] unknown keys: {sorted(bad)}")
    base = RunConfig()
    kwargs = {k: _coerce(v, getattr(base, k)) for k, v in run.items()}
    return RunConfig(evolution=evo, dataset=dataset, noise=noise, generator=gen, discriminator=disc, **kwargs)


def parse_overrides(pairs: list[str]) -> dict[str, dict[str, str]]:
    """``section.key=value`` strings into a nested dict."""
    out: dict[str, dict[str, str]] = {}
    for pair in pairs or []:
        if "=" not in pair or "." not in pair.split("=", 1)[0]:
            raise ValueError(f"override must look like section.key=value, got {pair!r}")
        lhs, value = pair.split("=", 1)
        section, key = lhs.split(".", 1)
        out.setdefault(section.strip(), {})[key.strip()] = value
    return out


def loads(text: str, overrides: list[str] | None = None, default_name: str = "run") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    parser.optionxform = str
    parser.read_string(text)
    sections = {s: dict(parser.items(s)) for s in parser.sections()}
    for section, items in parse_overrides(overrides or []).items():
        sections.setdefault(section, {}).update(items)
    sections.setdefault("run", {}).setdefault("name", default_name)
    return from_sections(sections)


def load(path, overrides: list[str] | None = None) -> RunConfig:
    path = Path(path)
    return loads(path.read_text(encoding="utf-8"), overrides, default_name=path.stem)


def dumps(cfg: RunConfig) -> str:
    def fmt(v):
        if isinstance(v, tuple):
            return ", ".join(str(x) for x in v)
        if isinstance(v, bool):
            return "true" if v else "false"
        return repr(v) if isinstance(v, float) else str(v)

    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser["run"] = {k: fmt(getattr(cfg, k)) for k in _RUN_KEYS}
    parser["evolution"] = {f.name: fmt(getattr(cfg.evolution, f.name)) for f in dataclasses.fields(cfg.evolution)}
    parser["data"] = {f.name: fmt(getattr(cfg.dataset, f.name)) for f in dataclasses.fields(cfg.dataset)}
    parser["noise"] = {f.name: fmt(getattr(cfg.noise, f.name)) for f in dataclasses.fields(cfg.noise)}
    for section, spec in (("generator", cfg.generator), ("discriminator", cfg.discriminator)):
        parser[section] = {"layers": fmt(spec.layer_sizes), "hidden": spec.hidden_activation,
                           "output": spec.output_activation}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
