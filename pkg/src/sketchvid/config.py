"""Run configuration: one INI file with flat sections, hashed canonically."""
import configparser
import hashlib
import json
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

from .optflow import FlowParams
from .synthdata import GeneratorConfig
from .training import TrainConfig


class ConfigError(ValueError):
    """Missing, unreadable or invalid configuration."""


@dataclass
class RetrievalConfig:
    lam2: float = 0.5
    ks: str = "1,5,10"
    tolerance: int = 5
    train_split: str = "train"
    eval_split: str = "test"

    def k_list(self):
        try:
            ks = [int(k) for k in str(self.ks).split(",") if k.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad k list {self.ks!r}") from exc
        if not ks or min(ks) < 1:
            raise ConfigError("k values must be positive")
        return sorted(ks)

    def validate(self):
        if not 0 <= self.lam2 <= 1:
            raise ConfigError("lam2 must lie in [0, 1]")
        self.k_list()
        for s in (self.train_split, self.eval_split):
            if s not in ("train", "val", "test"):
                raise ConfigError(f"unknown split {s!r}")


@dataclass
class RunConfig:
    seed: int = 0
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    flow: FlowParams = field(default_factory=FlowParams)
    training: TrainConfig = field(default_factory=TrainConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)

    SECTIONS = ("generator", "flow", "training", "retrieval")

    def validate(self):
        try:
            self.generator.validate()
            self.flow.validate()
            self.training.validate()
            self.retrieval.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.generator.flow_length != self.training.flow_length:
            raise ConfigError("generator.flow_length and training.flow_length differ")

    def canonical(self):
        out = {"run": {"seed": self.seed}}
        for name in self.SECTIONS:
            sec = getattr(self, name)
            out[name] = {f.name: getattr(sec, f.name) for f in fields(sec)
                         if not (name == "training" and f.name == "seed")}
        return out

    def digest(self):
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def sub_seed(self, purpose):
        """Named sub-stream of the global seed."""
        h = hashlib.sha256(f"{self.seed}:{purpose}".encode()).digest()
        return int.from_bytes(h[:4], "little")

    def train_config(self, **overrides):
        """Training settings with the seed drawn from the ``training`` sub-stream."""
        d = {f.name: getattr(self.training, f.name) for f in fields(self.training)}
        d["seed"] = self.sub_seed("training")
        d.update(overrides)
        return TrainConfig(**d)

    def to_ini(self):
        cp = configparser.ConfigParser()
        cp.optionxform = str
        for sec, values in self.canonical().items():
            cp[sec] = {k: _fmt(v) for k, v in values.items()}
        lines = []
        for sec in cp.sections():
            lines.append(f"[{sec}]")
            lines.extend(f"{k} = {v}" for k, v in cp[sec].items())
            lines.append("")
        return "\n".join(lines)

    def save(self, path):
        Path(path).write_text(self.to_ini())


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _coerce(default, raw, where):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        return type(default)(raw.strip())
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {type(default).__name__}") from exc


def _section(cls, items, name):
    defaults = cls()
    known = {f.name.lower(): f.name for f in fields(cls)}
    kwargs = {}
    for k, raw in items:
        if k.lower() not in known:
            raise ConfigError(f"unknown option [{name}] {k}")
        key = known[k.lower()]
        kwargs[key] = _coerce(getattr(defaults, key), raw, f"[{name}] {k}")
    return cls(**kwargs)


def parse_config(text, source="<string>"):
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text, source=str(source))
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    classes = {"generator": GeneratorConfig, "flow": FlowParams, "training": TrainConfig,
               "retrieval": RetrievalConfig}
    for sec in cp.sections():
        if sec not in classes and sec != "run":
            raise ConfigError(f"{source}: unknown section [{sec}]")
    if cp.has_section("training") and any(k.lower() == "seed" for k in cp.options("training")):
        raise ConfigError(f"{source}: set the seed under [run]; training seeds derive from it")
    kwargs = {}
    for name, cls in classes.items():
        if cp.has_section(name):
            kwargs[name] = _section(cls, cp.items(name), name)
    seed = 0
    if cp.has_section("run"):
        for k, raw in cp.items("run"):
            if k != "seed":
                raise ConfigError(f"unknown option [run] {k}")
            seed = _coerce(0, raw, "[run] seed")
    cfg = RunConfig(seed=seed, **kwargs)
    cfg.validate()
    return cfg


PRESETS = ("benchmark",)


def load_config(path=None):
    """Read a config file, or a builtin preset by name (default: benchmark)."""
    if path is None or str(path) in PRESETS:
        name = "benchmark" if path is None else str(path)
        text = resources.files("sketchvid.presets").joinpath(f"{name}.ini").read_text()
        return parse_config(text, f"preset:{name}")
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    return parse_config(text, p)
