"""Experiment configuration: a versioned JSON document validated before any compute.

Precedence, lowest to highest: built-in defaults, ``--preset``, the
``--config`` file, then individual command-line flags (``--seed``, ``--out``).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace

from .datagen import NoiseSpec
from .errors import ParameterError
from .nonlinearity import DistortionBank, benchmark_bank, random_bank
from .training import TrainConfig

SCHEMA_VERSION = 1

PRESETS = {
    "paper-km3": {"K": 3, "M": 3, "N": 5000, "distortions": "benchmark"},
    "paper-k4m5": {"K": 4, "M": 5, "N": 5000, "distortions": "benchmark"},
}

_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
_SWEEP_KEYS = {"N", "snr_db", "seeds"}


@dataclass(frozen=True)
class ExperimentConfig:
    K: int = 3
    M: int = 3
    N: int = 5000
    margin: float = 0.0
    pure_per_vertex: int = 1
    distortions: object = "benchmark"  # "benchmark", "random", or a list of distortion dicts
    noise: NoiseSpec = NoiseSpec()
    train: TrainConfig = TrainConfig()
    seeds: tuple = (0,)
    out: str = None
    sweep: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("K", "M", "N"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ParameterError(f"{name} must be a positive integer, got {v!r}")
        if self.M < self.K:
            raise ParameterError(f"need M >= K, got M={self.M}, K={self.K}")
        if not 0 <= self.margin < 1 / self.K:
            raise ParameterError("margin must lie in [0, 1/K)")
        if self.pure_per_vertex < 0:
            raise ParameterError("pure_per_vertex must be >= 0")
        if isinstance(self.distortions, str):
            if self.distortions not in ("benchmark", "random"):
                raise ParameterError(f"unknown distortion bank {self.distortions!r}")
            if self.distortions == "benchmark" and self.M > 5:
                raise ParameterError("the benchmark bank has 5 channels; use 'random' or an explicit list")
        elif len(self.distortions) != self.M:
            raise ParameterError("explicit distortion list must have M entries")
        if not self.seeds:
            raise ParameterError("at least one seed is required")
        unknown = set(self.sweep) - _SWEEP_KEYS
        if unknown:
            raise ParameterError(f"unknown sweep keys {sorted(unknown)}")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    def bank(self, seed=0) -> DistortionBank:
        if self.distortions == "benchmark":
            return benchmark_bank(self.M)
        if self.distortions == "random":
            return random_bank(self.M, seed)
        return DistortionBank.from_list(self.distortions)

    def to_dict(self):
        d = {"schema_version": SCHEMA_VERSION}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "noise":
                v = v.to_dict()
            elif f.name == "train":
                v = asdict(v)
            elif f.name == "seeds":
                v = list(v)
            elif f.name == "distortions" and not isinstance(v, str):
                v = list(v)
            elif f.name == "sweep":
                v = {k: list(x) for k, x in v.items()}
            d[f.name] = v
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ParameterError("config must be a JSON object")
        d = dict(d)
        version = d.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ParameterError(f"unsupported schema_version {version!r}")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown config keys {sorted(unknown)}")
        if "noise" in d:
            d["noise"] = NoiseSpec.from_dict(d["noise"])
        if "train" in d:
            t = d["train"]
            if not isinstance(t, dict):
                raise ParameterError("train must be an object")
            bad = set(t) - _TRAIN_KEYS
            if bad:
                raise ParameterError(f"unknown train keys {sorted(bad)}")
            d["train"] = TrainConfig(**t)
        if "sweep" in d:
            if not isinstance(d["sweep"], dict):
                raise ParameterError("sweep must be an object")
            d["sweep"] = {k: tuple(v) for k, v in d["sweep"].items()}
        if isinstance(d.get("distortions"), list):
            d["distortions"] = tuple(d["distortions"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ParameterError(str(exc)) from None

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    def merged(self, **overrides):
        """Copy with top-level fields replaced; ``train`` may be given as a dict of overrides."""
        if isinstance(overrides.get("train"), dict):
            overrides["train"] = replace(self.train, **overrides["train"])
        return replace(self, **overrides)


def resolve(preset=None, config_text=None, seed=None, out=None) -> ExperimentConfig:
    """Apply defaults, preset, config file and flags in that order."""
    base = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ParameterError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        base.update(PRESETS[preset])
    if config_text is not None:
        try:
            user = json.loads(config_text)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"config is not valid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise ParameterError("config must be a JSON object")
        base.update(user)
    cfg = ExperimentConfig.from_dict(base)
    if seed is not None:
        cfg = cfg.merged(seeds=(int(seed),))
    if out is not None:
        cfg = cfg.merged(out=str(out))
    return cfg
