"""Experiment configuration: one flat document covering the experiment factors
and the training settings."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ..errors import ConfigError
from ..training import TrainConfig

TASKS = ("gaussian", "ar1")
FACTORS = ("default", "D", "M", "mu_star", "K", "likelihood_mode")

# per-task training defaults applied before user overrides
TASK_TRAIN_DEFAULTS = {
    "gaussian": {},
    "ar1": {"flow_layers": 6, "activation": "elu"},
}

DESK_PRESET = {"N": 512, "epochs": 40, "flow_layers": 4, "flow_hidden": 64}


@dataclass
class ExperimentConfig:
    task: str = "gaussian"
    D: int = 10
    M: int | None = None            # 32 for gaussian, 8 for ar1
    mu_star: float = 3.0
    K: int = 1
    likelihood_mode: str = "known"
    N: int = 1024
    L: int = 32
    lam: float = 1.0
    mu_obs: list = field(default_factory=lambda: list(range(12)))
    refits: int = 1
    first_seed: int = 0
    n_eval: int = 4000
    factor: str = "default"
    out: str = "results"
    unlabeled_csv: str | None = None
    n_countries: int = 15
    T: int = 15
    mh_samples: int = 4000
    mh_burn_in: int = 5000
    mh_thin: int = 100
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.M is None:
            self.M = 32 if self.task == "gaussian" else 8
        if self.factor not in FACTORS:
            raise ConfigError(f"factor must be one of {FACTORS}")
        if self.D < 1 or self.K < 1 or self.N < 1 or self.M < 0 or self.refits < 1:
            raise ConfigError("D, K, N, refits must be >= 1 and M >= 0")
        if self.L < 2:
            raise ConfigError("L must be >= 2")
        if self.likelihood_mode not in ("known", "estimated"):
            raise ConfigError("likelihood_mode must be 'known' or 'estimated'")
        if self.task == "ar1":
            if self.likelihood_mode != "known":
                raise ConfigError("the ar1 task supports likelihood_mode='known' only")
            if self.unlabeled_csv is None and self.M > self.n_countries:
                raise ConfigError(f"M={self.M} exceeds n_countries={self.n_countries}")
        self.mu_obs = [float(v) for v in self.mu_obs]
        self.train = replace(self.train, L=self.L, lam=self.lam,
                             likelihood_mode=self.likelihood_mode)

    @property
    def seeds(self) -> list[int]:
        return list(range(self.first_seed, self.first_seed + self.refits))

    @property
    def factor_value(self):
        return "" if self.factor == "default" else getattr(self, self.factor)

    def to_dict(self) -> dict:
        """Flat document: training fields sit next to the experiment fields."""
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "train"}
        t = asdict(self.train)
        for k in ("L", "lam", "likelihood_mode"):
            t.pop(k)
        d.update(t)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        exp_keys = {f.name for f in fields(cls)} - {"train"}
        train_keys = {f.name for f in fields(TrainConfig)} - {"L", "lam", "likelihood_mode"}
        unknown = set(d) - exp_keys - train_keys
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        task = d.get("task", "gaussian")
        if task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {task!r}")
        tk = {**TASK_TRAIN_DEFAULTS[task], **{k: v for k, v in d.items() if k in train_keys}}
        try:
            train = TrainConfig(**tk)
            return cls(**{k: v for k, v in d.items() if k in exp_keys}, train=train)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def apply_preset(d: dict, preset: str | None) -> dict:
    """Merge a named preset under explicit settings (explicit values win)."""
    if preset is None:
        return dict(d)
    if preset != "desk":
        raise ConfigError(f"unknown preset {preset!r}")
    out = {**DESK_PRESET, **d}
    if out.get("task", "gaussian") == "gaussian":
        out["D"] = min(int(out.get("D", 2)), 2)
    return out


def load_config_file(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or any(isinstance(v, dict) for v in doc.values()):
        raise ConfigError("config file must be a flat JSON object")
    return doc
