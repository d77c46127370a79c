"""Experiment configuration: one JSON file drives dataset, training and benchmark.

Schema (all keys optional, defaults below)::

    {
      "name": "desk",
      "seed": 0,
      "fleet":    {GenConfig fields, e.g. "n_prosumers": 10, "pg_range": [0, 80]},
      "profile":  {ProfileConfig fields},
      "n_points": 200, "n_in": 200, "n_out": 1000,
      "epsilon": 0.05, "rel_std": 0.10,
      "output_convention": "consistent", "norm_mode": "elementwise",
      "p_grid": [...], "s_grid": [...],
      "timing_repeats": 10, "timing_points": null,
      "check_points": 50,
      "train": {TrainConfig fields except p}
    }
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .proxy.train import TrainConfig
from .reformulations import NORM_MODES
from .vpp import OUTPUT_CONVENTIONS, GenConfig, ProfileConfig

SEED_ENV = "CCDISPATCH_SEED"


def _tupled(cls, data: dict):
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(names)
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in data.items()})


@dataclass
class BenchConfig:
    name: str = "desk"
    seed: int = 0
    fleet: GenConfig = field(default_factory=GenConfig)
    profile: ProfileConfig = field(default_factory=ProfileConfig)
    n_points: int = 200
    n_in: int = 200
    n_out: int = 1000
    epsilon: float = 0.05
    rel_std: float = 0.10
    output_convention: str = "consistent"
    norm_mode: str = "elementwise"
    p_grid: list = field(default_factory=lambda: [0.0, 0.25, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])
    s_grid: list = field(default_factory=lambda: [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0])
    timing_repeats: int = 10
    timing_points: int | None = None
    check_points: int = 50
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> "BenchConfig":
        self.fleet.validate()
        if self.n_points < 2:
            raise ValueError("n_points must be at least 2 (one train and one test point)")
        if self.n_in < 1 or self.n_out < 1:
            raise ValueError("scenario counts must be positive")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.output_convention not in OUTPUT_CONVENTIONS:
            raise ValueError(f"output_convention must be one of {OUTPUT_CONVENTIONS}")
        if self.norm_mode not in NORM_MODES:
            raise ValueError(f"norm_mode must be one of {NORM_MODES}")
        if not self.p_grid or any(not 0.0 <= p <= 1.0 for p in self.p_grid):
            raise ValueError("p_grid must be a nonempty subset of [0, 1]")
        if not self.s_grid or any(s <= 0 for s in self.s_grid):
            raise ValueError("s_grid must be nonempty and positive")
        if self.timing_repeats < 1:
            raise ValueError("timing_repeats must be at least 1")
        return self

    def to_json(self) -> dict:
        data = dataclasses.asdict(self)
        train = data["train"]
        train.pop("p", None)
        return data

    @classmethod
    def from_json(cls, data: dict) -> "BenchConfig":
        data = dict(data)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "fleet" in data:
            data["fleet"] = _tupled(GenConfig, data["fleet"])
        if "profile" in data:
            data["profile"] = _tupled(ProfileConfig, data["profile"])
        if "train" in data:
            train = dict(data["train"])
            train.pop("p", None)
            data["train"] = _tupled(TrainConfig, train)
        return cls(**data).validate()


def load_config(path=None, seed_override=None) -> BenchConfig:
    """Read a config file (defaults when ``path`` is None).

    The seed is taken from, in increasing priority: the file, the
    ``CCDISPATCH_SEED`` environment variable, ``seed_override``.
    """
    cfg = BenchConfig.from_json(json.loads(Path(path).read_text())) if path else BenchConfig().validate()
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            cfg.seed = int(env)
        except ValueError as exc:
            raise ValueError(f"{SEED_ENV} must be an integer, got {env!r}") from exc
    if seed_override is not None:
        cfg.seed = int(seed_override)
    return cfg
