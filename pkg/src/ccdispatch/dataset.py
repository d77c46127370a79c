"""Synthetic dataset generation and loading.

Layout of a dataset directory::

    instance.json
    manifest.json
    inputs/x_0001.json ...
    scenarios/in_0001.csv, scenarios/out_0001.csv ... (+ .json sidecars)

Point ids start at 1; odd ids form the training split, even ids the test split.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import BenchConfig
from .proxy.aggregate import set_aggregate
from .proxy.reduce import EmptyReducedSetError, equality_partition, reduce_polyhedron
from .proxy.train import TrainPoint
from .vpp import (InputVector, ScenarioSet, VppInstance, assemble_compact, generate_instance, load_input,
                  load_instance, load_scenarios, sample_input, sample_scenarios, save_input, save_instance,
                  save_scenarios, write_json)

log = logging.getLogger(__name__)

ROLES = ("in_train", "out_train", "in_test", "out_test")
MAX_POINT_ATTEMPTS = 20


def split_of(point_id: int) -> str:
    return "train" if point_id % 2 == 1 else "test"


@dataclass
class DataPoint:
    point_id: int
    x: InputVector
    in_scen: ScenarioSet
    out_scen: ScenarioSet

    @property
    def split(self) -> str:
        return split_of(self.point_id)

    def as_train_point(self) -> TrainPoint:
        return TrainPoint(self.point_id, self.x.as_array(), self.in_scen, self.out_scen)


@dataclass
class Dataset:
    instance: VppInstance
    points: list
    epsilon: float
    seed: int
    root: Path | None = None

    def split(self, name: str) -> list:
        if name not in ("train", "test"):
            raise ValueError(f"unknown split {name!r}")
        return [pt for pt in self.points if pt.split == name]

    def role(self, role: str):
        """``(point_id, x, scenarios)`` triples of one of the four roles."""
        if role not in ROLES:
            raise ValueError(f"unknown role {role!r}; expected one of {ROLES}")
        sample, split = role.split("_")
        return [(pt.point_id, pt.x, pt.in_scen if sample == "in" else pt.out_scen) for pt in self.split(split)]

    def train_points(self) -> list:
        return [pt.as_train_point() for pt in self.split("train")]


def _draw_point(instance, cp, part, cfg: BenchConfig, point_id: int):
    """Draw (x, in, out) until the p=1 tightened set has an interior point."""
    for attempt in range(MAX_POINT_ATTEMPTS):
        key = [cfg.seed, point_id, attempt]
        x = sample_input(instance, cfg.profile, seed=key + [1])
        in_scen = sample_scenarios(instance, x, cfg.n_in, seed=key + [2], rel_std=cfg.rel_std)
        try:
            reduce_polyhedron(cp, x, set_aggregate(cp.c_ineq, in_scen), 1.0, part)
        except EmptyReducedSetError:
            continue
        out_scen = sample_scenarios(instance, x, cfg.n_out, seed=key + [3], rel_std=cfg.rel_std)
        return x, in_scen, out_scen, attempt
    raise RuntimeError(f"point {point_id}: no draw with a nonempty p=1 set in {MAX_POINT_ATTEMPTS} attempts")


def generate_dataset(cfg: BenchConfig, out_dir) -> Dataset:
    """Write a full dataset for ``cfg`` under ``out_dir`` and return it."""
    root = Path(out_dir)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create dataset directory {root}: {exc}") from exc
    instance = generate_instance(cfg.fleet, seed=[cfg.seed, 0])
    instance = dataclasses.replace(instance, output_convention=cfg.output_convention)
    cp = assemble_compact(instance)
    part = equality_partition(cp)
    save_instance(instance, root / "instance.json")
    entries, points = [], []
    for point_id in range(1, cfg.n_points + 1):
        x, in_scen, out_scen, attempt = _draw_point(instance, cp, part, cfg, point_id)
        x_path = f"inputs/x_{point_id:04d}.json"
        in_path = f"scenarios/in_{point_id:04d}.csv"
        out_path = f"scenarios/out_{point_id:04d}.csv"
        save_input(x, root / x_path)
        save_scenarios(in_scen, root / in_path, cfg.rel_std)
        save_scenarios(out_scen, root / out_path, cfg.rel_std)
        entries.append({"id": point_id, "split": split_of(point_id), "input": x_path, "in_scenarios": in_path,
                        "out_scenarios": out_path, "seed": [cfg.seed, point_id, attempt]})
        points.append(DataPoint(point_id, x, in_scen, out_scen))
    write_json(root / "manifest.json", {
        "config": cfg.to_json(),
        "seed": cfg.seed,
        "epsilon": cfg.epsilon,
        "n_points": cfg.n_points,
        "n_in": cfg.n_in,
        "n_out": cfg.n_out,
        "split_rule": "odd ids train, even ids test",
        "points": entries,
    })
    return Dataset(instance, points, cfg.epsilon, cfg.seed, root)


def load_dataset(root) -> Dataset:
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no dataset at {root} (missing manifest.json; run gen-dataset first)")
    manifest = json.loads(manifest_path.read_text())
    instance = load_instance(root / "instance.json")
    points = []
    for entry in manifest["points"]:
        points.append(DataPoint(entry["id"], load_input(root / entry["input"]),
                                load_scenarios(root / entry["in_scenarios"]),
                                load_scenarios(root / entry["out_scenarios"])))
    return Dataset(instance, points, manifest["epsilon"], manifest["seed"], root)


def dataset_matrix(points) -> np.ndarray:
    """Stack input vectors of ``points`` (rows)."""
    return np.vstack([pt.x.as_array() for pt in points])
