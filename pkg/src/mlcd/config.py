"""Experiment configuration: per-system defaults plus YAML overrides.

A config file is a nested mapping, for example::

    system: radial_bistable
    seed: 3
    realizations: 20
    training: {max_epochs: 500}
    sampling: {n_points: 2000, horizon: 14}

Every key not given falls back to the defaults of the named system.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import yaml

from .network import TrainConfig

EPSILONS = (0.1, 0.2, 0.3, 0.4, 0.49)


@dataclass
class SamplingConfig:
    n_points: int = 10_000  # training points; the test split comes on top
    horizon: int = 20
    escape_factor: float = 2.0
    balance: object = "oversample"  # "oversample", "none" or per-class ratios
    max_cluster_points: int = 2000


@dataclass
class BenchmarkConfig:
    labeler: str = "integration"  # or "nn"
    n_max: int = 6
    full_profile: bool = False


@dataclass
class ExperimentConfig:
    system: str
    seed: int = 0
    num_labels: int | None = None  # None selects L from the persistence diagram
    q: int = 1
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    epsilons: tuple = EPSILONS
    realizations: int = 100
    benchmark: BenchmarkConfig = field(default_factory=BenchmarkConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# q, #I, batchsize, epochs, rho, beta, horizon, L, extra sampling options
_TABLE = {
    "linear_separatrix": (1, 10_000, 1_000, 100, 10, 0.1, 20, 2, {"escape_factor": 50.0}),
    "radial_bistable": (2, 1_000, 100, 1_000, 100, 0.1, 14, 2, {}),
    "radial_tristable": (5, 1_000, 100, 1_000, 100, 0.5, 20, 3, {}),
    "nonlinear_separatrix": (1, 10_000, 1_000, 100, 20, 0.1, 20, 2, {}),
    "hill_po": (5, 11_000, 1_000, 1_000, 100, 0.5, 20, 4, {}),
    "emt": (2, 100_000, 10_000, 2_000, 100, 0.1, 40, 2, {}),
    "ellipsoidal_2": (2, 10_000, 1_000, 1_000, 100, 0.1, 14, 2, {}),
    "ellipsoidal_3": (2, 20_000, 2_000, 1_000, 100, 0.1, 14, 2, {}),
    "ellipsoidal_4": (2, 800_000, 80_000, 2_000, 100, 0.1, 14, 2, {"balance": [70, 30]}),
    "ellipsoidal_5": (2, 800_000, 80_000, 2_000, 100, 0.1, 14, 2, {"balance": [86, 14]}),
}

# twice the minimal regular resolution reported for each system
_N_MAX = {"linear_separatrix": 6, "radial_bistable": 10, "radial_tristable": 26,
          "nonlinear_separatrix": 6, "hill_po": 24, "emt": 12, "ellipsoidal_2": 22,
          "ellipsoidal_3": 22, "ellipsoidal_4": 22, "ellipsoidal_5": 22}


def default_config(system: str) -> ExperimentConfig:
    if system not in _TABLE:
        raise KeyError(f"no defaults for system {system!r}; known: {', '.join(sorted(_TABLE))}")
    q, n_points, batch, epochs, rho, beta, horizon, L, extra = _TABLE[system]
    # the two largest ellipsoidal runs keep a 1:4 test to training ratio
    test_fraction = 0.2 if system in ("ellipsoidal_4", "ellipsoidal_5") else 0.5
    return ExperimentConfig(
        system=system, num_labels=L, q=q,
        sampling=SamplingConfig(n_points=n_points, horizon=horizon, **extra),
        training=TrainConfig(batchsize=batch, max_epochs=epochs, patience=rho,
                             convergence_ratio=beta, test_fraction=test_fraction),
        benchmark=BenchmarkConfig(n_max=_N_MAX[system]),
    )


def _merge(obj, overrides: dict, where: str):
    names = {f.name for f in dataclasses.fields(obj)}
    for key, value in overrides.items():
        if key not in names:
            raise KeyError(f"unknown config key {where}{key}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            if not isinstance(value, dict):
                raise TypeError(f"{where}{key} must be a mapping")
            _merge(current, value, f"{where}{key}.")
        else:
            setattr(obj, key, tuple(value) if key == "epsilons" else value)
    return obj


def config_from_dict(raw: dict) -> ExperimentConfig:
    raw = dict(raw or {})
    if "system" not in raw:
        raise KeyError("config must name a system")
    cfg = _merge(default_config(raw.pop("system")), raw, "")
    # re-run validation on the merged training settings
    cfg.training = TrainConfig(**dataclasses.asdict(cfg.training))
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return config_from_dict(yaml.safe_load(fh))
