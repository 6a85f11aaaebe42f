"""Experiment configuration with a lossless JSON form."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

SCHEMA_VERSION = 1


@dataclass
class ExperimentConfig:
    n_links: int = 10
    topology_seed_a: int = 1
    topology_seed_b: int = 2
    train_size: int = 5000
    test_size: int = 2000
    # fraction of Topology-B requests in the test stream, interleaved deterministically
    stream_b_fraction: float = 0.5
    M: int = 5
    hidden: tuple = (1000, 1000, 500, 500, 100)
    learning_rate: float = 1e-3
    batch_size: int = 100
    epochs: int = 300
    patience: int = 30
    var_floor: float = 1e-3
    alpha: float = 1.96
    epsilon: float = 0.2
    n_si: int = 1000
    p_max: float = 1.0
    sigma2: float = 1e-4
    log_base: str = "e"
    wmmse_max_iter: int = 500
    wmmse_tol: float = 1e-5
    # "ensemble": DNN baseline is the ensemble mean with the gate off; "single": first member only
    dnn_baseline: str = "ensemble"
    eps_grid: tuple = (0.01, 0.02, 0.1, 0.2, 0.5)
    n_rounds: int = 10
    probe_size: int = 1000
    max_stream: int = 50000
    master_seed: int = 0
    threads: int = 1
    output_dir: str = "runs"

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.eps_grid = tuple(sorted(float(e) for e in self.eps_grid))
        if self.n_links < 1:
            raise ValueError("n_links must be >= 1")
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.alpha < 0 or self.epsilon <= 0:
            raise ValueError("alpha must be >= 0 and epsilon > 0")
        if self.sigma2 <= 0 or self.p_max <= 0:
            raise ValueError("sigma2 and p_max must be positive")
        if self.n_si < 1:
            raise ValueError("n_si must be >= 1")
        if not 0.0 <= self.stream_b_fraction <= 1.0:
            raise ValueError("stream_b_fraction must lie in [0, 1]")
        if self.log_base not in ("e", "2"):
            raise ValueError("log_base must be 'e' or '2'")
        if self.dnn_baseline not in ("ensemble", "single"):
            raise ValueError("dnn_baseline must be 'ensemble' or 'single'")

    @property
    def layer_dims(self) -> tuple:
        return (self.n_links * self.n_links, *self.hidden, 2 * self.n_links)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        d["eps_grid"] = list(self.eps_grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def digest(self) -> str:
        """Short hash of the settings that affect results (output_dir and threads excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("threads")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def desk_config(**overrides) -> ExperimentConfig:
    """Reduced network used for laptop-scale runs and the acceptance suite."""
    base = dict(hidden=(200, 200, 100), epochs=300, patience=30, n_si=500)
    base.update(overrides)
    return ExperimentConfig(**base)
