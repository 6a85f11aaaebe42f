"""Deep ensembles: independently initialized members combined as a uniform
Gaussian mixture, with the variance split into aleatoric and epistemic parts."""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .neural import (
    ModelFormatError,
    ModelVersionError,
    TrainConfig,
    fit_input_scaling,
    forward,
    init_params,
    params_from_dict,
    params_to_dict,
    train,
)

ENSEMBLE_FORMAT_VERSION = 1


@dataclass
class Ensemble:
    members: list

    def __post_init__(self):
        if not self.members:
            raise ValueError("an ensemble needs at least one member")
        dims = {m.layer_dims for m in self.members}
        if len(dims) != 1:
            raise ValueError(f"members disagree on layer_dims: {dims}")

    @property
    def M(self) -> int:
        return len(self.members)

    @property
    def layer_dims(self) -> tuple:
        return self.members[0].layer_dims


@dataclass
class EnsemblePrediction:
    """Per-link mixture moments in normalized power units."""

    mean: np.ndarray
    aleatoric_var: np.ndarray
    epistemic_var: np.ndarray
    total_var: np.ndarray

    def __getitem__(self, i) -> "EnsemblePrediction":
        return EnsemblePrediction(self.mean[i], self.aleatoric_var[i], self.epistemic_var[i], self.total_var[i])

    def __len__(self):
        return len(self.mean)


def member_seeds(master_seed: int, m: int, round_: int = 0) -> list:
    ss = np.random.SeedSequence([master_seed, round_])
    return [int(s.generate_state(1)[0]) for s in ss.spawn(m)]


def train_ensemble(
    M: int,
    features,
    targets,
    config: TrainConfig,
    layer_dims,
    seed: int = 0,
    round_: int = 0,
    threads: int = 1,
    var_floor: float = 1e-6,
    val_metric=None,
):
    """Train ``M`` members from distinct derived seeds on the full dataset.

    Returns the ensemble and the per-member training histories. Results do
    not depend on ``threads``.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    x = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if len(x) == 0:
        raise ValueError("cannot train on an empty dataset")
    seeds = member_seeds(seed, M, round_)

    def fit_one(s):
        rng = np.random.default_rng(s)
        params = fit_input_scaling(init_params(layer_dims, rng, var_floor), x)
        return train(params, x, y, replace(config, seed=int(rng.integers(2**63))), val_metric)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(fit_one, seeds))
    else:
        results = [fit_one(s) for s in seeds]
    return Ensemble([p for p, _ in results]), [h for _, h in results]


def aggregate(member_means, member_vars) -> EnsemblePrediction:
    """Mixture moments from stacked member outputs, shape ``(M, ..., N)``."""
    mu = np.asarray(member_means, dtype=float)
    s2 = np.asarray(member_vars, dtype=float)
    mean = mu.mean(axis=0)
    aleatoric = s2.mean(axis=0)
    epistemic = np.maximum(np.mean(mu * mu, axis=0) - mean * mean, 0.0)
    return EnsemblePrediction(mean, aleatoric, epistemic, aleatoric + epistemic)


def member_outputs(ens: Ensemble, features):
    outs = [forward(m, features) for m in ens.members]
    return np.stack([o[0] for o in outs]), np.stack([o[1] for o in outs])


def predict(ens: Ensemble, features) -> EnsemblePrediction:
    return aggregate(*member_outputs(ens, features))


def epistemic_std(pred: EnsemblePrediction) -> np.ndarray:
    return np.sqrt(pred.epistemic_var)


def ensemble_to_dict(ens: Ensemble, config_hash: str = "") -> dict:
    return {
        "version": ENSEMBLE_FORMAT_VERSION,
        "M": ens.M,
        "created_from_config_hash": config_hash,
        "members": [params_to_dict(m, config_hash) for m in ens.members],
    }


def ensemble_from_dict(obj: dict) -> Ensemble:
    if not isinstance(obj, dict) or "version" not in obj:
        raise ModelFormatError("ensemble object has no version header")
    if obj["version"] != ENSEMBLE_FORMAT_VERSION:
        raise ModelVersionError(f"ensemble format version {obj['version']!r}, expected {ENSEMBLE_FORMAT_VERSION}")
    members = [params_from_dict(m) for m in obj.get("members", [])]
    if len(members) != obj.get("M"):
        raise ModelFormatError(f"ensemble declares M={obj.get('M')} but holds {len(members)} members")
    return Ensemble(members)


def save_ensemble(ens: Ensemble, config_hash: str = "") -> bytes:
    return json.dumps(ensemble_to_dict(ens, config_hash)).encode()


def load_ensemble(data: bytes) -> Ensemble:
    try:
        obj = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"ensemble stream is not valid JSON: {exc}") from exc
    return ensemble_from_dict(obj)
