"""Epistemic confidence boxes around a predicted power vector and the
sum-rate based check that decides whether the prediction can be used as is."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import EnsemblePrediction, epistemic_std
from .netsim import sum_rate


@dataclass
class FeasibleSet:
    lower: np.ndarray
    upper: np.ndarray


@dataclass
class QualifyDecision:
    credible: bool
    r_hat: float
    r_upper: float
    r_lower: float
    ratio: float
    feasible_set: FeasibleSet
    p_hat: np.ndarray


def confidence_intervals(pred: EnsemblePrediction, alpha: float, p_max: float = 1.0) -> FeasibleSet:
    """Per-link ``p_hat +/- alpha * sigma_epi`` in physical units, clipped to [0, p_max]."""
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    center = np.asarray(pred.mean) * p_max
    half = alpha * epistemic_std(pred) * p_max
    return FeasibleSet(np.clip(center - half, 0.0, p_max), np.clip(center + half, 0.0, p_max))


def maxdist(a, b, c):
    """Largest pairwise absolute difference; elementwise for arrays."""
    return np.maximum(np.maximum(np.abs(a - b), np.abs(a - c)), np.abs(b - c))


def criterion(gains, pred: EnsemblePrediction, alpha: float, sigma2: float = 1.0, p_max: float = 1.0, log_base="e"):
    """Sum-rates at the prediction and box corners, and the relative spread.

    Works on one instance or a batch. A zero predicted rate gives an infinite
    ratio so the instance is never credible.
    """
    box = confidence_intervals(pred, alpha, p_max)
    p_hat = np.asarray(pred.mean) * p_max
    r_hat = sum_rate(gains, p_hat, sigma2, log_base)
    r_up = sum_rate(gains, box.upper, sigma2, log_base)
    r_lo = sum_rate(gains, box.lower, sigma2, log_base)
    spread = maxdist(r_up, r_lo, r_hat)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(np.asarray(r_hat) > 0, spread / np.where(np.asarray(r_hat) > 0, r_hat, 1.0), np.inf)
    return r_hat, r_up, r_lo, ratio, box, p_hat


def qualify(
    gains,
    pred: EnsemblePrediction,
    alpha: float = 1.96,
    epsilon: float = 0.2,
    sigma2: float = 1.0,
    p_max: float = 1.0,
    log_base="e",
) -> QualifyDecision:
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    r_hat, r_up, r_lo, ratio, box, p_hat = criterion(gains, pred, alpha, sigma2, p_max, log_base)
    ratio = float(ratio)
    return QualifyDecision(
        credible=bool(ratio <= epsilon),
        r_hat=float(r_hat),
        r_upper=float(r_up),
        r_lower=float(r_lo),
        ratio=ratio,
        feasible_set=box,
        p_hat=p_hat,
    )
