"""WMMSE power control, trivial baselines and an exhaustive grid oracle."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .netsim import sum_rate

DEFAULT_MAX_ITER = 500
DEFAULT_TOL = 1e-5


@dataclass
class SolverResult:
    p: np.ndarray
    iterations: int
    objective_trace: np.ndarray = field(repr=False)


@dataclass
class BatchSolverResult:
    p: np.ndarray  # (B, N)
    iterations: np.ndarray  # (B,)
    traces: list = field(repr=False)  # per instance, length iterations + 1

    def __len__(self):
        return len(self.iterations)

    def __getitem__(self, i) -> SolverResult:
        return SolverResult(self.p[i], int(self.iterations[i]), self.traces[i])


def _check_gains(gains):
    g = np.asarray(gains, dtype=float)
    if g.ndim < 2 or g.shape[-1] != g.shape[-2]:
        raise ValueError(f"gain matrix must be (..., N, N), got {g.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("channel gains must be finite")
    return g


def wmmse_batch(
    gains,
    sigma2: float = 1.0,
    p_max: float = 1.0,
    p_init=None,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    log_base="e",
) -> BatchSolverResult:
    """Scalar-channel WMMSE on amplitudes ``v = sqrt(p)``, one instance per row.

    Each instance stops independently once ``max|v - v_prev| < tol``.
    """
    g = _check_gains(gains)
    if g.ndim == 2:
        g = g[None]
    b, n, _ = g.shape
    g2 = np.square(g)
    g_diag = np.diagonal(g, axis1=-2, axis2=-1)
    v_max = np.sqrt(p_max)

    if p_init is None:
        v = np.full((b, n), v_max)
    else:
        p0 = np.broadcast_to(np.asarray(p_init, dtype=float), (b, n))
        if np.any(p0 < 0) or np.any(p0 > p_max * (1 + 1e-12)):
            raise ValueError("initial power outside [0, p_max]")
        v = np.sqrt(np.clip(p0, 0.0, p_max))

    def rate(v):
        return sum_rate(g, np.square(v), sigma2, log_base)

    trace = [np.atleast_1d(rate(v))]
    iterations = np.zeros(b, dtype=int)
    active = np.ones(b, dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        va, ga, g2a, gd = v[active], g[active], g2[active], g_diag[active]
        total = sigma2 + np.einsum("bnm,bm->bn", g2a, va * va)
        u = gd * va / total
        w = 1.0 / (1.0 - u * gd * va)
        denom = np.einsum("bm,bmn->bn", w * u * u, g2a)
        numer = w * u * gd
        v_new = np.where(denom > 0, numer / np.where(denom > 0, denom, 1.0), va)
        v_new = np.clip(v_new, 0.0, v_max)

        delta = np.max(np.abs(v_new - va), axis=1)
        idx = np.flatnonzero(active)
        v[idx] = v_new
        iterations[idx] += 1
        active[idx[delta < tol]] = False
        trace.append(np.atleast_1d(rate(v)))

    trace = np.stack(trace)  # (max_iter_run + 1, B)
    traces = [trace[: iterations[i] + 1, i].copy() for i in range(b)]
    return BatchSolverResult(p=np.clip(np.square(v), 0.0, p_max), iterations=iterations, traces=traces)


def wmmse(
    gains,
    sigma2: float = 1.0,
    p_max: float = 1.0,
    p_init=None,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    log_base="e",
) -> SolverResult:
    """WMMSE for one instance; cold start at full power unless ``p_init`` is given."""
    g = _check_gains(gains)
    if g.ndim != 2:
        raise ValueError("wmmse takes a single (N, N) instance; use wmmse_batch")
    return wmmse_batch(g, sigma2, p_max, p_init, max_iter, tol, log_base)[0]


def max_power(n_links: int, p_max: float = 1.0) -> np.ndarray:
    return np.full(n_links, float(p_max))


def rand_power(n_links: int, rng: np.random.Generator, p_max: float = 1.0) -> np.ndarray:
    return rng.uniform(0.0, p_max, size=n_links)


def grid_oracle(gains, sigma2: float = 1.0, p_max: float = 1.0, levels: int = 101, log_base="e") -> SolverResult:
    """Exhaustive search over ``levels**N`` evenly spaced power vectors.

    Ties go to the lexicographically smallest vector.
    """
    g = _check_gains(gains)
    n = g.shape[-1]
    if g.ndim != 2 or n > 3:
        raise NotImplementedError("grid oracle supports a single instance with at most 3 links")
    if not 2 <= levels <= 256:
        raise NotImplementedError("grid oracle supports 2..256 levels per axis")
    grid = np.linspace(0.0, p_max, levels)

    best_val, best_p = -np.inf, None
    # chunk over the first coordinate so the N=3 case stays within memory
    if n == 1:
        rest = np.zeros((1, 0))
    else:
        rest = np.array(list(itertools.product(grid, repeat=n - 1)))
    for p0 in grid:
        cand = np.column_stack([np.full(len(rest), p0), rest])
        vals = sum_rate(g, cand, sigma2, log_base)
        vals = np.atleast_1d(vals)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val, best_p = vals[i], cand[i]
    return SolverResult(p=best_p.copy(), iterations=levels**n, objective_trace=np.array([best_val]))
