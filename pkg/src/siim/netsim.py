"""Topologies, Rayleigh channel draws, SINR and sum-rate.

Channel matrices hold magnitudes: ``gains[n, m] = |h_nm|`` is the gain from
transmitter ``m`` to the receiver of link ``n``. Every function that takes a
gain matrix also accepts a batch with shape ``(..., N, N)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PATHLOSS_EXPONENT = 3.76
DIRECT_RANGE = (10.0, 15.0)
CROSS_RANGE = (10.0, 20.0)


@dataclass(frozen=True)
class Topology:
    """Fixed link geometry; ``dist[n, m]`` is the tx ``m`` -> rx ``n`` distance (m)."""

    dist: np.ndarray
    id: str = ""

    def __post_init__(self):
        d = np.asarray(self.dist, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] == 0:
            raise ValueError(f"distance matrix must be square and non-empty, got {d.shape}")
        if not np.all(np.isfinite(d)) or np.any(d <= 0):
            raise ValueError("distances must be finite and strictly positive")
        object.__setattr__(self, "dist", d)

    @property
    def n_links(self) -> int:
        return self.dist.shape[0]

    def pathloss(self) -> np.ndarray:
        """Mean-square channel gain ``d**-3.76`` per entry."""
        return self.dist ** (-PATHLOSS_EXPONENT)


@dataclass(frozen=True)
class ChannelInstance:
    topology_id: str
    gains: np.ndarray
    seed: int = 0

    def __post_init__(self):
        g = np.asarray(self.gains, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValueError(f"gain matrix must be square, got {g.shape}")
        if not np.all(np.isfinite(g)) or np.any(g < 0):
            raise ValueError("gains must be finite and nonnegative")
        object.__setattr__(self, "gains", g)

    @property
    def n_links(self) -> int:
        return self.gains.shape[0]


def make_topology(n_links: int, rng: np.random.Generator, id: str = "") -> Topology:
    if n_links < 1:
        raise ValueError(f"n_links must be >= 1, got {n_links}")
    dist = rng.uniform(*CROSS_RANGE, size=(n_links, n_links))
    dist[np.diag_indices(n_links)] = rng.uniform(*DIRECT_RANGE, size=n_links)
    return Topology(dist=dist, id=id)


def rayleigh_magnitude(rng: np.random.Generator, size) -> np.ndarray:
    """|z| for z ~ CN(0, 1), so that E|z|^2 = 1."""
    re = rng.standard_normal(size)
    im = rng.standard_normal(size)
    return np.sqrt((re * re + im * im) / 2.0)


def sample_channel(topo: Topology, rng: np.random.Generator, seed: int = 0) -> ChannelInstance:
    n = topo.n_links
    gains = np.sqrt(topo.pathloss()) * rayleigh_magnitude(rng, (n, n))
    return ChannelInstance(topology_id=topo.id, gains=gains, seed=seed)


def sample_seed(master_seed: int, stream: int, index: int) -> int:
    """Per-sample u64 seed, independent of generation order."""
    ss = np.random.SeedSequence([master_seed, stream, index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def channel_from_seed(topo: Topology, seed: int) -> ChannelInstance:
    return sample_channel(topo, np.random.default_rng(seed), seed=seed)


def _log(x, base):
    out = np.log1p(x)
    if base is None or base == "e" or base == np.e:
        return out
    if base == 2 or base == "2":
        return out / np.log(2.0)
    raise ValueError(f"unsupported log base {base!r}")


def sinr_all(gains: np.ndarray, p: np.ndarray, sigma2: float = 1.0) -> np.ndarray:
    """SINR of every link; ``gains`` is ``(..., N, N)``, ``p`` is ``(..., N)``."""
    if sigma2 <= 0:
        raise ValueError("noise power must be positive")
    g2 = np.square(gains)
    p = np.asarray(p, dtype=float)
    rx = g2 * p[..., None, :]
    signal = np.diagonal(rx, axis1=-2, axis2=-1)
    interference = rx.sum(axis=-1) - signal
    return signal / (sigma2 + interference)


def sinr(gains: np.ndarray, p: np.ndarray, n: int, sigma2: float = 1.0) -> float:
    gains = np.asarray(gains, dtype=float)
    if not 0 <= n < gains.shape[-1]:
        raise IndexError(f"link index {n} out of range for {gains.shape[-1]} links")
    return float(sinr_all(gains, p, sigma2)[n])


def sum_rate(gains: np.ndarray, p: np.ndarray, sigma2: float = 1.0, log_base="e"):
    """Sum over links of log(1 + SINR); natural log unless ``log_base=2``.

    Returns a float for one instance, an array for a batch.
    """
    r = _log(sinr_all(np.asarray(gains, dtype=float), p, sigma2), log_base).sum(axis=-1)
    return float(r) if np.ndim(r) == 0 else r
