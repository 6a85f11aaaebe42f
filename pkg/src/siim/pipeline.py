"""Training stage, request-by-request self-improving stage, and the
experiment drivers built on them (main comparison, epsilon sweep, rounds)."""
from __future__ import annotations

import copy
import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np

from .config import SCHEMA_VERSION, ExperimentConfig
from .ensemble import Ensemble, predict, train_ensemble
from .netsim import ChannelInstance, Topology, channel_from_seed, make_topology, sample_seed, sum_rate
from .neural import TrainConfig, forward
from .qualify import criterion, qualify
from .solver import max_power, rand_power, wmmse, wmmse_batch

log = logging.getLogger(__name__)

ALGORITHMS = ("WMMSE", "SI-DNN", "DNN", "MaxPower", "RandPower")
TOPOLOGY_IDS = ("A", "B")

# stream tags for per-sample seeds
TRAIN_STREAM = 0
TEST_STREAM = 1
PROBE_STREAM = 2
RANDPOWER_STREAM = 3


@dataclass
class Dataset:
    """Labeled instances; targets are normalized powers ``p* / p_max``."""

    gains: np.ndarray  # (S, N, N)
    targets: np.ndarray  # (S, N)
    topology_ids: list = field(default_factory=list)
    seeds: list = field(default_factory=list)

    def __len__(self):
        return len(self.targets)

    @property
    def features(self) -> np.ndarray:
        return self.gains.reshape(len(self.gains), -1)

    @classmethod
    def empty(cls, n_links: int) -> "Dataset":
        return cls(np.zeros((0, n_links, n_links)), np.zeros((0, n_links)), [], [])

    def concat(self, other: "Dataset") -> "Dataset":
        return Dataset(
            np.concatenate([self.gains, other.gains]),
            np.concatenate([self.targets, other.targets]),
            self.topology_ids + other.topology_ids,
            self.seeds + other.seeds,
        )

    def append(self, inst: ChannelInstance, target: np.ndarray) -> None:
        self.gains = np.concatenate([self.gains, inst.gains[None]])
        self.targets = np.concatenate([self.targets, np.asarray(target, dtype=float)[None]])
        self.topology_ids.append(inst.topology_id)
        self.seeds.append(inst.seed)


def topologies(cfg: ExperimentConfig) -> dict:
    return {
        "A": make_topology(cfg.n_links, np.random.default_rng(cfg.topology_seed_a), "A"),
        "B": make_topology(cfg.n_links, np.random.default_rng(cfg.topology_seed_b), "B"),
    }


def request_topology(i: int, b_fraction: float) -> str:
    """Deterministic interleave: request ``i`` is from B when the running B quota steps up."""
    return "B" if np.floor((i + 1) * b_fraction) > np.floor(i * b_fraction) else "A"


def request_stream(cfg: ExperimentConfig, topos: dict, start: int, count: int, stream: int = TEST_STREAM):
    for i in range(start, start + count):
        tid = request_topology(i, cfg.stream_b_fraction)
        yield i, channel_from_seed(topos[tid], sample_seed(cfg.master_seed, stream, i))


def stack_instances(instances) -> tuple:
    instances = list(instances)
    if not instances:
        return np.zeros((0, 0, 0)), []
    return np.stack([c.gains for c in instances]), [c.topology_id for c in instances]


def label_instances(instances, cfg: ExperimentConfig) -> Dataset:
    instances = list(instances)
    gains, tids = stack_instances(instances)
    if len(instances) == 0:
        return Dataset.empty(cfg.n_links)
    res = wmmse_batch(gains, cfg.sigma2, cfg.p_max, None, cfg.wmmse_max_iter, cfg.wmmse_tol, cfg.log_base)
    return Dataset(gains, res.p / cfg.p_max, tids, [c.seed for c in instances])


def generate_dataset(cfg: ExperimentConfig, topo: Topology, size: int, stream: int = TRAIN_STREAM) -> Dataset:
    insts = (channel_from_seed(topo, sample_seed(cfg.master_seed, stream, i)) for i in range(size))
    return label_instances(insts, cfg)


def train_config(cfg: ExperimentConfig) -> TrainConfig:
    return TrainConfig(
        learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size,
        epochs=cfg.epochs,
        patience=cfg.patience,
        seed=cfg.master_seed,
    )


def sum_rate_metric(cfg: ExperimentConfig):
    """Held-out score for early stopping: minus the predicted/label sum-rate ratio."""
    n = cfg.n_links

    def metric(params, x, y):
        g = x.reshape(len(x), n, n)
        mu, _ = forward(params, x)
        ref = sum_rate(g, y * cfg.p_max, cfg.sigma2, cfg.log_base).mean()
        return -sum_rate(g, mu * cfg.p_max, cfg.sigma2, cfg.log_base).mean() / ref

    return metric


def fit_ensemble(cfg: ExperimentConfig, data: Dataset, round_: int = 0):
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    return train_ensemble(
        cfg.M,
        data.features,
        data.targets,
        train_config(cfg),
        cfg.layer_dims,
        seed=cfg.master_seed,
        round_=round_,
        threads=cfg.threads,
        var_floor=cfg.var_floor,
        val_metric=sum_rate_metric(cfg),
    )


@dataclass
class RequestRecord:
    index: int
    topology_id: str
    round: int
    credible: bool
    enhanced: bool
    criterion_ratio: float
    used_power: np.ndarray
    achieved_rate: float
    dnn_rate: float
    wmmse_rate: float
    maxpower_rate: float
    randpower_rate: float
    warm_iterations: int = 0
    cold_iterations: int = 0


@dataclass
class SelfImproveState:
    config: ExperimentConfig
    ensemble: Ensemble
    base: Dataset
    si: Dataset
    n_si: int
    round: int = 0
    records: list = field(default_factory=list)
    train_histories: list = field(default_factory=list)

    def copy(self) -> "SelfImproveState":
        return copy.deepcopy(self)


def training_stage(cfg: ExperimentConfig, base: Dataset = None) -> SelfImproveState:
    """Label Topology-A instances with cold-start WMMSE and train the ensemble."""
    if base is None:
        if cfg.train_size < 1:
            raise ValueError("train_size must be >= 1")
        base = generate_dataset(cfg, topologies(cfg)["A"], cfg.train_size)
    ens, hists = fit_ensemble(cfg, base, round_=0)
    log.info("trained %d members on %d samples", cfg.M, len(base))
    return SelfImproveState(cfg, ens, base, Dataset.empty(cfg.n_links), cfg.n_si, 0, [], [hists])


def state_digest(state: SelfImproveState) -> str:
    h = hashlib.sha256()
    for m in state.ensemble.members:
        for a in m.arrays():
            h.update(a.tobytes())
    h.update(state.base.gains.tobytes())
    h.update(state.base.targets.tobytes())
    h.update(str((state.round, len(state.si))).encode())
    return h.hexdigest()


def dnn_power(state: SelfImproveState, features) -> np.ndarray:
    """Gate-free prediction used by the DNN baseline, physical units."""
    cfg = state.config
    if cfg.dnn_baseline == "single":
        mu, _ = forward(state.ensemble.members[0], features)
        return mu * cfg.p_max
    return predict(state.ensemble, features).mean * cfg.p_max


def handle_request(state: SelfImproveState, inst: ChannelInstance, index: int = -1):
    """Predict, qualify, and enhance with warm-started WMMSE when not credible.

    Enhanced solutions are appended to the self-improving dataset. Returns the
    power used for transmission and a record with every baseline evaluated on
    the same instance.
    """
    cfg = state.config
    g = inst.gains
    feats = g.reshape(-1)
    pred = predict(state.ensemble, feats)
    decision = qualify(g, pred, cfg.alpha, cfg.epsilon, cfg.sigma2, cfg.p_max, cfg.log_base)
    solve = dict(sigma2=cfg.sigma2, p_max=cfg.p_max, max_iter=cfg.wmmse_max_iter, tol=cfg.wmmse_tol, log_base=cfg.log_base)
    cold = wmmse(g, **solve)

    warm_iters = 0
    if decision.credible:
        used = decision.p_hat
    else:
        warm = wmmse(g, p_init=decision.p_hat, **solve)
        used, warm_iters = warm.p, warm.iterations
        state.si.append(inst, used / cfg.p_max)

    dnn_rate = decision.r_hat if cfg.dnn_baseline == "ensemble" else sum_rate(g, dnn_power(state, feats), cfg.sigma2, cfg.log_base)
    rp = rand_power(inst.n_links, np.random.default_rng(sample_seed(cfg.master_seed, RANDPOWER_STREAM, max(index, 0))), cfg.p_max)
    rec = RequestRecord(
        index=index,
        topology_id=inst.topology_id,
        round=state.round,
        credible=decision.credible,
        enhanced=not decision.credible,
        criterion_ratio=decision.ratio,
        used_power=used,
        achieved_rate=sum_rate(g, used, cfg.sigma2, cfg.log_base),
        dnn_rate=dnn_rate,
        wmmse_rate=sum_rate(g, cold.p, cfg.sigma2, cfg.log_base),
        maxpower_rate=sum_rate(g, max_power(inst.n_links, cfg.p_max), cfg.sigma2, cfg.log_base),
        randpower_rate=sum_rate(g, rp, cfg.sigma2, cfg.log_base),
        warm_iterations=warm_iters,
        cold_iterations=cold.iterations,
    )
    state.records.append(rec)
    return used, rec


def maybe_retrain(state: SelfImproveState) -> SelfImproveState:
    """Once ``n_si`` enhanced samples are collected, retrain every member from
    scratch on the merged data, fold the samples into the base set and clear them."""
    if len(state.si) < state.n_si:
        return state
    merged = state.base.concat(state.si)
    state.round += 1
    state.ensemble, hists = fit_ensemble(state.config, merged, round_=state.round)
    state.train_histories.append(hists)
    state.base = merged
    state.si = Dataset.empty(state.config.n_links)
    log.info("self-improving round %d: retrained on %d samples", state.round, len(merged))
    return state


# ---------------------------------------------------------------- reporting


def _mean(x):
    return float(np.mean(x)) if len(x) else 0.0


def summarize_records(records) -> dict:
    """Mean sum-rate per algorithm, per topology and in total, with % of WMMSE."""
    columns = {
        "WMMSE": "wmmse_rate",
        "SI-DNN": "achieved_rate",
        "DNN": "dnn_rate",
        "MaxPower": "maxpower_rate",
        "RandPower": "randpower_rate",
    }
    groups = {"Total": records}
    for tid in TOPOLOGY_IDS:
        groups[tid] = [r for r in records if r.topology_id == tid]
    table = {}
    for gname, recs in groups.items():
        ref = _mean([r.wmmse_rate for r in recs])
        row = {}
        for alg, attr in columns.items():
            m = _mean([getattr(r, attr) for r in recs])
            row[alg] = {"mean": m, "percent": 100.0 * m / ref if ref > 0 else 0.0}
        row["n"] = len(recs)
        row["enhancing_rate"] = _mean([r.enhanced for r in recs])
        table[gname] = row
    return table


def cdf_samples(records) -> dict:
    attrs = {"WMMSE": "wmmse_rate", "SI-DNN": "achieved_rate", "DNN": "dnn_rate", "MaxPower": "maxpower_rate", "RandPower": "randpower_rate"}
    out = {}
    for gname in ("Total", *TOPOLOGY_IDS):
        recs = records if gname == "Total" else [r for r in records if r.topology_id == gname]
        out[gname] = {alg: sorted(float(getattr(r, a)) for r in recs) for alg, a in attrs.items()}
    return out


def rounds_from_records(records) -> list:
    rows = []
    for rnd in sorted({r.round for r in records}):
        recs = [r for r in records if r.round == rnd]
        row = {"round": rnd, "requests": len(recs), "enhancing_rate": _mean([r.enhanced for r in recs])}
        for tid in TOPOLOGY_IDS:
            sub = [r for r in recs if r.topology_id == tid]
            row[f"enhancing_rate_{tid}"] = _mean([r.enhanced for r in sub])
            row[f"dnn_rate_{tid}"] = _mean([r.dnn_rate for r in sub])
            row[f"si_rate_{tid}"] = _mean([r.achieved_rate for r in sub])
        rows.append(row)
    return rows


def iteration_stats(records) -> dict:
    warm = [r.warm_iterations for r in records if r.enhanced]
    cold = [r.cold_iterations for r in records]
    return {
        "median_warm": float(np.median(warm)) if warm else None,
        "median_cold": float(np.median(cold)) if cold else None,
        "n_warm": len(warm),
    }


def run_experiment(cfg: ExperimentConfig, state: SelfImproveState, n_requests: int = None, start: int = 0) -> dict:
    """Drive the self-improving loop over the deterministic test stream.

    ``state`` is mutated (records, D_SI, retrains). Returns the report dict.
    """
    n_requests = cfg.test_size if n_requests is None else n_requests
    topos = topologies(cfg)
    for i, inst in request_stream(cfg, topos, start, n_requests):
        handle_request(state, inst, i)
        maybe_retrain(state)
    recs = state.records
    return {
        "schema_version": SCHEMA_VERSION,
        "config_hash": cfg.digest(),
        "config": cfg.to_dict(),
        "n_requests": len(recs),
        "table1": summarize_records(recs),
        "cdf": cdf_samples(recs),
        "rounds_stream": rounds_from_records(recs),
        "iterations": iteration_stats(recs),
    }


# ------------------------------------------------------- batched evaluations


@dataclass
class StaticEvaluation:
    """Round-frozen ensemble evaluated on a batch of instances."""

    topology_ids: np.ndarray
    wmmse_rate: np.ndarray
    dnn_rate: np.ndarray
    warm_rate: np.ndarray
    ratio: np.ndarray
    warm_iterations: np.ndarray
    cold_iterations: np.ndarray

    def enhancing_rate(self, eps: float, tid: str = None) -> float:
        mask = self._mask(tid)
        return float(np.mean(self.ratio[mask] > eps)) if mask.any() else 0.0

    def si_rate(self, eps: float, tid: str = None) -> float:
        mask = self._mask(tid)
        si = np.where(self.ratio > eps, self.warm_rate, self.dnn_rate)
        return float(np.mean(si[mask])) if mask.any() else 0.0

    def mean(self, attr: str, tid: str = None) -> float:
        mask = self._mask(tid)
        return float(np.mean(getattr(self, attr)[mask])) if mask.any() else 0.0

    def _mask(self, tid):
        if tid is None:
            return np.ones(len(self.topology_ids), dtype=bool)
        return self.topology_ids == tid


def evaluate_static(state: SelfImproveState, gains: np.ndarray, topology_ids) -> StaticEvaluation:
    cfg = state.config
    solve = dict(max_iter=cfg.wmmse_max_iter, tol=cfg.wmmse_tol, log_base=cfg.log_base)
    feats = gains.reshape(len(gains), -1)
    pred = predict(state.ensemble, feats)
    r_hat, _, _, ratio, _, p_hat = criterion(gains, pred, cfg.alpha, cfg.sigma2, cfg.p_max, cfg.log_base)
    cold = wmmse_batch(gains, cfg.sigma2, cfg.p_max, **solve)
    warm = wmmse_batch(gains, cfg.sigma2, cfg.p_max, p_init=p_hat, **solve)
    dnn = r_hat if cfg.dnn_baseline == "ensemble" else sum_rate(gains, dnn_power(state, feats), cfg.sigma2, cfg.log_base)
    return StaticEvaluation(
        topology_ids=np.asarray(topology_ids),
        wmmse_rate=np.atleast_1d(sum_rate(gains, cold.p, cfg.sigma2, cfg.log_base)),
        dnn_rate=np.atleast_1d(dnn),
        warm_rate=np.atleast_1d(sum_rate(gains, warm.p, cfg.sigma2, cfg.log_base)),
        ratio=np.atleast_1d(ratio),
        warm_iterations=warm.iterations,
        cold_iterations=cold.iterations,
    )


def test_instances(cfg: ExperimentConfig, n: int = None, start: int = 0, stream: int = TEST_STREAM):
    n = cfg.test_size if n is None else n
    gains, tids = stack_instances(inst for _, inst in request_stream(cfg, topologies(cfg), start, n, stream))
    if n == 0:
        gains = np.zeros((0, cfg.n_links, cfg.n_links))
    return gains, tids


def eps_sweep(state: SelfImproveState, gains, topology_ids, eps_grid=None) -> list:
    """Enhancing rate and SI-DNN sum-rate per epsilon with the ensemble frozen."""
    cfg = state.config
    eps_grid = cfg.eps_grid if eps_grid is None else sorted(eps_grid)
    if len(gains) == 0:
        return [{"epsilon": e, "enhancing_rate": 0.0} for e in eps_grid]
    ev = evaluate_static(state, gains, topology_ids)
    rows = []
    for e in eps_grid:
        row = {"epsilon": e, "enhancing_rate": ev.enhancing_rate(e), "si_rate": ev.si_rate(e)}
        for tid in TOPOLOGY_IDS:
            row[f"enhancing_rate_{tid}"] = ev.enhancing_rate(e, tid)
            row[f"si_rate_{tid}"] = ev.si_rate(e, tid)
        row["dnn_rate"] = ev.mean("dnn_rate")
        row["wmmse_rate"] = ev.mean("wmmse_rate")
        rows.append(row)
    return rows


def probe_row(state: SelfImproveState, probe_gains, probe_tids) -> dict:
    cfg = state.config
    ev = evaluate_static(state, probe_gains, probe_tids)
    row = {
        "round": state.round,
        "train_size": len(state.base),
        "enhancing_rate": ev.enhancing_rate(cfg.epsilon),
        "dnn_rate": ev.mean("dnn_rate"),
        "si_rate": ev.si_rate(cfg.epsilon),
        "wmmse_rate": ev.mean("wmmse_rate"),
    }
    for tid in TOPOLOGY_IDS:
        row[f"enhancing_rate_{tid}"] = ev.enhancing_rate(cfg.epsilon, tid)
        row[f"dnn_rate_{tid}"] = ev.mean("dnn_rate", tid)
        row[f"si_rate_{tid}"] = ev.si_rate(cfg.epsilon, tid)
        row[f"wmmse_rate_{tid}"] = ev.mean("wmmse_rate", tid)
    return row


def rounds_sweep(state: SelfImproveState, n_rounds: int = None) -> list:
    """Run the loop until ``n_rounds`` retrains happen (or the stream cap is hit),
    evaluating a fixed probe set of both topologies before the first and after
    every retrain."""
    cfg = state.config
    n_rounds = cfg.n_rounds if n_rounds is None else n_rounds
    topos = topologies(cfg)
    probe = [channel_from_seed(topos[t], sample_seed(cfg.master_seed, PROBE_STREAM, 2 * i + k))
             for i in range(cfg.probe_size) for k, t in enumerate(TOPOLOGY_IDS)]
    probe_gains, probe_tids = stack_instances(probe)
    rows = [probe_row(state, probe_gains, probe_tids)]
    i = len(state.records)
    while state.round < n_rounds and i < cfg.max_stream:
        _, inst = next(request_stream(cfg, topos, i, 1))
        handle_request(state, inst, i)
        before = state.round
        maybe_retrain(state)
        if state.round != before:
            rows.append(probe_row(state, probe_gains, probe_tids))
            rows[-1]["requests_seen"] = i + 1
        i += 1
    stream_rows = {r["round"]: r for r in rounds_from_records(state.records)}
    for row in rows:
        s = stream_rows.get(row["round"], {})
        row["stream_enhancing_rate"] = s.get("enhancing_rate", 0.0)
        row["stream_requests"] = s.get("requests", 0)
    return rows
