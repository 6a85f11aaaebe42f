"""Sweep the receiver noise power and report the MaxPower and RandPower
sum-rates relative to cold-start WMMSE on Topology A.

    python3 scripts/calibrate_noise.py --instances 500
"""
import argparse

import numpy as np

from siim.config import ExperimentConfig
from siim.netsim import channel_from_seed, sample_seed, sum_rate
from siim.pipeline import topologies
from siim.solver import rand_power, wmmse_batch


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--instances", type=int, default=500)
    ap.add_argument("--sigma2", type=float, nargs="+", default=[1.0, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6])
    args = ap.parse_args()

    cfg = ExperimentConfig()
    topo = topologies(cfg)["A"]
    gains = np.stack([channel_from_seed(topo, sample_seed(cfg.master_seed, 10, i)).gains for i in range(args.instances)])
    rng = np.random.default_rng(cfg.master_seed)
    rand = np.stack([rand_power(cfg.n_links, rng) for _ in range(args.instances)])
    full = np.ones((args.instances, cfg.n_links))

    print(f"{'sigma2':>8} {'WMMSE':>8} {'MaxPower%':>10} {'RandPower%':>11}")
    for s2 in args.sigma2:
        r_w = sum_rate(gains, wmmse_batch(gains, s2).p, s2).mean()
        r_m = sum_rate(gains, full, s2).mean()
        r_r = sum_rate(gains, rand, s2).mean()
        print(f"{s2:>8.0e} {r_w:>8.3f} {100 * r_m / r_w:>10.2f} {100 * r_r / r_w:>11.2f}")


if __name__ == "__main__":
    main()
