"""Command-line harness.

    siim gen-data     --config cfg.json --out runs/
    siim train        --out runs/                 (reads runs/train_A.jsonl)
    siim run          --out runs/                 (reads runs/ensemble.json)
    siim report       --out runs/
    siim sweep-eps    --out runs/
    siim sweep-rounds --out runs/

Settings resolve as flags > config file > defaults. Every output carries the
schema version and the hash of the config that produced it.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline as pl
from .config import SCHEMA_VERSION, ExperimentConfig
from .ensemble import ensemble_to_dict, load_ensemble, predict
from .io import (
    cdf_rows,
    format_table1,
    read_dataset,
    read_report,
    table1_rows,
    write_csv,
    write_dataset,
    write_json,
)

log = logging.getLogger("siim")

TRAIN_FILE = "train_A.jsonl"
TEST_FILE = "test.jsonl"
MODEL_FILE = "ensemble.json"
REPORT_FILE = "report.json"


class StageError(RuntimeError):
    def __init__(self, stage, msg):
        super().__init__(f"{stage}: {msg}")
        self.stage = stage


def load_config(args) -> ExperimentConfig:
    d = {}
    if args.config:
        try:
            d = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise StageError("config", f"cannot read {args.config}: {exc}") from exc
    for item in args.set or []:
        key, _, val = item.partition("=")
        try:
            d[key] = json.loads(val)
        except json.JSONDecodeError:
            d[key] = val
    if args.seed is not None:
        d["master_seed"] = args.seed
    if args.threads is not None:
        d["threads"] = args.threads
    if args.out is not None:
        d["output_dir"] = args.out
    try:
        return ExperimentConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise StageError("config", str(exc)) from exc


def _header(cfg):
    return {"schema_version": SCHEMA_VERSION, "config_hash": cfg.digest()}


def _out(cfg) -> Path:
    return Path(cfg.output_dir)


def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise StageError(stage, f"missing input {path}")
    return path


def _meta(path: Path, cfg, **extra):
    write_json(path.with_suffix(".meta.json"), {**_header(cfg), **extra})


def cmd_gen_data(cfg, args):
    out = _out(cfg)
    topos = pl.topologies(cfg)
    train = pl.generate_dataset(cfg, topos["A"], cfg.train_size)
    test = pl.label_instances((inst for _, inst in pl.request_stream(cfg, topos, 0, cfg.test_size)), cfg)
    for name, data in ((TRAIN_FILE, train), (TEST_FILE, test)):
        write_dataset(out / name, data, cfg.p_max)
        _meta(out / name, cfg, records=len(data))
    print(f"wrote {len(train)} training and {len(test)} test records to {out}")


def _load_base(cfg, args, stage):
    path = _require(Path(args.data) if args.data else _out(cfg) / TRAIN_FILE, stage)
    data = read_dataset(path, cfg.p_max)
    if len(data) and data.gains.shape[1] != cfg.n_links:
        raise StageError(stage, f"{path} holds {data.gains.shape[1]}-link instances, config says {cfg.n_links}")
    return data


def cmd_train(cfg, args):
    out = _out(cfg)
    data = _load_base(cfg, args, "train")
    if len(data) == 0:
        raise StageError("train", "dataset is empty")
    ens, hists = pl.fit_ensemble(cfg, data)
    obj = {"schema_version": SCHEMA_VERSION, **ensemble_to_dict(ens, cfg.digest())}
    write_json(out / MODEL_FILE, obj)
    rows = [
        {"member": m, "epoch": e, "train_loss": h.train_loss[e], "val_loss": h.val_loss[e] if e < len(h.val_loss) else ""}
        for m, h in enumerate(hists)
        for e in range(len(h.train_loss))
    ]
    write_csv(out / "training_curves.csv", rows, _header(cfg))
    # smoke check that the written file predicts
    predict(_load_model(cfg, out / MODEL_FILE), data.features[:1])
    print(f"trained {ens.M} members on {len(data)} samples -> {out / MODEL_FILE}")


def _load_model(cfg, path):
    try:
        return load_ensemble(_require(path, "load-model").read_bytes())
    except ValueError as exc:
        raise StageError("load-model", f"{path}: {exc}") from exc


def _state(cfg, args, stage):
    path = Path(args.model) if args.model else _out(cfg) / MODEL_FILE
    ens = _load_model(cfg, path)
    if ens.layer_dims != cfg.layer_dims:
        raise StageError(stage, f"model layer_dims {ens.layer_dims} do not match config {cfg.layer_dims}")
    base = _load_base(cfg, args, stage)
    return pl.SelfImproveState(cfg, ens, base, pl.Dataset.empty(cfg.n_links), cfg.n_si)


def _write_eps(cfg, state, out):
    gains, tids = pl.test_instances(cfg)
    rows = pl.eps_sweep(state, gains, tids)
    write_csv(out / "eps_sweep.csv", rows, _header(cfg))
    return rows


def _write_cdfs(cfg, cdf, out):
    for group, algs in cdf.items():
        for alg, samples in algs.items():
            write_csv(out / f"cdf_{group}_{alg}.csv", cdf_rows(samples), _header(cfg))


def cmd_run(cfg, args):
    out = _out(cfg)
    state = _state(cfg, args, "run")
    eps_rows = _write_eps(cfg, state.copy(), out)
    report = pl.run_experiment(cfg, state)
    report["eps_sweep"] = eps_rows
    write_json(out / REPORT_FILE, report)
    write_csv(out / "table1.csv", table1_rows(report["table1"]), _header(cfg))
    write_csv(out / "rounds.csv", report["rounds_stream"], _header(cfg))
    _write_cdfs(cfg, report["cdf"], out)
    print(format_table1(report["table1"]))


def cmd_report(cfg, args):
    out = _out(cfg)
    path = _require(Path(args.report) if args.report else out / REPORT_FILE, "report")
    try:
        report = read_report(path)
    except ValueError as exc:
        raise StageError("report", str(exc)) from exc
    header = {"schema_version": report["schema_version"], "config_hash": report["config_hash"]}
    series = out / "series"
    for group, algs in report["cdf"].items():
        for alg, samples in algs.items():
            write_csv(series / f"cdf_{group}_{alg}.csv", cdf_rows(samples), header)
    if report.get("eps_sweep"):
        write_csv(series / "eps_sweep.csv", report["eps_sweep"], header)
    if report.get("rounds_stream"):
        write_csv(series / "rounds.csv", report["rounds_stream"], header)
    t = report["table1"]
    print(format_table1(t))
    print(f"requests {report['n_requests']}  enhancing rate {t['Total']['enhancing_rate']:.3f}")
    it = report["iterations"]
    print(f"median WMMSE iterations: warm {it['median_warm']}  cold {it['median_cold']}")


def cmd_sweep_eps(cfg, args):
    out = _out(cfg)
    rows = _write_eps(cfg, _state(cfg, args, "sweep-eps"), out)
    for r in rows:
        print(f"eps={r['epsilon']:<6} enhancing_rate={r['enhancing_rate']:.3f}")


def cmd_sweep_rounds(cfg, args):
    out = _out(cfg)
    rows = pl.rounds_sweep(_state(cfg, args, "sweep-rounds"))
    write_csv(out / "rounds.csv", rows, _header(cfg))
    for r in rows:
        print(f"round={r['round']} enhancing_rate={r['enhancing_rate']:.3f} dnn_rate_B={r['dnn_rate_B']:.4f}")


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "run": cmd_run,
    "report": cmd_report,
    "sweep-eps": cmd_sweep_eps,
    "sweep-rounds": cmd_sweep_rounds,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--threads", type=int, help="worker threads for member training")
    common.add_argument("--out", help="output directory")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config field (JSON value)")
    common.add_argument("--data", help="labeled training dataset (default OUT/train_A.jsonl)")
    common.add_argument("--model", help="ensemble file (default OUT/ensemble.json)")
    common.add_argument("--report", help="report file (default OUT/report.json)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="siim", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = load_config(args)
        COMMANDS[args.command](cfg, args)
    except StageError as exc:
        print(f"siim {args.command}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"siim {args.command}: {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
