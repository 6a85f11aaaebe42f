"""File formats: JSON-lines datasets, JSON reports, CSV plot tables."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .config import SCHEMA_VERSION
from .pipeline import ALGORITHMS, Dataset


class SchemaError(ValueError):
    pass


def dataset_lines(data: Dataset, p_max: float = 1.0, labeled: bool = True):
    for i in range(len(data)):
        rec = {
            "topology_id": data.topology_ids[i],
            "seed": int(data.seeds[i]),
            "gains": data.gains[i].tolist(),
        }
        if labeled:
            rec["p_star"] = (data.targets[i] * p_max).tolist()
        yield json.dumps(rec)


def write_dataset(path, data: Dataset, p_max: float = 1.0) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for line in dataset_lines(data, p_max):
            fh.write(line + "\n")


def read_dataset(path, p_max: float = 1.0) -> Dataset:
    """Parse a labeled dataset; malformed records raise SchemaError naming the line."""
    path = Path(path)
    gains, targets, tids, seeds = [], [], [], []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                g = np.asarray(rec["gains"], dtype=float)
                p = np.asarray(rec["p_star"], dtype=float)
                n = g.shape[0]
                if g.shape != (n, n) or p.shape != (n,):
                    raise ValueError(f"shape mismatch gains {g.shape} p_star {p.shape}")
                if gains and g.shape != gains[0].shape:
                    raise ValueError(f"link count {n} differs from earlier records")
                tids.append(str(rec["topology_id"]))
                seeds.append(int(rec["seed"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"{path}:{lineno}: bad dataset record ({exc})") from exc
            gains.append(g)
            targets.append(p / p_max)
    if not gains:
        return Dataset(np.zeros((0, 0, 0)), np.zeros((0, 0)), [], [])
    return Dataset(np.stack(gains), np.stack(targets), tids, seeds)


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, default=_jsonable))


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"not serializable: {type(x)}")


def read_report(path) -> dict:
    obj = json.loads(Path(path).read_text())
    if obj.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"{path}: schema_version {obj.get('schema_version')!r}, expected {SCHEMA_VERSION}")
    return obj


def write_csv(path, rows, header: dict) -> None:
    """Rows of dicts to CSV. ``header`` lands in leading ``#`` comment lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = list(rows[0]) if rows else []
    for r in rows[1:]:
        cols += [k for k in r if k not in cols]
    with path.open("w", newline="") as fh:
        for k, v in header.items():
            fh.write(f"# {k}={v}\n")
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        w.writerows(rows)


def read_csv(path) -> list:
    with Path(path).open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def table1_rows(table: dict) -> list:
    rows = []
    for alg in ALGORITHMS:
        row = {"algorithm": alg}
        for group in ("A", "B", "Total"):
            cell = table[group][alg]
            row[f"{group}_mean"] = f"{cell['mean']:.6f}"
            row[f"{group}_percent"] = f"{cell['percent']:.2f}"
        rows.append(row)
    return rows


def cdf_rows(samples) -> list:
    """Empirical CDF points (x, F) rising from 0 to 1."""
    xs = np.sort(np.asarray(samples, dtype=float))
    if len(xs) == 0:
        return []
    rows = [{"rate": float(xs[0]), "cdf": 0.0}]
    rows += [{"rate": float(x), "cdf": (i + 1) / len(xs)} for i, x in enumerate(xs)]
    return rows


def format_table1(table: dict) -> str:
    lines = [f"{'Algorithm':<10} {'Topology A':>18} {'Topology B':>18} {'Total':>18}"]
    for alg in ALGORITHMS:
        cells = [f"{table[g][alg]['mean']:.3f} ({table[g][alg]['percent']:6.2f}%)" for g in ("A", "B", "Total")]
        lines.append(f"{alg:<10} " + " ".join(f"{c:>18}" for c in cells))
    return "\n".join(lines)
