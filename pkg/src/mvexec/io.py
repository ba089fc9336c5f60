"""Deterministic file output: CSVs, JSONL event streams, binary caches.

Layouts are bit-exact: floats are written with ``repr`` (shortest
round-trip form), headers are fixed, rows are newline-terminated and no
wall-clock data is embedded, so identical computations produce identical
bytes.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import MissingInputError
from .market import MarketSpec
from .solver import SliceSolution


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(x) for x in row) + "\n")


def _state_columns(spec: MarketSpec):
    n = spec.n_venues
    return [f"spread_{k}" for k in range(n)] + [f"imb_{k}" for k in range(n)]


def write_value_csv(path: Path, solution: SliceSolution, spec: MarketSpec) -> None:
    space = spec.space
    header = ["t", "q"] + _state_columns(spec) + ["v"]

    def rows():
        for i, t in enumerate(solution.times):
            for qi, q in enumerate(solution.grid.q_grid):
                for s in range(space.n_states):
                    yield ([t, q] + list(space.spread_idx[s]) + list(space.imbalance_idx[s])
                           + [solution.value[i, qi, s]])

    write_csv(path, header, rows())


def write_policy_csv(path: Path, solution: SliceSolution, spec: MarketSpec) -> None:
    space = spec.space
    n = spec.n_venues
    header = (["t", "q"] + _state_columns(spec)
              + [f"l_{k}" for k in range(n)] + [f"p_{k}" for k in range(n)]
              + [f"m_{k}" for k in range(n)])

    def rows():
        for i in range(solution.grid.n_t):
            t = solution.times[i]
            for qi, q in enumerate(solution.grid.q_grid):
                for s in range(space.n_states):
                    yield ([t, q] + list(space.spread_idx[s]) + list(space.imbalance_idx[s])
                           + [solution.volumes[i, qi, s, k] for k in range(n)]
                           + [int(solution.limits[i, qi, s, k]) for k in range(n)]
                           + [solution.market[i, qi, s, k] for k in range(n)])

    write_csv(path, header, rows())


def write_events_jsonl(path: Path, log) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(log.to_jsonl())


def write_trace_csv(path: Path, rows: Iterable[tuple[int, str, float]]) -> None:
    write_csv(path, ["slice", "parameter", "estimate"], rows)


def write_inventory_csv(path: Path, path_points: Iterable[tuple[float, float]]) -> None:
    write_csv(path, ["t", "q"], path_points)


def write_report_json(path: Path, report) -> None:
    payload = {
        "seed": report.seed,
        "n_slices": len(report.slices),
        "total_cash": report.total_cash,
        "final_q": report.final_q,
        "slices": [
            {
                "index": s.index,
                "slice_start": s.slice_start,
                "q_start": s.q_start,
                "q_end": s.q_end,
                "cash_delta": s.cash_delta,
                "value_at_start": s.value_at_start,
                "n_fills": len(s.log.fills),
                "n_transitions": len(s.log.transitions),
            }
            for s in report.slices
        ],
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Binary cache

def cache_key(*mappings) -> str:
    blob = json.dumps(mappings, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def save_solution_cache(directory: Path, key: str, solution: SliceSolution) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{key}.npz"
    np.savez_compressed(
        path,
        value=solution.value,
        volumes=solution.volumes,
        limits=solution.limits,
        market=solution.market,
        gain=solution.gain,
        slice_start=np.array([solution.slice_start]),
    )
    return path


def load_solution_cache(path: Path, grid) -> SliceSolution:
    if not Path(path).exists():
        raise MissingInputError(f"cache file {path} does not exist")
    data = np.load(path)
    return SliceSolution(
        grid=grid,
        slice_start=float(data["slice_start"][0]),
        value=data["value"],
        volumes=data["volumes"],
        limits=data["limits"],
        market=data["market"],
        gain=data["gain"],
    )


# ---------------------------------------------------------------------------
# Figure-ready bundles from a run directory

def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    if not path.exists():
        raise MissingInputError(f"required input {path} is missing")
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]


def plot_data_bundles(
    run_dir: Path,
    out_dir: Path,
    spreads: Sequence[int],
    imbalances: Sequence[int],
) -> list[Path]:
    """Emit per-figure CSVs from a completed run directory.

    Families: value vs inventory, limits vs inventory, volumes vs
    inventory (each per saved slice at the requested market state),
    parameter estimates per slice, and the drift trace alone.
    Everything is computed before any file is written.
    """
    run_dir = Path(run_dir)
    trace_path = run_dir / "trace.csv"
    if not trace_path.exists():
        raise MissingInputError(f"{run_dir} does not look like a run directory (no trace.csv)")
    theader, trows = _read_csv(trace_path)

    slice_dirs = sorted(p for p in (run_dir / "slices").glob("slice_*") if p.is_dir()) \
        if (run_dir / "slices").exists() else []
    svals = [str(x) for x in spreads]
    ivals = [str(x) for x in imbalances]

    value_rows = []
    limit_rows = []
    volume_rows = []
    for sdir in slice_dirs:
        vpath = sdir / "value.csv"
        ppath = sdir / "policy.csv"
        if not vpath.exists() or not ppath.exists():
            continue
        index = int(sdir.name.split("_")[1])
        vheader, vrows = _read_csv(vpath)
        n = sum(1 for c in vheader if c.startswith("spread_"))
        if len(svals) != n or len(ivals) != n:
            raise MissingInputError(f"state selector needs {n} spread and imbalance indices")
        for row in vrows:
            if row[2:2 + n] == svals and row[2 + n:2 + 2 * n] == ivals:
                value_rows.append([index, row[0], row[1], row[-1]])
        pheader, prows = _read_csv(ppath)
        for row in prows:
            if row[2:2 + n] == svals and row[2 + n:2 + 2 * n] == ivals:
                for k in range(n):
                    limit_rows.append([index, row[0], row[1], k, row[2 + 2 * n + n + k]])
                    volume_rows.append([index, row[0], row[1], k, row[2 + 2 * n + k]])

    drift_rows = [r for r in trows if r[1] == "mu"]

    out_dir = Path(out_dir)
    written = []

    def emit(name, header, rows):
        path = out_dir / name
        write_csv(path, header, rows)
        written.append(path)

    if value_rows:
        emit("value_vs_q.csv", ["slice", "t", "q", "v"], value_rows)
        emit("limits_vs_q.csv", ["slice", "t", "q", "venue", "limit"], limit_rows)
        emit("volumes_vs_q.csv", ["slice", "t", "q", "venue", "volume"], volume_rows)
    emit("estimates_vs_slice.csv", theader, trows)
    emit("drift_vs_slice.csv", theader, drift_rows)
    return written
