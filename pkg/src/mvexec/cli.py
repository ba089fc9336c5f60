"""Command-line entry point.

Subcommands: solve, simulate, run, curve, calibrate, otc-calibrate,
plot-data.  Exit codes: 0 success, 2 invalid configuration, 3 numerical
failure, 4 missing/unwritable files.  The MVEXEC_OUTPUT_DIR environment
variable, when set, overrides --output-dir.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import io as iomod
from .bayes import SliceStats
from .config import (
    FullConfig,
    load_config,
    load_priors_file,
    write_priors_file,
)
from .curve import global_target, target_inventory
from .engine import RunConfig, estimate_rows, run as run_engine
from .errors import ConfigError, DomainError, MissingInputError, NumericalError
from .otc import ingest_rfq_log, update_niw, update_rfq_intensity, update_size_scale
from .simulator import EventLog, simulate_slice
from .solver import solve_slice


def _out_dir(args) -> Path:
    env = os.environ.get("MVEXEC_OUTPUT_DIR")
    out = Path(env) if env else Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _set_threads(args) -> None:
    if getattr(args, "threads", None):
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)


def _market_orders_flag(args, default: bool) -> bool:
    if getattr(args, "market_orders", None) is None:
        return default
    return args.market_orders == "on"


def _initial_state(cfg: FullConfig):
    if cfg.engine is not None:
        return cfg.engine.initial_spreads, cfg.engine.initial_imbalances, cfg.engine.initial_q
    n = cfg.market.n_venues
    return (0,) * n, (0,) * n, None


def cmd_curve(args) -> int:
    cfg = load_config(args.config, need=("curve",))
    out = _out_dir(args)
    ts = np.linspace(0.0, cfg.curve.T, args.points)
    rows = [(t, target_inventory(float(t), cfg.curve)) for t in ts]
    iomod.write_csv(out / "curve.csv", ["t", "q_star"], rows)
    print(out / "curve.csv")
    return 0


def cmd_solve(args) -> int:
    cfg = load_config(args.config, need=("market", "grid", "penalty", "curve"))
    _set_threads(args)
    market_orders = _market_orders_flag(args, cfg.engine.market_orders if cfg.engine else False)
    solution = solve_slice(
        cfg.market, cfg.grid, cfg.penalty, global_target(cfg.curve),
        slice_start=args.slice_start, market_orders=market_orders,
    )
    out = _out_dir(args)
    iomod.write_value_csv(out / "value.csv", solution, cfg.market)
    iomod.write_policy_csv(out / "policy.csv", solution, cfg.market)
    key = iomod.cache_key(cfg.raw.get("market"), cfg.raw.get("grid"), cfg.raw.get("penalty"),
                          cfg.raw.get("curve"), args.slice_start, market_orders)
    iomod.save_solution_cache(out / "cache", key, solution)
    print(out / "value.csv")
    print(out / "policy.csv")
    return 0


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, need=("market", "grid", "penalty", "curve"))
    _set_threads(args)
    market_orders = _market_orders_flag(args, cfg.engine.market_orders if cfg.engine else False)
    spreads, imbalances, q0 = _initial_state(cfg)
    if q0 is None:
        q0 = min(cfg.curve.q0, cfg.grid.q_max)
    solution = solve_slice(
        cfg.market, cfg.grid, cfg.penalty, global_target(cfg.curve),
        slice_start=args.slice_start, market_orders=market_orders,
    )
    multi_fill = cfg.engine.multi_fill if cfg.engine else False
    log = simulate_slice(solution, cfg.market, q0, spreads, imbalances, args.seed,
                         multi_fill=multi_fill)
    out = _out_dir(args)
    iomod.write_events_jsonl(out / "events.jsonl", log)
    print(out / "events.jsonl")
    return 0


def _parse_tensor_slices(text: str, n_slices: int) -> set[int]:
    if text == "none":
        return set()
    if text == "all":
        return set(range(n_slices))
    try:
        return {int(tok) for tok in text.split(",") if tok != ""}
    except ValueError:
        raise ConfigError(f"--save-tensor-slices: cannot parse {text!r}") from None


def cmd_run(args) -> int:
    cfg = load_config(args.config, need=("market", "priors", "grid", "penalty", "curve", "engine"))
    _set_threads(args)
    n_slices = args.slices if args.slices else cfg.engine.n_slices
    run_cfg = RunConfig(
        market=cfg.market,
        priors=cfg.priors,
        grid=cfg.grid,
        penalty=cfg.penalty,
        curve=cfg.curve,
        n_slices=n_slices,
        initial_spreads=cfg.engine.initial_spreads,
        initial_imbalances=cfg.engine.initial_imbalances,
        initial_q=cfg.engine.initial_q,
        market_orders=_market_orders_flag(args, cfg.engine.market_orders),
        multi_fill=cfg.engine.multi_fill,
        drift_chain=cfg.engine.drift_chain,
        curve_mode=cfg.engine.curve_mode,
        blowup_bound=cfg.engine.blowup_bound,
    )
    keep = _parse_tensor_slices(args.save_tensor_slices, n_slices)
    report = run_engine(run_cfg, args.seed, keep_solutions=bool(keep))
    out = _out_dir(args)
    for s in report.slices:
        sdir = out / "slices" / f"slice_{s.index:03d}"
        iomod.write_events_jsonl(sdir / "events.jsonl", s.log)
        if s.index in keep and s.solution is not None:
            iomod.write_value_csv(sdir / "value.csv", s.solution, cfg.market)
            iomod.write_policy_csv(sdir / "policy.csv", s.solution, cfg.market)
        write_priors_file(out / "posteriors" / f"after_slice_{s.index:03d}.yaml", s.posterior)
    write_priors_file(out / "posterior.yaml", report.slices[-1].posterior)
    iomod.write_trace_csv(out / "trace.csv", report.trace_rows())
    iomod.write_inventory_csv(out / "inventory.csv", report.inventory_path)
    iomod.write_report_json(out / "report.json", report)
    print(out)
    return 0


def cmd_calibrate(args) -> int:
    cfg = load_config(args.config, need=("market", "priors"))
    priors = cfg.priors
    if args.priors:
        priors = load_priors_file(args.priors, cfg.market)
    drift_chain = cfg.engine.drift_chain if cfg.engine else "exact"
    rows = []
    for k, path in enumerate(args.events):
        p = Path(path)
        if not p.exists():
            raise MissingInputError(f"event log {p} does not exist")
        log = EventLog.from_jsonl(p.read_text())
        stats = SliceStats.from_event_log(log, cfg.market)
        priors = priors.updated(stats, drift_chain=drift_chain)
        for name, value in sorted(estimate_rows(priors, cfg.market).items()):
            rows.append((k, name, value))
    out = _out_dir(args)
    write_priors_file(out / "posterior.yaml", priors)
    iomod.write_trace_csv(out / "trace.csv", rows)
    print(out / "posterior.yaml")
    return 0


def cmd_otc_calibrate(args) -> int:
    cfg = load_config(args.config, need=("otc",))
    otc = cfg.otc
    p = Path(args.log)
    if not p.exists():
        raise MissingInputError(f"RFQ log {p} does not exist")
    import json as _json
    records = [_json.loads(line) for line in p.read_text().splitlines() if line.strip()]
    obs = ingest_rfq_log(records, quote_decay=otc.quote_decay)

    rows = []
    rfq_post = {}
    size_post = {}
    for key in sorted(otc.rfq):
        asset, side = key
        count = obs.filled_counts.get(key, 0)
        exposure = obs.exposures.get(key, 0.0)
        post, mean = update_rfq_intensity(otc.rfq[key], count, exposure)
        rfq_post[key] = post
        rows.append((f"rfq/{asset}/{side}", mean))
        spost, smean = update_size_scale(otc.size[key], obs.sizes.get(key, []))
        size_post[key] = spost
        rows.append((f"size_scale/{asset}/{side}", smean))

    niw = otc.niw
    window = obs.price_window
    mu_hat = niw.mu0
    sigma_hat = None
    if window is not None:
        disp, dt = window
        niw, mu_hat, sigma_hat = update_niw(niw, disp, dt, variant=otc.niw_variant)
    for i, m in enumerate(np.asarray(mu_hat)):
        rows.append((f"mu/{i}", float(m)))
    if sigma_hat is not None:
        d = sigma_hat.shape[0]
        for i in range(d):
            for j in range(d):
                rows.append((f"sigma/{i}/{j}", float(sigma_hat[i, j])))

    n_assets = max(a for a, _ in otc.rfq) + 1
    sides = ("bid", "ask")
    mapping = {"otc": {
        "assets": n_assets,
        "quote_decay": otc.quote_decay,
        "rfq": {
            "alpha": [[float(rfq_post[(i, s)].alpha) for s in sides] for i in range(n_assets)],
            "beta": [[float(rfq_post[(i, s)].beta) for s in sides] for i in range(n_assets)],
        },
        "size": {
            "shape": [[float(size_post[(i, s)].shape) for s in sides] for i in range(n_assets)],
            "a0": [[float(size_post[(i, s)].a0) for s in sides] for i in range(n_assets)],
            "b0": [[float(size_post[(i, s)].b0) for s in sides] for i in range(n_assets)],
        },
        "niw": {
            "mu0": np.asarray(niw.mu0).tolist(),
            "kappa0": float(niw.kappa0),
            "nu0": float(niw.nu0),
            "psi": np.asarray(niw.psi).tolist(),
            "variant": otc.niw_variant,
        },
    }}
    out = _out_dir(args)
    (out / "otc_posterior.yaml").write_text(yaml.safe_dump(mapping, sort_keys=True))
    iomod.write_csv(out / "otc_trace.csv", ["parameter", "estimate"], rows)
    print(out / "otc_posterior.yaml")
    return 0


def cmd_plot_data(args) -> int:
    spreads = [int(x) for x in args.spreads.split(",")] if args.spreads else None
    imbalances = [int(x) for x in args.imbalances.split(",")] if args.imbalances else None
    run_dir = Path(args.run_dir)
    if spreads is None or imbalances is None:
        # Default to the first state of every venue.
        trace = run_dir / "trace.csv"
        if not trace.exists():
            raise MissingInputError(f"{run_dir} does not look like a run directory (no trace.csv)")
        sdirs = sorted((run_dir / "slices").glob("slice_*/value.csv")) \
            if (run_dir / "slices").exists() else []
        n = 1
        if sdirs:
            header = sdirs[0].read_text().splitlines()[0].split(",")
            n = sum(1 for c in header if c.startswith("spread_"))
        spreads = spreads if spreads is not None else [0] * n
        imbalances = imbalances if imbalances is not None else [0] * n
    written = iomod.plot_data_bundles(run_dir, _out_dir(args), spreads, imbalances)
    for path in written:
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvexec",
        description="Optimal order splitting across venues with Bayesian adaptation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="YAML configuration file")
        p.add_argument("--output-dir", default="out",
                       help="output directory (MVEXEC_OUTPUT_DIR overrides)")
        p.add_argument("--threads", type=int, default=None,
                       help="cap BLAS/OpenMP threads used by the solver")
        p.add_argument("-v", "--verbose", action="count", default=0)

    p = sub.add_parser("curve", help="emit the target inventory curve as CSV")
    common(p)
    p.add_argument("--points", type=int, default=101)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("solve", help="solve one slice and write value/policy tensors")
    common(p)
    p.add_argument("--slice-start", type=float, default=0.0)
    p.add_argument("--market-orders", choices=("on", "off"), default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="solve one slice, then simulate it under the policy")
    common(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--slice-start", type=float, default=0.0)
    p.add_argument("--market-orders", choices=("on", "off"), default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", help="adaptive multi-slice run: solve, simulate, update")
    common(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--slices", type=int, default=None, help="override engine.n_slices")
    p.add_argument("--market-orders", choices=("on", "off"), default=None)
    p.add_argument("--save-tensor-slices", default="none",
                   help="comma list of slice indices, or 'all'/'none'")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("calibrate", help="update priors from JSONL event logs")
    common(p)
    p.add_argument("--events", nargs="+", required=True, help="event logs, one per slice")
    p.add_argument("--priors", default=None, help="posterior file to use as the prior")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("otc-calibrate", help="update OTC priors from an RFQ JSONL log")
    common(p)
    p.add_argument("--log", required=True)
    p.set_defaults(func=cmd_otc_calibrate)

    p = sub.add_parser("plot-data", help="emit figure-ready CSV bundles from a run directory")
    common(p, config=False)
    p.add_argument("--run-dir", required=True)
    p.add_argument("--spreads", default=None, help="comma list of spread indices per venue")
    p.add_argument("--imbalances", default=None, help="comma list of imbalance indices per venue")
    p.set_defaults(func=cmd_plot_data)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DomainError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (MissingInputError, OSError) as exc:
        print(f"error: i/o: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
