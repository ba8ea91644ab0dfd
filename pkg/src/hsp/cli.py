"""Command-line entry point for reproducible pipeline runs.

Subcommands mirror the pipeline stages (synth, select-drivers, fit,
allocate, backtest, verify-ccp) so each stage can be exercised and
inspected in isolation.  All randomness flows from the single seed in the
config file (overridable with --seed); every output file is a
deterministic function of (config, seed).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from datetime import date

import numpy as np

from . import backtest as bt
from .ccpverify import CcpExperiment, result_rows, run_ccp
from .data import (
    PricePanel,
    SyntheticSpec,
    align,
    generate_synthetic,
    load_csv,
    to_returns,
)
from .drivers import Thresholds
from .errors import FormatError, HspError, ValidationError
from .nnet import DEFAULT_GRID, ArchitectureConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Validated run parameters plus the resolved data panel."""

    panel: PricePanel
    synthetic_spec: SyntheticSpec | None
    start: date
    end: date
    refresh_months: int
    hold_days: int
    selection_window: int
    backtest_config: bt.BacktestConfig
    methods: tuple[str, ...]
    ccp_n_seeds: int
    ccp_lead: int
    ccp_thresholds: Thresholds
    ccp_k: int | None
    ccp_weight_draws: int
    seed: int

    def schedule(self) -> bt.Schedule:
        return bt.build_schedule(
            self.panel.dates,
            self.start,
            self.end,
            refresh=self.refresh_months,
            hold=self.hold_days,
            window=self.selection_window,
        )


def _need(raw: dict, key: str, path: str):
    if key not in raw:
        raise ValidationError(f"{path}.{key}: missing required field")
    return raw[key]


def _parse_date(value, path: str) -> date:
    try:
        return date.fromisoformat(str(value))
    except ValueError:
        raise ValidationError(f"{path}: invalid ISO date {value!r}") from None


def _parse_thresholds(raw, path: str) -> Thresholds:
    if not isinstance(raw, dict):
        raise ValidationError(f"{path}: expected an object with t0/t1")
    try:
        return Thresholds(float(_need(raw, "t0", path)), float(_need(raw, "t1", path)))
    except (TypeError, ValueError):
        raise ValidationError(f"{path}: t0/t1 must be numbers") from None


def _parse_loadings(raw, n_assets: int, n_factors: int, seed: int, path: str) -> np.ndarray:
    if isinstance(raw, dict) and "uniform" in raw:
        lo, hi = raw["uniform"]
        rng = np.random.default_rng([int(seed), 424243])
        return rng.uniform(float(lo), float(hi), size=(n_assets, n_factors))
    try:
        arr = np.asarray(raw, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(f"{path}: expected a matrix or {{'uniform': [lo, hi]}}") from None
    return arr


def _parse_synthetic(raw: dict, master_seed: int, path: str) -> SyntheticSpec:
    n_assets = int(_need(raw, "n_assets", path))
    n_factors = int(_need(raw, "n_common_factors", path))
    seed = int(raw.get("seed", master_seed))
    kwargs = {}
    for key in (
        "factor_vol",
        "factor_persistence",
        "idio_vol",
        "idio_loading",
        "noise_driver_vol",
    ):
        if key in raw:
            kwargs[key] = float(raw[key])
    return SyntheticSpec(
        n_assets=n_assets,
        n_common_factors=n_factors,
        n_idio_drivers_per_asset=int(_need(raw, "n_idio_drivers_per_asset", path)),
        n_noise_drivers=int(_need(raw, "n_noise_drivers", path)),
        factor_loadings=_parse_loadings(
            _need(raw, "factor_loadings", path), n_assets, n_factors, seed, f"{path}.factor_loadings"
        ),
        noise_vol=float(_need(raw, "noise_vol", path)),
        horizon=int(_need(raw, "horizon", path)),
        seed=seed,
        **kwargs,
    )


def _parse_grid(raw, path: str) -> tuple[ArchitectureConfig, ...]:
    if raw is None or raw == "default":
        return DEFAULT_GRID
    if not isinstance(raw, list) or not raw:
        raise ValidationError(f"{path}: expected 'default' or a non-empty list")
    archs = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise ValidationError(f"{path}[{i}]: expected an object")
        archs.append(
            ArchitectureConfig(
                layers=int(_need(item, "layers", f"{path}[{i}]")),
                units=int(_need(item, "units", f"{path}[{i}]")),
                lag=int(_need(item, "lag", f"{path}[{i}]")),
                window=int(_need(item, "window", f"{path}[{i}]")),
                include_autoregressive=bool(item.get("autoregressive", False)),
            )
        )
    return tuple(archs)


def parse_config(path: str, seed_override: int | None = None) -> RunConfig:
    """Load and validate the JSON config, resolving the data panel."""
    if not os.path.exists(path):
        raise ValidationError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ValidationError(f"{path}: config root must be an object")

    seed = int(raw.get("seed", 0)) if seed_override is None else seed_override
    data = _need(raw, "data", "config")
    if not isinstance(data, dict) or ("csv" in data) == ("synthetic" in data):
        raise ValidationError("config.data: provide exactly one of 'csv' or 'synthetic'")

    synthetic_spec = None
    if "synthetic" in data:
        synthetic_spec = _parse_synthetic(data["synthetic"], seed, "config.data.synthetic")
        panel = generate_synthetic(synthetic_spec)
    else:
        csv_cfg = data["csv"]
        assets_path = str(_need(csv_cfg, "assets", "config.data.csv"))
        drivers_path = str(_need(csv_cfg, "drivers", "config.data.csv"))
        for p in (assets_path, drivers_path):
            if not os.path.exists(p):
                raise ValidationError(f"config.data.csv: file not found: {p}")
        panel = align([load_csv(assets_path, "asset"), load_csv(drivers_path, "driver")])

    sched = _need(raw, "schedule", "config")
    start = _parse_date(_need(sched, "start", "config.schedule"), "config.schedule.start")
    end = _parse_date(_need(sched, "end", "config.schedule"), "config.schedule.end")

    override = raw.get("override")
    if override is None and "override_file" in raw:
        of = str(raw["override_file"])
        if not os.path.exists(of):
            raise ValidationError(f"config.override_file: file not found: {of}")
        with open(of, encoding="utf-8") as fh:
            override = [line.strip() for line in fh if line.strip()]
    if override is not None:
        override = tuple(str(x) for x in override)

    thresholds = _parse_thresholds(
        raw.get("thresholds", {"t0": 0.4, "t1": 0.2}), "config.thresholds"
    )
    backtest_config = bt.BacktestConfig(
        thresholds=thresholds,
        k=int(raw.get("k", 5)),
        mode=str(raw.get("mode", "OPT")),
        override=override,
        grid=_parse_grid(raw.get("grid", "default"), "config.grid"),
        estimation_window=int(raw.get("estimation_window", 126)),
        cap=float(raw.get("cap", 0.10)),
        cap_hierarchical=bool(raw.get("cap_hierarchical", False)),
        risk_aversion=float(raw.get("risk_aversion", 5.0)),
        target=None if raw.get("target") is None else float(raw["target"]),
        linkage_method=str(raw.get("linkage_method", "single")),
        seed=seed,
    )

    methods = raw.get("methods", ["hsp", "hrp", "equal_weight"])
    if not isinstance(methods, list) or not methods:
        raise ValidationError("config.methods: expected a non-empty list")
    unknown = [m for m in methods if m not in bt.METHODS]
    if unknown:
        raise ValidationError(f"config.methods: unknown methods {unknown}")

    ccp = raw.get("ccp", {})
    if not isinstance(ccp, dict):
        raise ValidationError("config.ccp: expected an object")
    ccp_thresholds = (
        _parse_thresholds(ccp["thresholds"], "config.ccp.thresholds")
        if "thresholds" in ccp
        else Thresholds(0.15, 0.05)
    )

    return RunConfig(
        panel=panel,
        synthetic_spec=synthetic_spec,
        start=start,
        end=end,
        refresh_months=int(sched.get("refresh_months", 6)),
        hold_days=int(sched.get("hold_days", 30)),
        selection_window=int(sched.get("selection_window", 126)),
        backtest_config=backtest_config,
        methods=tuple(str(m) for m in methods),
        ccp_n_seeds=int(ccp.get("n_seeds", 100)),
        ccp_lead=int(ccp.get("lead", 1)),
        ccp_thresholds=ccp_thresholds,
        ccp_k=None if ccp.get("k") is None else int(ccp["k"]),
        ccp_weight_draws=int(ccp.get("weight_draws", 3)),
        seed=seed,
    )


def _write_text(out_dir: str, name: str, text: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _panel_csv(panel: PricePanel, ids: tuple[str, ...]) -> str:
    lines = ["date," + ",".join(ids)]
    for i, d in enumerate(panel.dates):
        cells = [repr(float(panel.series[sid][i])) for sid in ids]
        lines.append(d.isoformat() + "," + ",".join(cells))
    return "\n".join(lines) + "\n"


def cmd_synth(config: RunConfig, out_dir: str) -> list[str]:
    if config.synthetic_spec is None:
        raise ValidationError("synth requires a synthetic data source in the config")
    panel = config.panel
    written = [
        _write_text(out_dir, "assets.csv", _panel_csv(panel, panel.ids_of_kind("asset"))),
        _write_text(out_dir, "drivers.csv", _panel_csv(panel, panel.ids_of_kind("driver"))),
    ]
    return written


def cmd_select_drivers(config: RunConfig, out_dir: str) -> list[str]:
    schedule = config.schedule()
    returns = to_returns(config.panel, method="simple")
    asset_ids = config.panel.ids_of_kind("asset")
    driver_ids = config.panel.ids_of_kind("driver")
    if not driver_ids:
        raise ValidationError("panel contains no driver series")
    written = []
    for when in schedule.selection_dates:
        selection = bt.select_for_date(
            returns, asset_ids, driver_ids, when, schedule, config.backtest_config
        )
        name = f"selection_{when.isoformat()}.json"
        written.append(_write_text(out_dir, name, _json_text(selection.to_dict())))
    return written


def _resolve_date(config: RunConfig, schedule: bt.Schedule, explicit: str | None) -> date:
    if explicit is None:
        return schedule.rebalance_dates[-1]
    when = _parse_date(explicit, "--date")
    if when not in schedule.rebalance_dates:
        raise ValidationError(f"--date {when.isoformat()} is not a rebalance date")
    return when


def cmd_fit(config: RunConfig, out_dir: str, explicit_date: str | None) -> list[str]:
    from .nnet import grid_search

    schedule = config.schedule()
    when = _resolve_date(config, schedule, explicit_date)
    returns = to_returns(config.panel, method="simple")
    asset_ids = config.panel.ids_of_kind("asset")
    driver_ids = config.panel.ids_of_kind("driver")
    if not driver_ids:
        raise ValidationError("panel contains no driver series")
    selection = bt.select_for_date(
        returns,
        asset_ids,
        driver_ids,
        schedule.governing_selection(when),
        schedule,
        config.backtest_config,
    )
    history = returns.window_before(when)
    driver_matrix = history.matrix(selection.chosen)
    fits = {}
    for aid in asset_ids:
        fit = grid_search(
            aid,
            config.backtest_config.grid,
            history.series[aid],
            driver_matrix,
            driver_ids=selection.chosen,
            global_seed=config.seed,
        )
        fits[aid] = fit.to_dict()
    payload = {
        "date": when.isoformat(),
        "chosen_drivers": list(selection.chosen),
        "fits": fits,
    }
    return [_write_text(out_dir, f"fits_{when.isoformat()}.json", _json_text(payload))]


def cmd_allocate(config: RunConfig, out_dir: str, method: str, explicit_date: str | None) -> list[str]:
    if method not in bt.METHODS:
        raise ValidationError(f"unknown method {method!r}; registered: {list(bt.METHODS)}")
    schedule = config.schedule()
    when = _resolve_date(config, schedule, explicit_date)
    returns = to_returns(config.panel, method="simple")
    asset_ids = config.panel.ids_of_kind("asset")
    driver_ids = config.panel.ids_of_kind("driver")
    selections = {}
    if method == "hsp" and len(asset_ids) > 1:
        governing = schedule.governing_selection(when)
        selections[governing] = bt.select_for_date(
            returns, asset_ids, driver_ids, governing, schedule, config.backtest_config
        )
    weights = bt.weights_for_date(
        method, when, returns, asset_ids, selections, schedule, config.backtest_config
    )
    payload = {"date": when.isoformat(), "method": method, "weights": weights.as_dict()}
    return [_write_text(out_dir, f"weights_{method}_{when.isoformat()}.json", _json_text(payload))]


def cmd_backtest(config: RunConfig, out_dir: str) -> list[str]:
    schedule = config.schedule()
    report = bt.run_many(config.panel, schedule, config.methods, config.backtest_config)

    nav_lines = ["date," + ",".join(config.methods)]
    for i, d in enumerate(report.dates):
        cells = [repr(float(report.navs[m][i])) for m in config.methods]
        nav_lines.append(d.isoformat() + "," + ",".join(cells))

    metric_lines = ["method,total_return_pct,ann_vol_pct,sharpe,degenerate"]
    for m in config.methods:
        mt = report.metrics[m]
        metric_lines.append(
            f"{m},{mt.total_return_pct!r},{mt.ann_vol_pct!r},{mt.sharpe!r},{str(mt.degenerate).lower()}"
        )

    weights_payload = {
        m: {d.isoformat(): report.weights[m][d].as_dict() for d in schedule.rebalance_dates}
        for m in config.methods
    }
    selections_payload = {
        d.isoformat(): s.to_dict() for d, s in report.selections.items()
    }
    manifest = {
        "command": "backtest",
        "config_hash": report.config_hash,
        "seed": report.seed,
        "methods": list(config.methods),
        "schedule": {
            "selection_dates": [d.isoformat() for d in schedule.selection_dates],
            "rebalance_dates": [d.isoformat() for d in schedule.rebalance_dates],
        },
        "config": config.backtest_config.to_dict(),
    }
    return [
        _write_text(out_dir, "nav.csv", "\n".join(nav_lines) + "\n"),
        _write_text(out_dir, "metrics.csv", "\n".join(metric_lines) + "\n"),
        _write_text(out_dir, "weights.json", _json_text(weights_payload)),
        _write_text(out_dir, "selections.json", _json_text(selections_payload)),
        _write_text(out_dir, "run-manifest.json", _json_text(manifest)),
    ]


def cmd_verify_ccp(config: RunConfig, out_dir: str) -> list[str]:
    if config.synthetic_spec is None:
        raise ValidationError("verify-ccp requires a synthetic data source in the config")
    experiment = CcpExperiment(
        spec=config.synthetic_spec,
        n_seeds=config.ccp_n_seeds,
        lead=config.ccp_lead,
        thresholds=config.ccp_thresholds,
        k=config.ccp_k,
        weight_draws=config.ccp_weight_draws,
    )
    result = run_ccp(experiment)
    rows = result_rows(result)
    header = list(rows[0]) if rows else ["seed"]
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for key in header:
            value = row[key]
            cells.append(repr(float(value)) if isinstance(value, float) else str(value))
        lines.append(",".join(cells))
    summary = {
        "n_seeds": config.ccp_n_seeds,
        "evaluated": len(result.seeds),
        "skipped": len(result.skipped_seeds),
        "avg_ordering_fraction": result.avg_ordering_fraction,
        "basket_ordering_fraction": result.basket_ordering_fraction,
        "screening_pass_fraction": result.screening_pass_fraction,
    }
    return [
        _write_text(out_dir, "ccp_results.csv", "\n".join(lines) + "\n"),
        _write_text(out_dir, "ccp_summary.json", _json_text(summary)),
    ]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hsp",
        description="Hierarchical sensitivity parity pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("synth", "write the synthetic universe to CSV"),
        ("select-drivers", "run driver selection at each selection date"),
        ("fit", "fit per-asset networks at one rebalance date"),
        ("allocate", "compute weights for one method at one date"),
        ("backtest", "run the full backtest for all configured methods"),
        ("verify-ccp", "run the Monte-Carlo correlation-ordering verifier"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default="out", help="output directory (default: ./out)")
        if name in ("fit", "allocate"):
            p.add_argument("--date", default=None, help="rebalance date (default: last)")
        if name == "allocate":
            p.add_argument("--method", default="hsp", help="allocation method (default: hsp)")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = parse_config(args.config, seed_override=args.seed)
        if args.command == "synth":
            written = cmd_synth(config, args.out)
        elif args.command == "select-drivers":
            written = cmd_select_drivers(config, args.out)
        elif args.command == "fit":
            written = cmd_fit(config, args.out, args.date)
        elif args.command == "allocate":
            written = cmd_allocate(config, args.out, args.method, args.date)
        elif args.command == "backtest":
            written = cmd_backtest(config, args.out)
        else:
            written = cmd_verify_ccp(config, args.out)
    except (ValidationError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except HspError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
