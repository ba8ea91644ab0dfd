"""Timeline engine: periodic driver selection, monthly rebalances, NAV.

Driver selection happens every refresh months on a trailing window;
weights are recomputed on the first trading day of each month from data
strictly before that day and held until the next rebalance.  Everything
downstream of the panel is a pure function of (config, seed), so reports
are byte-reproducible.
"""

from __future__ import annotations

import calendar
import hashlib
import json
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from datetime import date

import numpy as np

from .allocator import WeightVector, apply_cap, hsp_weights
from .baselines import MvObjective, equal_weight, hrp_correlation, mean_variance
from .data import PricePanel, ReturnPanel, to_returns
from .drivers import CommonDriverSelection, Thresholds, common_drivers, specific_drivers
from .errors import BacktestError, HspError, InsufficientDataError, ValidationError
from .nnet import DEFAULT_GRID, ArchitectureConfig, grid_search
from .sensmat import embed

TRADING_DAYS_PER_YEAR = 252

METHODS = (
    "hsp",
    "hrp",
    "equal_weight",
    "mv_min_vol",
    "mv_max_sharpe",
    "mv_quadratic_utility",
    "mv_target_return",
)


def add_months(anchor: date, months: int) -> date:
    """Calendar month arithmetic with end-of-month clamping."""
    month_index = anchor.year * 12 + (anchor.month - 1) + months
    year, month = divmod(month_index, 12)
    month += 1
    day = min(anchor.day, calendar.monthrange(year, month)[1])
    return date(year, month, day)


def first_trading_on_or_after(dates: tuple[date, ...], anchor: date) -> date | None:
    idx = bisect_left(dates, anchor)
    return dates[idx] if idx < len(dates) else None


@dataclass(frozen=True, eq=False)
class Schedule:
    """Selection and rebalance dates over a backtest span."""

    selection_dates: tuple[date, ...]
    rebalance_dates: tuple[date, ...]
    selection_window: int
    selection_refresh: int
    hold: int
    span: tuple[date, date]

    def __post_init__(self) -> None:
        if not self.selection_dates or not self.rebalance_dates:
            raise ValidationError("schedule needs selection and rebalance dates")
        for seq in (self.selection_dates, self.rebalance_dates):
            if any(b <= a for a, b in zip(seq, seq[1:])):
                raise ValidationError("schedule dates must be strictly increasing")
        if self.rebalance_dates[0] < self.selection_dates[0]:
            raise ValidationError("first rebalance precedes the first selection")
        if self.selection_window < 1 or self.selection_refresh < 1 or self.hold < 1:
            raise ValidationError("window, refresh, and hold must be positive")

    def governing_selection(self, rebalance: date) -> date:
        """Most recent selection date at or before the rebalance."""
        idx = bisect_right(self.selection_dates, rebalance) - 1
        if idx < 0:
            raise ValidationError(f"no selection governs rebalance {rebalance}")
        return self.selection_dates[idx]


def build_schedule(
    panel_dates: tuple[date, ...],
    start: date,
    end: date,
    refresh: int,
    hold: int,
    window: int,
) -> Schedule:
    """Selection dates every refresh months, rebalances at each month start."""
    if not panel_dates:
        raise ValidationError("empty panel date list")
    if start > end:
        raise ValidationError("start must not exceed end")
    if not (panel_dates[0] <= start and end <= panel_dates[-1]):
        raise ValidationError("start/end must lie inside the panel date range")
    if refresh < 1 or hold < 1 or window < 1:
        raise ValidationError("refresh, hold, and window must be positive")

    selections: list[date] = []
    step = 0
    while True:
        anchor = add_months(start, step * refresh)
        if anchor > end:
            break
        snapped = first_trading_on_or_after(panel_dates, anchor)
        if snapped is None or snapped > end:
            break
        if not selections or snapped != selections[-1]:
            selections.append(snapped)
        step += 1
    if not selections:
        raise ValidationError("no selection date falls inside the span")

    history = bisect_left(panel_dates, selections[0])
    if history < window + 1:
        raise InsufficientDataError(
            f"need {window} return days before {selections[0]}, have {max(history - 1, 0)}"
        )

    rebalances: list[date] = []
    anchor = date(start.year, start.month, 1)
    while anchor <= end:
        snapped = first_trading_on_or_after(panel_dates, anchor)
        if snapped is not None and start <= snapped <= end and (
            not rebalances or snapped != rebalances[-1]
        ):
            rebalances.append(snapped)
        anchor = add_months(anchor, 1)
    rebalances = [r for r in rebalances if r >= selections[0]]
    if not rebalances:
        raise ValidationError("no rebalance date falls inside the span")

    return Schedule(
        selection_dates=tuple(selections),
        rebalance_dates=tuple(rebalances),
        selection_window=window,
        selection_refresh=refresh,
        hold=hold,
        span=(start, end),
    )


@dataclass(frozen=True)
class BacktestConfig:
    """Everything run() needs beyond the panel and the schedule."""

    thresholds: Thresholds = Thresholds(0.4, 0.2)
    k: int = 5
    mode: str = "OPT"
    override: tuple[str, ...] | None = None
    grid: tuple[ArchitectureConfig, ...] = DEFAULT_GRID
    estimation_window: int = 126
    cap: float = 0.10
    cap_hierarchical: bool = False
    risk_aversion: float = 5.0
    target: float | None = None
    linkage_method: str = "single"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValidationError("k must be at least 1")
        if self.mode not in ("OPT", "SELECT"):
            raise ValidationError(f"mode must be OPT or SELECT, got {self.mode!r}")
        if self.mode == "SELECT" and not self.override:
            raise ValidationError("SELECT mode requires an override list")
        if not self.grid:
            raise ValidationError("architecture grid is empty")
        if self.estimation_window < 2:
            raise ValidationError("estimation_window must be at least 2")
        if not 0.0 < self.cap <= 1.0:
            raise ValidationError("cap must lie in (0, 1]")

    def to_dict(self) -> dict:
        return {
            "thresholds": {"t0": self.thresholds.t0, "t1": self.thresholds.t1},
            "k": self.k,
            "mode": self.mode,
            "override": list(self.override) if self.override else None,
            "grid": [
                {
                    "layers": a.layers,
                    "units": a.units,
                    "lag": a.lag,
                    "window": a.window,
                    "autoregressive": a.include_autoregressive,
                }
                for a in self.grid
            ],
            "estimation_window": self.estimation_window,
            "cap": self.cap,
            "cap_hierarchical": self.cap_hierarchical,
            "risk_aversion": self.risk_aversion,
            "target": self.target,
            "linkage_method": self.linkage_method,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class Metrics:
    total_return_pct: float
    ann_vol_pct: float
    sharpe: float
    degenerate: bool = False


@dataclass(frozen=True, eq=False)
class BacktestReport:
    """NAV paths, per-rebalance weights, and summary metrics per method."""

    dates: tuple[date, ...]
    navs: dict[str, np.ndarray]
    weights: dict[str, dict[date, WeightVector]]
    selections: dict[date, CommonDriverSelection]
    metrics: dict[str, Metrics]
    config_hash: str
    seed: int

    def __post_init__(self) -> None:
        for method, nav in self.navs.items():
            if nav.shape != (len(self.dates),):
                raise ValidationError(f"nav length mismatch for {method}")
            if nav[0] != 100.0 or np.any(nav <= 0.0):
                raise ValidationError(f"nav for {method} must start at 100 and stay positive")


def metrics(nav: np.ndarray) -> Metrics:
    """Total return, annualized vol, and Sharpe from a NAV path."""
    nav = np.asarray(nav, dtype=float)
    if nav.ndim != 1 or nav.shape[0] < 2:
        raise InsufficientDataError("need at least 2 NAV points")
    if np.any(nav <= 0.0):
        raise ValidationError("NAV must be positive")
    total = (float(nav[-1] / nav[0]) - 1.0) * 100.0
    daily = nav[1:] / nav[:-1] - 1.0
    if daily.shape[0] < 2:
        return Metrics(total, 0.0, 0.0, degenerate=True)
    std = float(daily.std(ddof=1))
    if std == 0.0:
        return Metrics(total, 0.0, 0.0, degenerate=True)
    root = float(np.sqrt(TRADING_DAYS_PER_YEAR))
    return Metrics(
        total_return_pct=total,
        ann_vol_pct=std * root * 100.0,
        sharpe=float(daily.mean()) / std * root,
    )


def config_hash(config: BacktestConfig, schedule: Schedule) -> str:
    payload = {
        "config": config.to_dict(),
        "schedule": {
            "selection_dates": [d.isoformat() for d in schedule.selection_dates],
            "rebalance_dates": [d.isoformat() for d in schedule.rebalance_dates],
            "selection_window": schedule.selection_window,
            "selection_refresh": schedule.selection_refresh,
            "hold": schedule.hold,
            "span": [schedule.span[0].isoformat(), schedule.span[1].isoformat()],
        },
    }
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def select_for_date(
    returns: ReturnPanel,
    asset_ids: tuple[str, ...],
    driver_ids: tuple[str, ...],
    when: date,
    schedule: Schedule,
    config: BacktestConfig,
) -> CommonDriverSelection:
    window = returns.window_before(when, schedule.selection_window)
    spec_map = specific_drivers(
        window.subset(asset_ids), window.subset(driver_ids), config.thresholds
    )
    override = list(config.override) if config.override else None
    return common_drivers(
        spec_map, config.k, mode=config.mode, override=override, selection_date=when
    )


def _mv_objective(method: str, config: BacktestConfig) -> MvObjective:
    if method == "mv_min_vol":
        return MvObjective("min_vol", cap=config.cap)
    if method == "mv_max_sharpe":
        return MvObjective("max_sharpe", cap=config.cap)
    if method == "mv_quadratic_utility":
        return MvObjective("quadratic_utility", cap=config.cap, risk_aversion=config.risk_aversion)
    if config.target is None:
        raise ValidationError("mv_target_return requires config.target")
    return MvObjective("target_return", cap=config.cap, target=config.target)


def weights_for_date(
    method: str,
    when: date,
    returns: ReturnPanel,
    asset_ids: tuple[str, ...],
    selections: dict[date, CommonDriverSelection],
    schedule: Schedule,
    config: BacktestConfig,
) -> WeightVector:
    if len(asset_ids) == 1:
        return WeightVector(ids=asset_ids, weights=np.ones(1))
    if method == "equal_weight":
        return equal_weight(len(asset_ids), ids=asset_ids)
    if method.startswith("mv_"):
        window = returns.window_before(when, config.estimation_window)
        return mean_variance(window, _mv_objective(method, config), ids=asset_ids)
    if method == "hrp":
        window = returns.window_before(when, config.estimation_window)
        weights = hrp_correlation(window, ids=asset_ids)
        if config.cap_hierarchical:
            weights = apply_cap(weights, config.cap)
        return weights
    # hsp: fit every asset against the governing selection's chosen drivers
    chosen = selections[schedule.governing_selection(when)].chosen
    history = returns.window_before(when)
    driver_matrix = history.matrix(chosen)
    fits = {}
    for aid in asset_ids:
        fits[aid] = grid_search(
            aid,
            config.grid,
            history.series[aid],
            driver_matrix,
            driver_ids=chosen,
            global_seed=config.seed,
        )
    embedding = embed(fits, chosen)
    cap = config.cap if config.cap_hierarchical else None
    return hsp_weights(embedding, cap=cap, method=config.linkage_method)


def run_many(
    panel: PricePanel,
    schedule: Schedule,
    methods: list[str] | tuple[str, ...],
    config: BacktestConfig,
) -> BacktestReport:
    """Backtest several methods over one panel and schedule."""
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValidationError(f"unknown methods {unknown}; registered: {list(METHODS)}")
    if not methods:
        raise ValidationError("no methods requested")
    asset_ids = panel.ids_of_kind("asset")
    driver_ids = panel.ids_of_kind("driver")
    if not asset_ids:
        raise ValidationError("panel contains no asset series")
    returns = to_returns(panel, method="simple")

    selections: dict[date, CommonDriverSelection] = {}
    if "hsp" in methods and len(asset_ids) > 1:
        if not driver_ids:
            raise ValidationError("hsp requires driver series in the panel")
        for when in schedule.selection_dates:
            try:
                selections[when] = select_for_date(
                    returns, asset_ids, driver_ids, when, schedule, config
                )
            except HspError as exc:
                raise BacktestError(f"driver selection at {when}: {exc}") from exc

    weights: dict[str, dict[date, WeightVector]] = {m: {} for m in methods}
    for method in methods:
        for when in schedule.rebalance_dates:
            try:
                weights[method][when] = weights_for_date(
                    method, when, returns, asset_ids, selections, schedule, config
                )
            except HspError as exc:
                raise BacktestError(f"{method} at {when}: {exc}") from exc

    start = schedule.rebalance_dates[0]
    end = schedule.span[1]
    nav_dates = tuple(d for d in panel.dates if start <= d <= end)
    asset_returns = returns.matrix(asset_ids)
    ret_index = {d: i for i, d in enumerate(returns.dates)}
    navs: dict[str, np.ndarray] = {}
    for method in methods:
        nav = np.empty(len(nav_dates))
        nav[0] = 100.0
        current = 100.0
        active = 0
        rebalances = schedule.rebalance_dates
        for pos, when in enumerate(nav_dates[1:], start=1):
            while active + 1 < len(rebalances) and rebalances[active + 1] < when:
                active += 1
            w = weights[method][rebalances[active]]
            row = asset_returns[ret_index[when]]
            current *= 1.0 + float(w.weights @ row)
            nav[pos] = current
        navs[method] = nav

    return BacktestReport(
        dates=nav_dates,
        navs=navs,
        weights=weights,
        selections=selections,
        metrics={m: metrics(navs[m]) for m in methods},
        config_hash=config_hash(config, schedule),
        seed=config.seed,
    )


def run(
    panel: PricePanel, schedule: Schedule, method: str, config: BacktestConfig
) -> BacktestReport:
    """Single-method wrapper around run_many."""
    return run_many(panel, schedule, [method], config)
