"""Correlation-screened driver selection.

A driver is specific to an asset when its absolute correlation with the
asset clears a threshold at lag 0 and another at lag 1.  Candidate common
drivers are ranked by how many assets share them; ties fall back to mean
absolute lag-0 correlation over the sharing assets, then to the driver id,
so the outcome is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date

import numpy as np

from .data import ReturnPanel
from .errors import (
    DegenerateSeriesError,
    InsufficientDataError,
    NoCommonDriversError,
    ValidationError,
)


@dataclass(frozen=True)
class Thresholds:
    """Absolute-correlation cutoffs at lag 0 and lag 1."""

    t0: float
    t1: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.t1 <= self.t0 <= 1.0:
            raise ValidationError(f"need 0 <= t1 <= t0 <= 1, got t0={self.t0}, t1={self.t1}")


@dataclass(frozen=True, eq=False)
class SpecificDriverMap:
    """Per-asset driver sets over a screening window.

    correlations holds |lag-0 corr| for every (asset, driver) pair so the
    ranking step never recomputes from raw series.
    """

    assets: tuple[str, ...]
    drivers: tuple[str, ...]
    specific: dict[str, frozenset[str]]
    correlations: dict[str, dict[str, float]]
    window: tuple[date, date]
    thresholds: Thresholds

    def __post_init__(self) -> None:
        if self.window[0] > self.window[1]:
            raise ValidationError("empty screening window")
        universe = set(self.drivers)
        for asset, chosen in self.specific.items():
            stray = chosen - universe
            if stray:
                raise ValidationError(f"{asset}: unknown drivers {sorted(stray)}")


@dataclass(frozen=True, eq=False)
class CommonDriverSelection:
    """Ranked candidate pool and the finalized chosen list."""

    selection_date: date | None
    ranked: tuple[tuple[str, int, float], ...]  # (driver, n assets, mean |corr|)
    chosen: tuple[str, ...]
    mode: str
    k: int

    def __post_init__(self) -> None:
        counts = [count for _, count, _ in self.ranked]
        if any(b > a for a, b in zip(counts, counts[1:])):
            raise ValidationError("ranked counts must be non-increasing")
        pool = {driver for driver, _, _ in self.ranked}
        if not set(self.chosen) <= pool:
            raise ValidationError("chosen drivers must come from the ranked pool")
        if len(self.chosen) > self.k:
            raise ValidationError(f"chose {len(self.chosen)} drivers with k={self.k}")

    def to_dict(self) -> dict:
        return {
            "selection_date": None if self.selection_date is None else self.selection_date.isoformat(),
            "mode": self.mode,
            "k": self.k,
            "ranked": [
                {"driver": d, "n_assets": c, "mean_abs_corr": m} for d, c, m in self.ranked
            ],
            "chosen": list(self.chosen),
        }


def lagged_correlation(x: np.ndarray, y: np.ndarray, lag: int) -> float:
    """Pearson correlation of x_t against y_{t-lag} on the overlap window."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"need equal-length vectors, got {x.shape} and {y.shape}")
    if lag < 0:
        raise ValidationError("lag must be non-negative")
    n = x.shape[0] - lag
    if n < 3:
        raise InsufficientDataError(f"need at least lag+3 points, got {x.shape[0]} with lag {lag}")
    xa = x[lag:]
    ya = y[: x.shape[0] - lag]
    xd = xa - xa.mean()
    yd = ya - ya.mean()
    sx = float(np.sqrt(np.dot(xd, xd)))
    sy = float(np.sqrt(np.dot(yd, yd)))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateSeriesError("constant slice in correlation window")
    return float(np.clip(np.dot(xd, yd) / (sx * sy), -1.0, 1.0))


def specific_drivers(
    assets: ReturnPanel, drivers: ReturnPanel, thresholds: Thresholds
) -> SpecificDriverMap:
    """Screen every (asset, driver) pair at lags 0 and 1."""
    if assets.dates != drivers.dates:
        raise ValidationError("asset and driver panels must share the same dates")
    asset_ids = assets.ids
    driver_ids = drivers.ids
    specific: dict[str, frozenset[str]] = {}
    correlations: dict[str, dict[str, float]] = {}
    for aid in asset_ids:
        x = assets.series[aid]
        chosen = set()
        corr_row: dict[str, float] = {}
        for did in driver_ids:
            y = drivers.series[did]
            try:
                c0 = abs(lagged_correlation(x, y, 0))
                c1 = abs(lagged_correlation(x, y, 1))
            except DegenerateSeriesError:
                raise DegenerateSeriesError(
                    f"constant series while screening asset {aid!r} against driver {did!r}"
                ) from None
            corr_row[did] = c0
            if c0 > thresholds.t0 and c1 > thresholds.t1:
                chosen.add(did)
        specific[aid] = frozenset(chosen)
        correlations[aid] = corr_row
    return SpecificDriverMap(
        assets=asset_ids,
        drivers=driver_ids,
        specific=specific,
        correlations=correlations,
        window=(assets.dates[0], assets.dates[-1]),
        thresholds=thresholds,
    )


def rank_pool(spec_map: SpecificDriverMap) -> tuple[tuple[str, int, float], ...]:
    """Drivers shared by at least one asset, most-shared first.

    Count ties break by mean |lag-0 corr| over the assets sharing the
    driver, then lexicographically by id.
    """
    counts: dict[str, int] = {}
    corr_sums: dict[str, float] = {}
    # summation in sorted asset order keeps the mean independent of panel order
    for aid in sorted(spec_map.assets):
        for did in sorted(spec_map.specific[aid]):
            counts[did] = counts.get(did, 0) + 1
            corr_sums[did] = corr_sums.get(did, 0.0) + spec_map.correlations[aid][did]
    pool = [(did, counts[did], corr_sums[did] / counts[did]) for did in counts]
    pool.sort(key=lambda item: (-item[1], -item[2], item[0]))
    return tuple(pool)


def common_drivers(
    spec_map: SpecificDriverMap,
    k: int,
    mode: str = "OPT",
    override: list[str] | None = None,
    selection_date: date | None = None,
) -> CommonDriverSelection:
    """Finalize at most k common drivers from the ranked pool.

    OPT takes the top of the ranking; SELECT keeps the caller's override
    list (order preserved) after validating it against the pool.
    """
    if k < 1:
        raise ValidationError("k must be at least 1")
    if mode not in ("OPT", "SELECT"):
        raise ValidationError(f"mode must be OPT or SELECT, got {mode!r}")
    if not spec_map.assets:
        raise ValidationError("empty specific-driver map")
    ranked = rank_pool(spec_map)
    if not ranked:
        raise NoCommonDriversError("no driver is specific to any asset")
    pool_ids = {driver for driver, _, _ in ranked}
    if mode == "OPT":
        chosen = tuple(driver for driver, _, _ in ranked[:k])
    else:
        if override is None:
            raise ValidationError("SELECT mode requires an override list")
        rejected = [did for did in override if did not in pool_ids]
        if rejected:
            raise ValidationError(f"override drivers not in the candidate pool: {rejected}")
        deduped = list(dict.fromkeys(override))
        chosen = tuple(deduped[:k])
    return CommonDriverSelection(
        selection_date=selection_date,
        ranked=ranked,
        chosen=chosen,
        mode=mode,
        k=k,
    )
