"""Price and return panels, CSV ingestion, and seeded synthetic universes.

A PricePanel is a date-aligned collection of strictly positive level series,
each tagged as an asset or a driver.  Returns are computed by differencing
whole panels; rows with missing values are dropped at load time rather than
interpolated, because fabricated values would leak into every downstream
correlation.

The synthetic generator plants a known common-cause structure: latent
factors drive both the assets and the observable common-driver series, so
selection and verification code can be tested against ground truth.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from datetime import date, timedelta

import numpy as np

from .errors import (
    FormatError,
    InsufficientDataError,
    NoOverlapError,
    ValidationError,
)

# First synthetic calendar date; weekends are skipped to mimic trading days.
SYNTHETIC_EPOCH = date(2019, 1, 1)

# Observation noise on common-driver returns, as a fraction of the asset
# noise level.  Drivers are near-direct observations of the factors.
OBS_NOISE_FRACTION = 0.25

KINDS = ("asset", "driver")


def _freeze(values: np.ndarray) -> np.ndarray:
    out = np.asarray(values, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class PricePanel:
    """Aligned positive price levels, one vector per series id."""

    dates: tuple[date, ...]
    series: dict[str, np.ndarray]
    kinds: dict[str, str]
    dropped_rows: int = 0

    def __post_init__(self) -> None:
        if not self.dates:
            raise ValidationError("panel has no dates")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValidationError("dates must be strictly increasing")
        if set(self.series) != set(self.kinds):
            raise ValidationError("series ids and kind tags disagree")
        for sid, kind in self.kinds.items():
            if kind not in KINDS:
                raise ValidationError(f"unknown kind {kind!r} for {sid!r}")
        frozen = {}
        for sid, values in self.series.items():
            arr = np.asarray(values, dtype=float)
            if arr.shape != (len(self.dates),):
                raise ValidationError(
                    f"series {sid!r} has length {arr.shape}, expected {len(self.dates)}"
                )
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
                raise ValidationError(f"series {sid!r} has non-positive or non-finite prices")
            frozen[sid] = _freeze(arr)
        object.__setattr__(self, "series", frozen)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(self.series)

    def ids_of_kind(self, kind: str) -> tuple[str, ...]:
        return tuple(sid for sid in self.series if self.kinds[sid] == kind)


@dataclass(frozen=True, eq=False)
class ReturnPanel:
    """Per-period returns aligned on dates; method records the convention."""

    dates: tuple[date, ...]
    series: dict[str, np.ndarray]
    kinds: dict[str, str]
    method: str = "simple"

    def __post_init__(self) -> None:
        if self.method not in ("simple", "log"):
            raise ValidationError(f"unknown return method {self.method!r}")
        if not self.dates:
            raise ValidationError("panel has no dates")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValidationError("dates must be strictly increasing")
        if set(self.series) != set(self.kinds):
            raise ValidationError("series ids and kind tags disagree")
        frozen = {}
        for sid, values in self.series.items():
            arr = np.asarray(values, dtype=float)
            if arr.shape != (len(self.dates),):
                raise ValidationError(
                    f"series {sid!r} has length {arr.shape}, expected {len(self.dates)}"
                )
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"series {sid!r} has non-finite returns")
            if self.method == "simple" and np.any(arr <= -1.0):
                raise ValidationError(f"series {sid!r} has simple returns <= -1")
            frozen[sid] = _freeze(arr)
        object.__setattr__(self, "series", frozen)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(self.series)

    def ids_of_kind(self, kind: str) -> tuple[str, ...]:
        return tuple(sid for sid in self.series if self.kinds[sid] == kind)

    def matrix(self, ids: tuple[str, ...] | list[str]) -> np.ndarray:
        """Column-stack the named series into a T x len(ids) matrix."""
        return np.column_stack([self.series[sid] for sid in ids])

    def window_before(self, cutoff: date, length: int | None = None) -> "ReturnPanel":
        """Rows strictly before cutoff, optionally only the trailing length."""
        idx = [i for i, d in enumerate(self.dates) if d < cutoff]
        if length is not None:
            if len(idx) < length:
                raise InsufficientDataError(
                    f"need {length} return dates before {cutoff.isoformat()}, have {len(idx)}"
                )
            idx = idx[-length:]
        if not idx:
            raise InsufficientDataError(f"no return dates before {cutoff.isoformat()}")
        sl = slice(idx[0], idx[-1] + 1)
        return ReturnPanel(
            dates=self.dates[sl],
            series={sid: arr[sl] for sid, arr in self.series.items()},
            kinds=dict(self.kinds),
            method=self.method,
        )

    def subset(self, ids: list[str] | tuple[str, ...]) -> "ReturnPanel":
        missing = [sid for sid in ids if sid not in self.series]
        if missing:
            raise ValidationError(f"unknown series ids: {missing}")
        return ReturnPanel(
            dates=self.dates,
            series={sid: self.series[sid] for sid in ids},
            kinds={sid: self.kinds[sid] for sid in ids},
            method=self.method,
        )


def load_csv(path: str, kind: str) -> PricePanel:
    """Parse a wide CSV (date column first) into a PricePanel.

    Rows containing a blank or nan cell are dropped and counted.  Any other
    cell that fails to parse, and any non-positive price, is an error naming
    the offending row and column.
    """
    if kind not in KINDS:
        raise ValidationError(f"kind must be one of {KINDS}, got {kind!r}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        if len(header) < 2:
            raise FormatError(f"{path}: header must name a date column and at least one series")
        ids = [h.strip() for h in header[1:]]
        if len(set(ids)) != len(ids):
            raise FormatError(f"{path}: duplicate series ids in header")
        rows: list[tuple[date, list[float]]] = []
        dropped = 0
        for lineno, row in enumerate(reader, start=2):
            if not row or all(cell.strip() == "" for cell in row):
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            cells = [cell.strip() for cell in row[1:]]
            if any(c == "" or c.lower() == "nan" for c in cells):
                dropped += 1
                continue
            try:
                when = date.fromisoformat(row[0].strip())
            except ValueError:
                raise FormatError(f"{path}:{lineno}: unparseable date {row[0]!r}") from None
            values = []
            for sid, cell in zip(ids, cells):
                try:
                    value = float(cell)
                except ValueError:
                    raise FormatError(
                        f"{path}:{lineno}: unparseable number {cell!r} in column {sid!r}"
                    ) from None
                if not math.isfinite(value) or value <= 0.0:
                    raise FormatError(
                        f"{path}:{lineno}: non-positive price {cell!r} in column {sid!r}"
                    )
                values.append(value)
            rows.append((when, values))
    if len(rows) < 2:
        raise InsufficientDataError(f"{path}: fewer than 2 usable rows")
    rows.sort(key=lambda item: item[0])
    for (a, _), (b, _) in zip(rows, rows[1:]):
        if a == b:
            raise FormatError(f"{path}: duplicate date {a.isoformat()}")
    dates = tuple(when for when, _ in rows)
    table = np.array([values for _, values in rows], dtype=float)
    series = {sid: table[:, j] for j, sid in enumerate(ids)}
    return PricePanel(
        dates=dates,
        series=series,
        kinds={sid: kind for sid in ids},
        dropped_rows=dropped,
    )


def to_returns(panel: PricePanel, method: str = "simple") -> ReturnPanel:
    """Difference every series into per-period returns, dropping the first date."""
    if method not in ("simple", "log"):
        raise ValidationError(f"unknown return method {method!r}")
    if len(panel.dates) < 2:
        raise InsufficientDataError("need at least 2 dates to compute returns")
    series = {}
    for sid, prices in panel.series.items():
        ratio = prices[1:] / prices[:-1]
        series[sid] = ratio - 1.0 if method == "simple" else np.log(ratio)
    return ReturnPanel(
        dates=panel.dates[1:],
        series=series,
        kinds=dict(panel.kinds),
        method=method,
    )


def cumulate(returns: ReturnPanel, start: float = 100.0) -> PricePanel:
    """Invert to_returns: compound each return series into levels from start.

    The synthetic initial date is placed one calendar day before the first
    return date so that to_returns(cumulate(r)) reproduces r exactly.
    """
    if start <= 0:
        raise ValidationError("start price must be positive")
    dates = (returns.dates[0] - timedelta(days=1),) + returns.dates
    series = {}
    for sid, r in returns.series.items():
        growth = 1.0 + r if returns.method == "simple" else np.exp(r)
        levels = start * np.concatenate([[1.0], np.cumprod(growth)])
        series[sid] = levels
    return PricePanel(dates=dates, series=series, kinds=dict(returns.kinds))


def align(panels: list[PricePanel]) -> PricePanel:
    """Merge panels onto the intersection of their date sets."""
    if not panels:
        raise ValidationError("align requires at least one panel")
    seen: set[str] = set()
    for panel in panels:
        overlap = seen & set(panel.series)
        if overlap:
            raise ValidationError(f"duplicate series ids across panels: {sorted(overlap)}")
        seen |= set(panel.series)
    common = set(panels[0].dates)
    for panel in panels[1:]:
        common &= set(panel.dates)
    if not common:
        raise NoOverlapError("panels share no dates")
    dates = tuple(sorted(common))
    series: dict[str, np.ndarray] = {}
    kinds: dict[str, str] = {}
    for panel in panels:
        keep = np.array([d in common for d in panel.dates], dtype=bool)
        for sid, values in panel.series.items():
            series[sid] = values[keep]
            kinds[sid] = panel.kinds[sid]
    dropped = sum(p.dropped_rows for p in panels)
    return PricePanel(dates=dates, series=series, kinds=kinds, dropped_rows=dropped)


@dataclass(frozen=True, eq=False)
class SyntheticSpec:
    """Parameters of a planted common-cause universe.

    Latent factor returns follow a stationary AR(1); persistence is what
    makes lag-1 correlation screening and one-day-ahead prediction
    non-vacuous.  Pure-noise drivers are serially independent.
    """

    n_assets: int
    n_common_factors: int
    n_idio_drivers_per_asset: int
    n_noise_drivers: int
    factor_loadings: np.ndarray
    noise_vol: float
    horizon: int
    seed: int
    factor_vol: float = 0.01
    factor_persistence: float = 0.5
    idio_vol: float = 0.01
    idio_loading: float = 1.0
    noise_driver_vol: float = 0.01

    def __post_init__(self) -> None:
        if self.n_assets < 1 or self.n_common_factors < 1:
            raise ValidationError("need at least one asset and one factor")
        if self.n_idio_drivers_per_asset < 0 or self.n_noise_drivers < 0:
            raise ValidationError("driver counts must be non-negative")
        if self.horizon < 2:
            raise ValidationError("horizon must be at least 2 days")
        if self.noise_vol < 0 or self.idio_vol < 0 or self.noise_driver_vol < 0:
            raise ValidationError("volatilities must be non-negative")
        if self.factor_vol <= 0:
            raise ValidationError("factor_vol must be positive")
        if not 0.0 <= self.factor_persistence < 1.0:
            raise ValidationError("factor_persistence must lie in [0, 1)")
        loadings = np.asarray(self.factor_loadings, dtype=float)
        if loadings.shape != (self.n_assets, self.n_common_factors):
            raise ValidationError(
                f"factor_loadings must be {self.n_assets}x{self.n_common_factors}, "
                f"got {loadings.shape}"
            )
        if not np.all(np.isfinite(loadings)):
            raise ValidationError("factor_loadings must be finite")
        object.__setattr__(self, "factor_loadings", _freeze(loadings))

    def with_seed(self, seed: int) -> "SyntheticSpec":
        return replace(self, seed=seed)


@dataclass(frozen=True, eq=False)
class SyntheticTruth:
    """Ground truth behind a generated universe, for verification tests."""

    asset_ids: tuple[str, ...]
    common_driver_ids: tuple[str, ...]
    idio_driver_ids: tuple[tuple[str, ...], ...]  # per asset
    noise_driver_ids: tuple[str, ...]
    factor_returns: np.ndarray  # T x K
    loadings: np.ndarray  # n_assets x K


def _trading_dates(n: int) -> tuple[date, ...]:
    out = []
    d = SYNTHETIC_EPOCH
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d)
        d += timedelta(days=1)
    return tuple(out)


def _ar1(innovations: np.ndarray, persistence: float, vol: float) -> np.ndarray:
    """Stationary AR(1) paths with marginal std = vol, one column per series."""
    if vol == 0.0:
        return np.zeros_like(innovations)
    scale = vol * math.sqrt(1.0 - persistence**2)
    out = np.empty_like(innovations)
    out[0] = vol * innovations[0]
    for t in range(1, innovations.shape[0]):
        out[t] = persistence * out[t - 1] + scale * innovations[t]
    return out


def _label(prefix: str, index: int, count: int) -> str:
    width = max(2, len(str(max(count - 1, 0))))
    return f"{prefix}{index:0{width}d}"


def generate_synthetic_with_truth(spec: SyntheticSpec) -> tuple[PricePanel, SyntheticTruth]:
    """Generate a universe and return it with its generating ground truth.

    Draw order is fixed (factors, driver observation noise, idiosyncratic
    drivers, noise drivers, asset noise) so output is bit-stable per seed.
    """
    rng = np.random.default_rng(spec.seed)
    n_ret = spec.horizon - 1
    n_a, n_k = spec.n_assets, spec.n_common_factors
    n_i, n_n = spec.n_idio_drivers_per_asset, spec.n_noise_drivers

    factor = _ar1(rng.standard_normal((n_ret, n_k)), spec.factor_persistence, spec.factor_vol)
    obs_noise = OBS_NOISE_FRACTION * spec.noise_vol * rng.standard_normal((n_ret, n_k))
    idio = _ar1(
        rng.standard_normal((n_ret, n_a * n_i)), spec.factor_persistence, spec.idio_vol
    ).reshape(n_ret, n_a, n_i) if n_i else np.zeros((n_ret, n_a, 0))
    noise_drv = spec.noise_driver_vol * rng.standard_normal((n_ret, n_n))
    asset_noise = spec.noise_vol * rng.standard_normal((n_ret, n_a))

    loadings = np.asarray(spec.factor_loadings)
    asset_ret = factor @ loadings.T + spec.idio_loading * idio.sum(axis=2) + asset_noise
    common_ret = factor + obs_noise

    asset_ids = tuple(_label("A", i, n_a) for i in range(n_a))
    common_ids = tuple(_label("CD", k, n_k) for k in range(n_k))
    idio_ids = tuple(
        tuple(f"{_label('XD', i, n_a)}_{j}" for j in range(n_i)) for i in range(n_a)
    )
    noise_ids = tuple(_label("ND", m, n_n) for m in range(n_n))

    series = {asset_ids[i]: asset_ret[:, i] for i in range(n_a)}
    kinds = {sid: "asset" for sid in asset_ids}
    for k in range(n_k):
        series[common_ids[k]] = common_ret[:, k]
        kinds[common_ids[k]] = "driver"
    for i in range(n_a):
        for j in range(n_i):
            series[idio_ids[i][j]] = idio[:, i, j]
            kinds[idio_ids[i][j]] = "driver"
    for m in range(n_n):
        series[noise_ids[m]] = noise_drv[:, m]
        kinds[noise_ids[m]] = "driver"

    dates = _trading_dates(spec.horizon)
    returns = ReturnPanel(dates=dates[1:], series=series, kinds=kinds, method="simple")
    panel = cumulate(returns, start=100.0)
    # cumulate invents a prior-day date; pin the configured trading grid
    panel = PricePanel(
        dates=dates,
        series=dict(panel.series),
        kinds=dict(panel.kinds),
    )
    truth = SyntheticTruth(
        asset_ids=asset_ids,
        common_driver_ids=common_ids,
        idio_driver_ids=idio_ids,
        noise_driver_ids=noise_ids,
        factor_returns=_freeze(factor),
        loadings=np.asarray(spec.factor_loadings),
    )
    return panel, truth


def generate_synthetic(spec: SyntheticSpec) -> PricePanel:
    """Seeded synthetic PricePanel; see generate_synthetic_with_truth."""
    panel, _ = generate_synthetic_with_truth(spec)
    return panel
