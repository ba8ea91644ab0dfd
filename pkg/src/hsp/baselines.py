"""Competitor allocators: equal weight, mean-variance family, reference HRP.

The mean-variance solver is a projected gradient method on the capped
simplex.  One solver covers all four objectives; projection onto
{sum w = 1, 0 <= w <= cap} is exact via bisection on the shift in
clip(v - tau, 0, cap).  HRP reuses the allocator's clustering and
bisection on the return-correlation distance with the sample covariance
supplying the variances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .allocator import WeightVector, linkage, quasi_diagonalize, recursive_bisection
from .data import ReturnPanel
from .errors import (
    DegenerateSeriesError,
    InfeasibleError,
    InsufficientDataError,
    ValidationError,
)

MV_KINDS = ("max_sharpe", "min_vol", "quadratic_utility", "target_return")
MV_ITERATIONS = 5000
MV_TOLERANCE = 1e-10


@dataclass(frozen=True)
class MvObjective:
    """Which mean-variance program to solve, and under what cap."""

    kind: str
    cap: float = 1.0
    risk_aversion: float | None = None
    target: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in MV_KINDS:
            raise ValidationError(f"kind must be one of {MV_KINDS}, got {self.kind!r}")
        if not 0.0 < self.cap <= 1.0:
            raise ValidationError("cap must lie in (0, 1]")
        if self.kind == "quadratic_utility":
            if self.risk_aversion is None or self.risk_aversion <= 0:
                raise ValidationError("quadratic_utility requires risk_aversion > 0")
        if self.kind == "target_return" and self.target is None:
            raise ValidationError("target_return requires a target")


def equal_weight(n: int, ids: tuple[str, ...] | None = None) -> WeightVector:
    """1/N on each of n assets."""
    if n < 1:
        raise ValidationError("cannot weight an empty universe")
    if ids is None:
        ids = tuple(f"asset_{i}" for i in range(n))
    if len(ids) != n:
        raise ValidationError(f"{len(ids)} ids for n={n}")
    return WeightVector(ids=ids, weights=np.full(n, 1.0 / n))


def project_capped_simplex(v: np.ndarray, cap: float) -> np.ndarray:
    """Euclidean projection onto {w: sum w = 1, 0 <= w <= cap}.

    The projection is clip(v - tau, 0, cap) for the unique tau making the
    sum one; the sum is monotone in tau, so bisection is exact enough.
    """
    n = v.shape[0]
    if cap < 1.0 / n - 1e-12:
        raise InfeasibleError(f"cap {cap} is below 1/{n}")
    lo = float(v.min()) - 1.0 - cap
    hi = float(v.max())
    for _ in range(100):
        tau = (lo + hi) / 2.0
        total = np.clip(v - tau, 0.0, cap).sum()
        if total > 1.0:
            lo = tau
        else:
            hi = tau
    return np.clip(v - (lo + hi) / 2.0, 0.0, cap)


def _asset_matrix(panel: ReturnPanel, ids: tuple[str, ...] | None) -> tuple[tuple[str, ...], np.ndarray]:
    if ids is None:
        ids = panel.ids_of_kind("asset") or panel.ids
    return tuple(ids), panel.matrix(tuple(ids))


def _max_return_vertex(mu: np.ndarray, cap: float, ascending: bool = False) -> np.ndarray:
    """Greedy cap filling along sorted expected returns."""
    n = mu.shape[0]
    order = np.argsort(mu, kind="stable")
    if not ascending:
        order = order[::-1]
    w = np.zeros(n)
    mass = 1.0
    for i in order:
        take = min(cap, mass)
        w[i] = take
        mass -= take
        if mass <= 0:
            break
    return w


def mean_variance(
    returns: ReturnPanel,
    objective: MvObjective,
    ids: tuple[str, ...] | None = None,
) -> WeightVector:
    """Solve the requested objective long-only under the per-name cap."""
    ids, r = _asset_matrix(returns, ids)
    t, n = r.shape
    if n == 1:
        return WeightVector(ids=ids, weights=np.ones(1), cap=objective.cap)
    if t <= n:
        raise InsufficientDataError(f"window of {t} rows cannot estimate {n}x{n} covariance")
    mu = r.mean(axis=0)
    sigma = np.cov(r.T, ddof=1)
    cap = objective.cap

    if objective.kind == "target_return":
        r_max = float(mu @ _max_return_vertex(mu, cap))
        r_min = float(mu @ _max_return_vertex(mu, cap, ascending=True))
        if objective.target > r_max + 1e-12:
            raise InfeasibleError(
                f"target {objective.target} outside attainable range [{r_min}, {r_max}]"
            )

    lam_max = float(np.linalg.eigvalsh(sigma).max())
    scale = max(lam_max, 1e-16)

    def value_grad(w: np.ndarray) -> tuple[float, np.ndarray]:
        sw = sigma @ w
        if objective.kind == "min_vol":
            return float(w @ sw), 2.0 * sw
        if objective.kind == "quadratic_utility":
            lam = objective.risk_aversion
            return float(-(mu @ w) + 0.5 * lam * (w @ sw)), -mu + lam * sw
        if objective.kind == "max_sharpe":
            var = float(w @ sw)
            vol = np.sqrt(max(var, 1e-300))
            ret = float(mu @ w)
            return -ret / vol, -mu / vol + ret * sw / vol**3
        spread = max(float(mu.max() - mu.min()), 1e-12)
        rho = 1e4 * scale / spread**2
        shortfall = max(0.0, objective.target - float(mu @ w))
        return float(w @ sw) + rho * shortfall**2, 2.0 * sw - 2.0 * rho * shortfall * mu

    w = project_capped_simplex(np.full(n, 1.0 / n), cap)
    f, grad = value_grad(w)
    best_f, best_w = f, w.copy()
    step = min(1.0 / (2.0 * scale), 1e6)  # backtracking reshapes this quickly
    for _ in range(MV_ITERATIONS):
        candidate = project_capped_simplex(w - step * grad, cap)
        f_new, grad_new = value_grad(candidate)
        if f_new <= f + 1e-18:
            moved = float(np.abs(candidate - w).max())
            w, f, grad = candidate, f_new, grad_new
            if f < best_f:
                best_f, best_w = f, w.copy()
            step *= 1.2
            if moved < MV_TOLERANCE:
                break
        else:
            step *= 0.5
            if step < 1e-18:
                break
    w = best_w

    if objective.kind == "target_return":
        achieved = float(mu @ w)
        if achieved < objective.target - 1e-12:
            vertex = _max_return_vertex(mu, cap)
            top = float(mu @ vertex)
            theta = (objective.target - achieved) / max(top - achieved, 1e-300)
            theta = min(1.0, theta * (1.0 + 1e-12))
            w = (1.0 - theta) * w + theta * vertex
    return WeightVector(ids=ids, weights=w, cap=cap)


def hrp_correlation(
    returns: ReturnPanel, ids: tuple[str, ...] | None = None
) -> WeightVector:
    """Classic hierarchical risk parity on the return-correlation distance."""
    ids, r = _asset_matrix(returns, ids)
    t, n = r.shape
    if t < 3:
        raise InsufficientDataError("need at least 3 rows for a correlation matrix")
    if n == 1:
        return WeightVector(ids=ids, weights=np.ones(1))
    # range, not std: the float mean of a constant series can differ from
    # the constant, leaving a tiny nonzero std
    flat = np.nonzero(np.ptp(r, axis=0) == 0.0)[0]
    if flat.size:
        raise DegenerateSeriesError(f"constant return series for {ids[flat[0]]!r}")
    rho = np.clip(np.corrcoef(r.T), -1.0, 1.0)
    dist = np.sqrt(np.clip(0.5 * (1.0 - rho), 0.0, None))
    np.fill_diagonal(dist, 0.0)
    dist = (dist + dist.T) / 2.0
    order = quasi_diagonalize(linkage(dist, method="single"))
    cov = np.cov(r.T, ddof=1)
    weights = recursive_bisection(cov, order, ids=ids)
    return WeightVector(ids=ids, weights=weights)
