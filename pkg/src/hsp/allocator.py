"""Hierarchical allocation: linkage, leaf ordering, recursive bisection.

The dendrogram is built agglomeratively with Lance-Williams distance
updates and a deterministic tie-break on the smallest cluster-id pair.
Quasi-diagonalization is the depth-first leaf order of that tree, and
recursive bisection walks the ordered list top-down, splitting capital
between halves in inverse proportion to their cluster variances computed
on the (pseudo) covariance matrix supplied by the caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateInputError,
    DegenerateVarianceError,
    InfeasibleError,
    ValidationError,
)
from .sensmat import SensitivityEmbedding, distance_matrix, psd_gram

LINKAGE_METHODS = ("single", "complete", "average")


@dataclass(frozen=True, eq=False)
class Dendrogram:
    """Merge table over leaves 0..n-1; new clusters take ids n, n+1, ..."""

    n_leaves: int
    merges: tuple[tuple[int, int, float, int], ...]  # (left, right, distance, size)
    method: str = "single"

    def __post_init__(self) -> None:
        if self.method not in LINKAGE_METHODS:
            raise ValidationError(f"unknown linkage method {self.method!r}")
        if len(self.merges) != self.n_leaves - 1:
            raise ValidationError(f"expected {self.n_leaves - 1} merges, got {len(self.merges)}")
        seen: set[int] = set()
        for row, (left, right, dist, size) in enumerate(self.merges):
            limit = self.n_leaves + row
            for child in (left, right):
                if not 0 <= child < limit:
                    raise ValidationError(f"merge {row} references invalid node {child}")
                if child in seen:
                    raise ValidationError(f"node {child} appears as a child twice")
                seen.add(child)
            if dist < 0 or size < 2:
                raise ValidationError(f"merge {row} has invalid distance or size")
        if self.method == "single":
            dists = [d for _, _, d, _ in self.merges]
            if any(b < a - 1e-12 for a, b in zip(dists, dists[1:])):
                raise ValidationError("single-linkage merge distances must be non-decreasing")

    @property
    def root(self) -> int:
        return self.n_leaves + len(self.merges) - 1


def _check_distance(distance: np.ndarray) -> np.ndarray:
    d = np.asarray(distance, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError(f"distance must be square, got {d.shape}")
    if d.shape[0] < 2:
        raise DegenerateInputError("need at least 2 items to cluster")
    if not np.allclose(d, d.T, rtol=0, atol=1e-12):
        raise ValidationError("distance matrix must be symmetric")
    if np.any(np.diag(d) != 0.0):
        raise ValidationError("distance matrix must have a zero diagonal")
    if np.any(d < 0.0) or not np.all(np.isfinite(d)):
        raise ValidationError("distances must be finite and non-negative")
    return d


def linkage(distance: np.ndarray, method: str = "single") -> Dendrogram:
    """Agglomerate N leaves into a dendrogram of N-1 merges.

    The pair to merge is the closest one, equal distances going to the
    smallest (i, j) id pair.  Within a merge the taller child is stored
    on the left so traversal starts in the deeper subtree; height ties
    fall back to each side's sorted distances to the outside leaves,
    then to the node id.  The data-derived child order keeps the leaf
    sequence independent of how the input rows were labeled.
    """
    if method not in LINKAGE_METHODS:
        raise ValidationError(f"unknown linkage method {method!r}")
    d = _check_distance(distance)
    n = d.shape[0]
    # pairwise cluster distances, keyed by (smaller id, larger id)
    dist: dict[tuple[int, int], float] = {
        (i, j): float(d[i, j]) for i in range(n) for j in range(i + 1, n)
    }
    sizes = {i: 1 for i in range(n)}
    heights = {i: 0.0 for i in range(n)}
    members = {i: [i] for i in range(n)}
    active = set(range(n))

    def outside_profile(node: int) -> list[float]:
        inside = set(members[node])
        return sorted(
            float(d[i, j]) for i in members[node] for j in range(n) if j not in inside
        )

    merges: list[tuple[int, int, float, int]] = []
    for step in range(n - 1):
        best = min(dist, key=lambda pair: (dist[pair], pair))
        left, right = best
        height = dist[best]
        new_id = n + step
        size = sizes[left] + sizes[right]
        if heights[left] != heights[right]:
            if heights[left] < heights[right]:
                left, right = right, left
        elif (outside_profile(left), left) > (outside_profile(right), right):
            left, right = right, left
        merges.append((left, right, height, size))
        active.discard(left)
        active.discard(right)
        for other in sorted(active):
            a = dist[(min(left, other), max(left, other))]
            b = dist[(min(right, other), max(right, other))]
            if method == "single":
                joined = min(a, b)
            elif method == "complete":
                joined = max(a, b)
            else:
                joined = (sizes[left] * a + sizes[right] * b) / size
            dist[(other, new_id)] = joined
        dist = {
            pair: value
            for pair, value in dist.items()
            if left not in pair and right not in pair
        }
        sizes[new_id] = size
        heights[new_id] = height
        members[new_id] = members[left] + members[right]
        active.add(new_id)
    return Dendrogram(n_leaves=n, merges=tuple(merges), method=method)


def quasi_diagonalize(dendrogram: Dendrogram) -> list[int]:
    """Depth-first leaf order of the dendrogram, left child first."""
    order: list[int] = []
    stack = [dendrogram.root]
    while stack:
        node = stack.pop()
        if node < dendrogram.n_leaves:
            order.append(node)
            continue
        left, right, _, _ = dendrogram.merges[node - dendrogram.n_leaves]
        stack.append(right)
        stack.append(left)
    return order


def _cluster_variance(gram: np.ndarray, idx: list[int]) -> float:
    sub = gram[np.ix_(idx, idx)]
    inv = 1.0 / np.diag(sub)
    w = inv / inv.sum()
    return float(w @ sub @ w)


def recursive_bisection(
    gram: np.ndarray, ordering: list[int] | np.ndarray, ids: tuple[str, ...] | None = None
) -> np.ndarray:
    """Split capital down the ordered list in inverse-variance proportions.

    Each split cuts the segment at ceil(n/2); a segment's variance is
    w~' G~ w~ with w~ the inverse-diagonal weights inside the segment.
    Returns weights aligned to the original (pre-ordering) indices.
    """
    g = np.asarray(gram, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError(f"gram must be square, got {g.shape}")
    n = g.shape[0]
    order = [int(i) for i in ordering]
    if sorted(order) != list(range(n)):
        raise ValidationError("ordering must be a permutation of 0..N-1")
    diag = np.diag(g)
    bad = np.nonzero(diag <= 0.0)[0]
    if bad.size:
        name = ids[bad[0]] if ids is not None else f"index {bad[0]}"
        raise DegenerateVarianceError(f"non-positive pseudo-variance for {name}")
    weights = np.ones(n)
    segments = [order]
    while segments:
        segment = segments.pop()
        if len(segment) < 2:
            continue
        mid = math.ceil(len(segment) / 2)
        left, right = segment[:mid], segment[mid:]
        v_left = _cluster_variance(g, left)
        v_right = _cluster_variance(g, right)
        total = v_left + v_right
        # both halves exposure-free: split evenly rather than divide by zero
        alpha = 0.5 if total == 0.0 else 1.0 - v_left / total
        weights[left] *= alpha
        weights[right] *= 1.0 - alpha
        segments.append(left)
        segments.append(right)
    return weights


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Long-only weights over named assets, summing to one."""

    ids: tuple[str, ...]
    weights: np.ndarray
    cap: float | None = None

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(self.ids),):
            raise ValidationError(f"expected {len(self.ids)} weights, got {w.shape}")
        if len(set(self.ids)) != len(self.ids):
            raise ValidationError("duplicate asset ids")
        if np.any(w < -1e-12) or not np.all(np.isfinite(w)):
            raise ValidationError("weights must be non-negative and finite")
        if abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValidationError(f"weights sum to {w.sum()!r}, not 1")
        if self.cap is not None and np.any(w > self.cap + 1e-9):
            raise ValidationError(f"a weight exceeds the cap {self.cap}")
        w = np.maximum(w, 0.0)
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    def as_dict(self) -> dict[str, float]:
        return {aid: float(w) for aid, w in zip(self.ids, self.weights)}

    def weight(self, asset_id: str) -> float:
        return float(self.weights[self.ids.index(asset_id)])


def cap_array(weights: np.ndarray, cap: float) -> np.ndarray:
    """Iterative clip-and-redistribute onto the capped simplex."""
    w = np.asarray(weights, dtype=float).copy()
    n = w.shape[0]
    if cap < 1.0 / n - 1e-12:
        raise InfeasibleError(f"cap {cap} is below 1/{n}")
    capped = np.zeros(n, dtype=bool)
    for _ in range(n):
        violating = (w > cap + 1e-15) & ~capped
        if not violating.any():
            break
        capped |= violating
        w[capped] = cap
        free = ~capped
        remaining = 1.0 - cap * capped.sum()
        free_sum = w[free].sum()
        if not free.any() or free_sum <= 0.0:
            w[:] = cap  # only reachable when cap * n == 1
            break
        w[free] *= remaining / free_sum
    return w


def apply_cap(weights: WeightVector, cap: float) -> WeightVector:
    """Enforce a per-name maximum, redistributing the excess proportionally."""
    return WeightVector(ids=weights.ids, weights=cap_array(weights.weights, cap), cap=cap)


def hsp_weights(
    embedding: SensitivityEmbedding,
    cap: float | None = None,
    method: str = "single",
) -> WeightVector:
    """Full pipeline from a sensitivity embedding to final weights."""
    dist = distance_matrix(embedding)
    dendrogram = linkage(dist, method=method)
    order = quasi_diagonalize(dendrogram)
    gram, _ = psd_gram(embedding)
    raw = recursive_bisection(gram, order, ids=embedding.asset_ids)
    if cap is not None:
        raw = cap_array(raw, cap)
    return WeightVector(ids=embedding.asset_ids, weights=raw, cap=cap)
