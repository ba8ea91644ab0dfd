"""Sensitivity embedding, Euclidean distances, and the repaired Gram matrix.

Each asset becomes a point whose coordinates are its mean sensitivities to
the shared driver list.  Clustering consumes the pairwise Euclidean
distance matrix; recursive bisection consumes a Gram matrix rebuilt from
row-centered coordinates with negative eigenvalues clipped away, whose
diagonal doubles as the pseudo-variance of each asset's exposure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateEmbeddingError,
    DegenerateInputError,
    InconsistentUniverseError,
    ValidationError,
)
from .nnet import FitResult


@dataclass(frozen=True, eq=False)
class SensitivityEmbedding:
    """N assets placed in D driver-sensitivity coordinates."""

    asset_ids: tuple[str, ...]
    driver_ids: tuple[str, ...]
    coordinates: np.ndarray  # N x D

    def __post_init__(self) -> None:
        coords = np.asarray(self.coordinates, dtype=float)
        if coords.shape != (len(self.asset_ids), len(self.driver_ids)):
            raise ValidationError(
                f"coordinates must be {len(self.asset_ids)}x{len(self.driver_ids)}, "
                f"got {coords.shape}"
            )
        if not np.all(np.isfinite(coords)):
            raise ValidationError("non-finite sensitivity coordinates")
        if len(set(self.asset_ids)) != len(self.asset_ids):
            raise ValidationError("duplicate asset ids")
        if len(set(self.driver_ids)) != len(self.driver_ids):
            raise ValidationError("duplicate driver ids")
        coords = coords.copy()
        coords.flags.writeable = False
        object.__setattr__(self, "coordinates", coords)


@dataclass(frozen=True, eq=False)
class SensitivityMatrix:
    """Distance and repaired Gram matrices over the same asset order."""

    asset_ids: tuple[str, ...]
    distance: np.ndarray
    gram: np.ndarray
    repair_shift: float

    def __post_init__(self) -> None:
        n = len(self.asset_ids)
        d = np.asarray(self.distance, dtype=float)
        g = np.asarray(self.gram, dtype=float)
        if d.shape != (n, n) or g.shape != (n, n):
            raise ValidationError("matrix shapes must match the asset count")
        if not np.allclose(d, d.T, rtol=0, atol=1e-12):
            raise ValidationError("distance matrix must be symmetric")
        if np.any(np.diag(d) != 0.0) or np.any(d < 0.0):
            raise ValidationError("distance matrix needs a zero diagonal and no negatives")
        # triangle inequality, allowing 1e-9 numerical slack
        for i in range(n):
            via = d[i][None, :] + d[:, i][:, None]
            if np.any(d > via + 1e-9):
                raise ValidationError("triangle inequality violated")
        if not np.allclose(g, g.T, rtol=0, atol=1e-12):
            raise ValidationError("gram matrix must be symmetric")
        if np.linalg.eigvalsh((g + g.T) / 2).min() < -1e-10:
            raise ValidationError("gram matrix must be positive semidefinite")
        if self.repair_shift < 0:
            raise ValidationError("repair_shift must be non-negative")


def embed(fits: dict[str, FitResult], driver_order: tuple[str, ...] | list[str]) -> SensitivityEmbedding:
    """Stack mean sensitivities into rows, columns ordered per driver_order."""
    if not fits:
        raise ValidationError("no fits to embed")
    order = tuple(driver_order)
    wanted = set(order)
    if len(wanted) != len(order):
        raise ValidationError("duplicate ids in driver_order")
    rows = []
    for aid, fit in fits.items():
        have = set(fit.driver_ids)
        if have != wanted:
            missing = sorted(wanted - have)
            extra = sorted(have - wanted)
            raise InconsistentUniverseError(
                f"fit for {aid!r} does not cover the driver list "
                f"(missing {missing}, extra {extra})"
            )
        by_id = dict(zip(fit.driver_ids, fit.mean_sensitivity))
        rows.append([by_id[did] for did in order])
    return SensitivityEmbedding(
        asset_ids=tuple(fits),
        driver_ids=order,
        coordinates=np.array(rows, dtype=float),
    )


def distance_matrix(embedding: SensitivityEmbedding) -> np.ndarray:
    """Pairwise Euclidean distances between embedding rows."""
    coords = embedding.coordinates
    if coords.shape[0] < 2:
        raise DegenerateInputError("need at least 2 assets for a distance matrix")
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt((diff**2).sum(axis=-1))


def psd_gram(embedding: SensitivityEmbedding) -> tuple[np.ndarray, float]:
    """Row-centered Gram matrix with negative eigenvalues clipped to zero.

    Centering makes this the classical-scaling Gram of the distance matrix:
    when no repair is needed, d(i,j)^2 = g_ii + g_jj - 2 g_ij exactly.
    """
    coords = embedding.coordinates
    if coords.shape[0] < 2:
        raise DegenerateInputError("need at least 2 assets for a gram matrix")
    centered = coords - coords.mean(axis=0)
    scale = max(1.0, float(np.max(np.abs(coords))))
    if float(np.max(np.abs(centered))) <= 1e-14 * scale:
        raise DegenerateEmbeddingError("all embedding rows coincide; gram is zero")
    gram = centered @ centered.T
    gram = (gram + gram.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(gram)
    repair_shift = float(max(0.0, -eigvals.min()))
    clipped = np.maximum(eigvals, 0.0)
    repaired = (eigvecs * clipped) @ eigvecs.T
    repaired = (repaired + repaired.T) / 2.0
    return repaired, repair_shift


def sensitivity_matrix(embedding: SensitivityEmbedding) -> SensitivityMatrix:
    """Bundle the distance matrix and repaired Gram for the allocator."""
    gram, shift = psd_gram(embedding)
    return SensitivityMatrix(
        asset_ids=embedding.asset_ids,
        distance=distance_matrix(embedding),
        gram=gram,
        repair_shift=shift,
    )


def labeled_csv(ids: tuple[str, ...], matrix: np.ndarray) -> str:
    """Render a square labeled matrix as CSV text."""
    lines = ["id," + ",".join(ids)]
    for sid, row in zip(ids, np.asarray(matrix, dtype=float)):
        lines.append(sid + "," + ",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"
