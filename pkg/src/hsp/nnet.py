"""Per-asset feedforward fits and reverse-mode input sensitivities.

Networks are small tanh MLPs with a linear output, trained full-batch with
Adam on standardized inputs and target for a fixed epoch budget, so a fit
is a pure function of (architecture, data, seed).  Sensitivities are exact
gradients of the fitted network, computed by a hand-written reverse sweep
and rescaled back to return-per-return units; a linear regression on
lagged terms is kept alongside as the classical baseline.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    DivergenceError,
    InsufficientDataError,
    NoViableArchitectureError,
    ValidationError,
)

logger = logging.getLogger(__name__)

EPOCHS = 500
LEARNING_RATE = 1e-2
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class ArchitectureConfig:
    """Hyperparameters of one candidate fit."""

    layers: int
    units: int
    lag: int
    window: int
    include_autoregressive: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.layers < 1 or self.units < 1:
            raise ValidationError("layers and units must be at least 1")
        if self.lag not in (0, 1):
            raise ValidationError(f"lag must be 0 or 1, got {self.lag}")
        # window > units guards against trivial interpolation of the sample
        if self.window <= self.units:
            raise ValidationError(f"window ({self.window}) must exceed units ({self.units})")

    @property
    def shift(self) -> int:
        return max(self.lag, 1 if self.include_autoregressive else 0)

    def label(self) -> str:
        ar = "+ar" if self.include_autoregressive else ""
        return f"{self.layers}x{self.units} lag{self.lag} w{self.window}{ar}"


DEFAULT_GRID: tuple[ArchitectureConfig, ...] = tuple(
    ArchitectureConfig(layers=layers, units=units, lag=lag, window=window)
    for layers in (1, 2)
    for units in (4, 8, 16)
    for lag in (0, 1)
    for window in (63, 126)
)


@dataclass(frozen=True, eq=False)
class Mlp:
    """Trained network parameters plus the input/output standardization."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    driver_ids: tuple[str, ...]
    autoregressive: bool
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.biases) or len(self.weights) < 2:
            raise ValidationError("need matching weight/bias lists with >= 2 layers")
        width = self.input_width
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
                raise ValidationError("layer weight/bias shapes disagree")
            if w.shape[0] != width:
                raise ValidationError("layer dimensions do not chain")
            width = w.shape[1]
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValidationError("non-finite network parameters")
        if width != 1:
            raise ValidationError("output layer must have width 1")
        if self.x_mean.shape != (self.input_width,) or self.x_std.shape != (self.input_width,):
            raise ValidationError("scaler shapes do not match the input width")

    @property
    def input_width(self) -> int:
        return len(self.driver_ids) + (1 if self.autoregressive else 0)

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def _forward(self, x_std: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Standardized forward pass; returns hidden activations and output."""
        hidden = []
        h = x_std
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.tanh(h @ w + b)
            hidden.append(h)
        out = h @ self.weights[-1] + self.biases[-1]
        return hidden, out[:, 0]

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.input_width:
            raise ValueError(f"expected T x {self.input_width} inputs, got {x.shape}")
        _, out = self._forward((x - self.x_mean) / self.x_std)
        return out * self.y_std + self.y_mean


@dataclass(frozen=True, eq=False)
class FitResult:
    """One trained architecture with its sensitivity summary."""

    architecture: ArchitectureConfig
    mlp: Mlp
    mse: float
    residual: np.ndarray
    sensitivity_rows: np.ndarray  # T x D, driver columns only
    mean_sensitivity: np.ndarray  # length D
    ar_sensitivity: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.sensitivity_rows)):
            raise ValidationError("non-finite sensitivities")
        expect = self.sensitivity_rows.mean(axis=0) if self.sensitivity_rows.size else self.mean_sensitivity
        if not np.allclose(self.mean_sensitivity, expect, rtol=0, atol=1e-12):
            raise ValidationError("mean_sensitivity must be the column mean of the rows")

    @property
    def driver_ids(self) -> tuple[str, ...]:
        return self.mlp.driver_ids

    def to_dict(self) -> dict:
        return {
            "architecture": {
                "layers": self.architecture.layers,
                "units": self.architecture.units,
                "lag": self.architecture.lag,
                "window": self.architecture.window,
                "autoregressive": self.architecture.include_autoregressive,
            },
            "mse": self.mse,
            "mean_sensitivity": {
                did: float(s) for did, s in zip(self.driver_ids, self.mean_sensitivity)
            },
        }


def build_design(
    asset: np.ndarray, drivers: np.ndarray, arch: ArchitectureConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Lay out the regression problem over the trailing fitting window.

    Row t carries driver returns at t - lag, plus the asset's own previous
    return as the last column when the fit is autoregressive; the target is
    the asset return at t.  The first shift rows of the window are consumed
    by the lag structure.
    """
    asset = np.asarray(asset, dtype=float)
    drivers = np.asarray(drivers, dtype=float)
    if asset.ndim != 1:
        raise ValueError("asset must be a vector")
    if drivers.ndim != 2 or drivers.shape[0] != asset.shape[0]:
        raise ValueError(f"drivers must be T x D aligned with the asset, got {drivers.shape}")
    if drivers.shape[1] < 1:
        raise ValueError("need at least one driver column")
    if asset.shape[0] < arch.window:
        raise InsufficientDataError(
            f"window {arch.window} exceeds available history {asset.shape[0]}"
        )
    a = asset[-arch.window :]
    d = drivers[-arch.window :]
    shift = arch.shift
    x = d[shift - arch.lag : arch.window - arch.lag]
    if arch.include_autoregressive:
        x = np.column_stack([x, a[shift - 1 : arch.window - 1]])
    y = a[shift:]
    return x, y


def derive_seed(asset_id: str, arch: ArchitectureConfig, global_seed: int) -> int:
    """Stable per-fit seed so parallel schedules cannot change results."""
    key = "|".join(
        [
            asset_id,
            str(arch.layers),
            str(arch.units),
            str(arch.lag),
            str(arch.window),
            str(int(arch.include_autoregressive)),
            str(global_seed),
        ]
    )
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


def _init_params(
    arch: ArchitectureConfig, width: int, rng: np.random.Generator
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    dims = [width] + [arch.units] * arch.layers + [1]
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims, dims[1:]):
        weights.append(rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in))
        biases.append(np.zeros(fan_out))
    # zero output layer: the initial prediction is the target mean, so the
    # initial loss equals the target variance and a constant target fits
    # exactly from epoch zero
    weights[-1] = np.zeros_like(weights[-1])
    return weights, biases


def _forward_backward(
    weights: list[np.ndarray],
    biases: list[np.ndarray],
    x: np.ndarray,
    y: np.ndarray,
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """One full-batch MSE evaluation with gradients for every parameter."""
    hs = [x]
    for w, b in zip(weights[:-1], biases[:-1]):
        hs.append(np.tanh(hs[-1] @ w + b))
    out = (hs[-1] @ weights[-1] + biases[-1])[:, 0]
    err = out - y
    loss = float(np.mean(err**2))
    n = y.shape[0]
    delta = (2.0 / n) * err[:, None]  # d loss / d out
    grads_w: list[np.ndarray] = [None] * len(weights)
    grads_b: list[np.ndarray] = [None] * len(weights)
    grads_w[-1] = hs[-1].T @ delta
    grads_b[-1] = delta.sum(axis=0)
    back = delta @ weights[-1].T
    for layer in range(len(weights) - 2, -1, -1):
        back = back * (1.0 - hs[layer + 1] ** 2)  # tanh'
        grads_w[layer] = hs[layer].T @ back
        grads_b[layer] = back.sum(axis=0)
        back = back @ weights[layer].T
    return loss, grads_w, grads_b


def train(
    arch: ArchitectureConfig,
    x: np.ndarray,
    y: np.ndarray,
    driver_ids: tuple[str, ...] | None = None,
) -> FitResult:
    """Fit one architecture on a prepared design; deterministic per seed.

    The best parameters seen across the epoch budget are kept, so the
    reported MSE never exceeds the MSE at initialization.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise ValueError(f"design shapes disagree: {x.shape} vs {y.shape}")
    n_ar = 1 if arch.include_autoregressive else 0
    n_drivers = x.shape[1] - n_ar
    if n_drivers < 1:
        raise ValueError("design has no driver columns")
    if driver_ids is None:
        driver_ids = tuple(f"x{j}" for j in range(n_drivers))
    if len(driver_ids) != n_drivers:
        raise ValidationError(
            f"{len(driver_ids)} driver ids for {n_drivers} driver columns"
        )

    x_mean = x.mean(axis=0)
    x_std = x.std(axis=0)
    x_std = np.where(x_std == 0.0, 1.0, x_std)
    y_mean = float(y.mean())
    y_std = float(y.std())
    if y_std == 0.0:
        y_std = 1.0
    xs = (x - x_mean) / x_std
    ys = (y - y_mean) / y_std

    rng = np.random.default_rng(arch.seed)
    weights, biases = _init_params(arch, x.shape[1], rng)
    m_w = [np.zeros_like(w) for w in weights]
    v_w = [np.zeros_like(w) for w in weights]
    m_b = [np.zeros_like(b) for b in biases]
    v_b = [np.zeros_like(b) for b in biases]

    best_loss = np.inf
    best = None
    for epoch in range(EPOCHS):
        loss, grads_w, grads_b = _forward_backward(weights, biases, xs, ys)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss training {arch.label()}")
        if loss < best_loss:
            best_loss = loss
            best = ([w.copy() for w in weights], [b.copy() for b in biases])
        t = epoch + 1
        corr1 = 1.0 - ADAM_BETA1**t
        corr2 = 1.0 - ADAM_BETA2**t
        for i in range(len(weights)):
            m_w[i] = ADAM_BETA1 * m_w[i] + (1 - ADAM_BETA1) * grads_w[i]
            v_w[i] = ADAM_BETA2 * v_w[i] + (1 - ADAM_BETA2) * grads_w[i] ** 2
            weights[i] -= LEARNING_RATE * (m_w[i] / corr1) / (np.sqrt(v_w[i] / corr2) + ADAM_EPS)
            m_b[i] = ADAM_BETA1 * m_b[i] + (1 - ADAM_BETA1) * grads_b[i]
            v_b[i] = ADAM_BETA2 * v_b[i] + (1 - ADAM_BETA2) * grads_b[i] ** 2
            biases[i] -= LEARNING_RATE * (m_b[i] / corr1) / (np.sqrt(v_b[i] / corr2) + ADAM_EPS)
    loss, _, _ = _forward_backward(weights, biases, xs, ys)
    if np.isfinite(loss) and loss < best_loss:
        best_loss = loss
        best = (weights, biases)
    if best is None:
        raise DivergenceError(f"no finite loss while training {arch.label()}")

    mlp = Mlp(
        weights=tuple(best[0]),
        biases=tuple(best[1]),
        driver_ids=tuple(driver_ids),
        autoregressive=arch.include_autoregressive,
        x_mean=x_mean,
        x_std=x_std,
        y_mean=y_mean,
        y_std=y_std,
    )
    prediction = mlp.predict(x)
    residual = y - prediction
    mse = float(best_loss * y_std**2)
    grads = sensitivities(mlp, x)
    rows = grads[:, :n_drivers]
    ar_col = grads[:, n_drivers] if n_ar else None
    return FitResult(
        architecture=arch,
        mlp=mlp,
        mse=mse,
        residual=residual,
        sensitivity_rows=rows,
        mean_sensitivity=rows.mean(axis=0),
        ar_sensitivity=ar_col,
    )


def sensitivities(mlp: Mlp, x: np.ndarray) -> np.ndarray:
    """Gradient of the prediction with respect to each raw input, per row.

    One batched reverse sweep covers all rows; columns follow the network
    input layout (drivers first, autoregressive slot last when present).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != mlp.input_width:
        raise ValueError(f"expected T x {mlp.input_width} inputs, got {x.shape}")
    xs = (x - mlp.x_mean) / mlp.x_std
    hidden, _ = mlp._forward(xs)
    n = x.shape[0]
    back = np.broadcast_to(mlp.weights[-1][:, 0], (n, mlp.weights[-1].shape[0])).copy()
    for layer in range(len(mlp.weights) - 2, -1, -1):
        back = back * (1.0 - hidden[layer] ** 2)
        back = back @ mlp.weights[layer].T
    # chain rule through the standardization of x and y
    return back * (mlp.y_std / mlp.x_std)


def grid_search(
    asset_id: str,
    candidates: list[ArchitectureConfig] | tuple[ArchitectureConfig, ...],
    asset: np.ndarray,
    drivers: np.ndarray,
    driver_ids: tuple[str, ...] | None = None,
    global_seed: int = 0,
) -> FitResult:
    """Train every viable candidate and keep the lowest-MSE fit.

    Candidates whose window exceeds the available history are skipped with
    a warning; exact MSE ties break by parameter count, then list order.
    """
    if not candidates:
        raise ValidationError("grid_search needs at least one candidate")
    asset = np.asarray(asset, dtype=float)
    best_key = None
    best_fit = None
    for order, arch in enumerate(candidates):
        if asset.shape[0] < arch.window:
            logger.warning(
                "skipping %s for %s: window %d exceeds history %d",
                arch.label(), asset_id, arch.window, asset.shape[0],
            )
            continue
        seeded = replace(arch, seed=derive_seed(asset_id, arch, global_seed))
        x, y = build_design(asset, drivers, seeded)
        try:
            fit = train(seeded, x, y, driver_ids=driver_ids)
        except DivergenceError:
            logger.warning("divergence for %s on %s, dropped", arch.label(), asset_id)
            continue
        key = (fit.mse, fit.mlp.n_params, order)
        if best_key is None or key < best_key:
            best_key = key
            best_fit = fit
    if best_fit is None:
        raise NoViableArchitectureError(f"no candidate produced a finite fit for {asset_id}")
    return best_fit


@dataclass(frozen=True, eq=False)
class LinearFit:
    """Least-squares baseline on lagged asset and driver terms."""

    coefficients: np.ndarray
    intercept: float
    residual: np.ndarray
    stderr: np.ndarray
    terms: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.coefficients.shape != (len(self.terms),):
            raise ValidationError("coefficient count must match the design width")
        if self.stderr.shape != self.coefficients.shape:
            raise ValidationError("stderr shape must match coefficients")

    def coefficient(self, term: str) -> float:
        return float(self.coefficients[self.terms.index(term)])


def fit_linear(
    asset: np.ndarray,
    drivers: np.ndarray,
    driver_ids: tuple[str, ...] | None = None,
    asset_lags: int = 1,
    driver_lags: tuple[int, ...] = (0, 1),
) -> LinearFit:
    """OLS on lagged terms via normal equations, ridge fallback on rank loss."""
    asset = np.asarray(asset, dtype=float)
    drivers = np.asarray(drivers, dtype=float)
    if drivers.ndim != 2 or drivers.shape[0] != asset.shape[0]:
        raise ValueError("drivers must be T x D aligned with the asset")
    if asset_lags < 0 or any(l < 0 for l in driver_lags):
        raise ValidationError("lags must be non-negative")
    if driver_ids is None:
        driver_ids = tuple(f"x{j}" for j in range(drivers.shape[1]))
    shift = max([asset_lags] + [max(driver_lags) if driver_lags else 0])
    n = asset.shape[0] - shift
    if n < 3:
        raise InsufficientDataError("too little history for the requested lags")
    cols = []
    terms: list[str] = []
    for m in range(1, asset_lags + 1):
        cols.append(asset[shift - m : asset.shape[0] - m])
        terms.append(f"asset[t-{m}]")
    for j, did in enumerate(driver_ids):
        for l in driver_lags:
            cols.append(drivers[shift - l : drivers.shape[0] - l, j])
            terms.append(f"{did}[t-{l}]")
    cols.append(np.ones(n))
    terms.append("intercept")
    design = np.column_stack(cols)
    target = asset[shift:]
    gram = design.T @ design
    moment = design.T @ target
    try:
        chol = np.linalg.cholesky(gram)
        coef = np.linalg.solve(chol.T, np.linalg.solve(chol, moment))
        gram_inv = np.linalg.inv(gram)
    except np.linalg.LinAlgError:
        ridge = gram + 1e-8 * np.eye(gram.shape[0])
        coef = np.linalg.solve(ridge, moment)
        gram_inv = np.linalg.inv(ridge)
    residual = target - design @ coef
    dof = max(n - design.shape[1], 1)
    sigma2 = float(residual @ residual) / dof
    stderr = np.sqrt(np.maximum(sigma2 * np.diag(gram_inv), 0.0))
    return LinearFit(
        coefficients=coef[:-1],
        intercept=float(coef[-1]),
        residual=residual,
        stderr=stderr[:-1],
        terms=tuple(terms[:-1]),
    )
