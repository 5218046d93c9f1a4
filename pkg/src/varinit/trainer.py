"""Fitting coordinate networks (images, audio, 2-D signed distance fields).

All coordinates are scaled to [-1, 1] per dimension, image intensities and
audio amplitudes to [-1, 1], and training is full-batch Adam on the mean
squared error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .activations import ActivationSpec, parse_activation
from .codecs import to_unit_range
from .initialization import UNIFORM_INPUT, NetworkShape, build_plan
from .nn import Mlp, backward, forward, initialize, mse_loss
from .sampling import derive_seed
from .solver import solve_sigma_p


class DivergenceError(ArithmeticError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"training diverged at step {step} (loss {loss})")
        self.step = step
        self.loss = loss


def grid_coords(*sizes: int) -> np.ndarray:
    """Cell-centre-free regular grid on [-1, 1]^d, row-major (last axis fastest)."""
    axes = [np.linspace(-1.0, 1.0, n) for n in sizes]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass
class Task:
    kind: str
    coords: np.ndarray
    target: np.ndarray
    grid_shape: tuple
    eval_coords: Optional[np.ndarray] = None
    eval_target: Optional[np.ndarray] = None
    rate: int = 0

    def __post_init__(self):
        if self.kind not in ("image", "audio", "sdf2d"):
            raise ValueError(f"unknown task kind {self.kind!r}")
        if not np.all(np.isfinite(self.target)):
            raise ValueError("task target must be finite")
        if self.target.ndim == 1:
            self.target = self.target[:, None]

    @property
    def input_dim(self) -> int:
        return self.coords.shape[1]

    @property
    def output_dim(self) -> int:
        return self.target.shape[1]


def image_task(pixels, maxval: int = 255) -> Task:
    """Image as a map from (row, col) in [-1, 1]^2 to intensities in [-1, 1]."""
    pixels = np.asarray(pixels)
    h, w = pixels.shape[:2]
    values = to_unit_range(pixels, maxval).reshape(h * w, -1)
    return Task("image", grid_coords(h, w), values, pixels.shape)


def audio_task(samples, rate: int) -> Task:
    samples = np.asarray(samples, dtype=np.float64)
    if np.max(np.abs(samples), initial=0.0) > 1.0:
        raise ValueError("audio amplitudes must lie in [-1, 1]")
    return Task("audio", grid_coords(samples.size), samples.copy(), samples.shape, rate=int(rate))


def sdf2d(points, shape: str = "circle", size: float = 0.5, width: float = 0.15) -> np.ndarray:
    """Exact signed distance of a circle, square or annulus centred at 0."""
    p = np.asarray(points, dtype=np.float64)
    r = np.hypot(p[:, 0], p[:, 1])
    if shape == "circle":
        return r - size
    if shape == "square":
        q = np.abs(p) - size
        outside = np.hypot(np.maximum(q[:, 0], 0.0), np.maximum(q[:, 1], 0.0))
        return outside + np.minimum(np.maximum(q[:, 0], q[:, 1]), 0.0)
    if shape == "annulus":
        return np.abs(r - size) - width
    raise ValueError(f"unknown sdf shape {shape!r}")


def sdf2d_task(shape: str = "circle", size: float = 0.5, train_res: int = 64, eval_res: int = 256) -> Task:
    coords = grid_coords(train_res, train_res)
    eval_coords = grid_coords(eval_res, eval_res)
    return Task(
        "sdf2d",
        coords,
        sdf2d(coords, shape, size),
        (train_res, train_res),
        eval_coords=eval_coords,
        eval_target=sdf2d(eval_coords, shape, size)[:, None],
    )


def synthetic_image(size: int = 64, seed: int = 0) -> np.ndarray:
    """Deterministic 8-bit grayscale test card: smooth shading, edges and texture."""
    y, x = np.mgrid[-1 : 1 : size * 1j, -1 : 1 : size * 1j]
    img = 0.5 + 0.25 * np.sin(3.0 * x + 2.0 * y) * np.cos(2.5 * y)
    img = np.where(np.hypot(x - 0.3, y + 0.2) < 0.35, 0.9, img)
    img = np.where((np.abs(x + 0.45) < 0.25) & (np.abs(y - 0.4) < 0.25), 0.1, img)
    img += 0.08 * np.sin(18.0 * x) * np.sin(14.0 * y)
    rng = np.random.default_rng(seed)
    img += 0.03 * rng.standard_normal(img.shape)
    return np.clip(np.rint(img * 255), 0, 255).astype(np.uint8)


def synthetic_audio(seconds: float = 1.0, rate: int = 8000) -> np.ndarray:
    """Deterministic mono test signal: a few enveloped partials and a chirp."""
    t = np.arange(int(round(seconds * rate))) / rate
    sig = 0.4 * np.sin(2 * np.pi * 110 * t) * np.exp(-1.5 * t)
    sig += 0.25 * np.sin(2 * np.pi * 330 * t + 0.5) * (0.5 + 0.5 * np.cos(2 * np.pi * 2 * t))
    sig += 0.15 * np.sin(2 * np.pi * (60 * t + 180 * t * t))
    return sig / max(1.0, np.max(np.abs(sig)) / 0.95)


def psnr(pred, target, peak: float = 2.0) -> float:
    """``10 log10(peak^2 / MSE)`` in dB; ``inf`` for a perfect fit."""
    mse = float(np.mean((np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def sign_iou(pred, target) -> float:
    """Fraction of points whose predicted and true signed distances agree in sign."""
    p = np.asarray(pred).ravel() <= 0
    t = np.asarray(target).ravel() <= 0
    return float(np.mean(p == t))


def audio_mse(pred, target) -> float:
    return float(np.mean((np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)) ** 2))


METRIC_FLOOR = {"image": 0.0, "sdf2d": 0.0, "audio": math.inf}
HIGHER_IS_BETTER = {"image": True, "sdf2d": True, "audio": False}


class Adam:
    """Adam with bias correction, updating parameter arrays in place."""

    def __init__(self, params: List[np.ndarray], lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: Sequence[np.ndarray]):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainConfig:
    steps: int = 2000
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    hidden_layers: int = 8
    width: int = 128
    activation: str = "gaussian:0.05"
    scheme: str = "vi_forward"
    sigma_p: float = 0.15
    stats_method: str = "auto"
    distribution: str = "uniform"
    bias_policy: str = "zero"
    dtype: str = "float32"

    def __post_init__(self):
        if self.steps < 1 or not self.lr > 0:
            raise ValueError("steps and learning rate must be positive")

    @classmethod
    def audio_defaults(cls, **overrides) -> "TrainConfig":
        base = dict(hidden_layers=3, width=256, bias_policy="same_as_weights")
        base.update(overrides)
        return cls(**base)


@dataclass
class FitResult:
    final_metric: float
    metric_curve: List[float]
    loss_curve: List[float]
    mlp: Mlp
    diverged_at: Optional[int] = None
    initial_preact_var: List[float] = field(default_factory=list)
    prediction: Optional[np.ndarray] = field(default=None, repr=False)


def _metric(kind: str, pred, target) -> float:
    if kind == "image":
        return psnr(pred, target)
    if kind == "audio":
        return audio_mse(pred, target)
    return sign_iou(pred, target)


def _loss_to_metric(kind: str, loss: float) -> float:
    if kind == "image":
        return psnr_from_mse(loss)
    return loss


def psnr_from_mse(mse: float, peak: float = 2.0) -> float:
    return math.inf if mse == 0 else 10.0 * math.log10(peak * peak / mse)


def make_network(task_or_dims, config: TrainConfig) -> Mlp:
    if isinstance(task_or_dims, Task):
        dims = (task_or_dims.input_dim, task_or_dims.output_dim)
    else:
        dims = task_or_dims
    shape = NetworkShape.mlp(dims[0], config.hidden_layers, config.width, dims[1])
    plan = build_plan(
        shape,
        config.activation,
        config.sigma_p,
        config.scheme,
        config.stats_method,
        UNIFORM_INPUT,
        config.distribution,
        config.bias_policy,
    )
    return initialize(plan, seed=config.seed, dtype=np.dtype(config.dtype))


def fit(task: Task, config: TrainConfig, raise_on_divergence: bool = False) -> FitResult:
    """Train a fresh network on ``task``.

    ``metric_curve`` holds the training metric before each step (PSNR for
    images, MSE otherwise) and ``initial_preact_var`` the step-0 variance of
    every layer's pre-activations, pooled over units and inputs.
    ``final_metric`` is evaluated after the last step with the task's
    metric (PSNR / MSE / sign IoU on the dense grid).
    A non-finite loss stops training; the step is stored in ``diverged_at``
    (or raised as :class:`DivergenceError`) and the metric floor reported.
    """
    mlp = make_network(task, config)
    dtype = mlp.dtype
    X = task.coords.astype(dtype)
    Y = task.target.astype(dtype)
    opt = Adam(mlp.parameters(), config.lr, config.beta1, config.beta2, config.eps)
    losses, metrics = [], []
    diverged = None
    init_var = []
    for step in range(config.steps):
        out, trace = forward(mlp, X)
        if step == 0:
            init_var = [float(np.var(z, dtype=np.float64)) for z in trace.z]
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grad = mse_loss(out, Y)
        if not math.isfinite(loss):
            diverged = step
            if raise_on_divergence:
                raise DivergenceError(step, loss)
            break
        losses.append(loss)
        metrics.append(_loss_to_metric(task.kind, loss))
        grads = backward(mlp, trace, grad)
        opt.step(grads.parameters())

    if diverged is not None:
        return FitResult(METRIC_FLOOR[task.kind], metrics, losses, mlp, diverged, init_var)
    if task.kind == "sdf2d":
        pred = mlp(task.eval_coords.astype(dtype))
        final = sign_iou(pred, task.eval_target)
    else:
        pred = mlp(X)
        final = _metric(task.kind, pred, Y)
    if not math.isfinite(final) and not (task.kind == "image" and final == math.inf):
        return FitResult(METRIC_FLOOR[task.kind], metrics, losses, mlp, config.steps, init_var)
    return FitResult(float(final), metrics, losses, mlp, None, init_var, pred)


def best_random_normal(task: Task, config: TrainConfig, stds: Sequence[float]):
    """Best metric over a sweep of fixed weight stds; returns ``(std, FitResult)``."""
    best = None
    for std in stds:
        res = fit(task, replace(config, scheme=f"random_normal:{std}"))
        if best is None or _better(task.kind, res.final_metric, best[1].final_metric):
            best = (std, res)
    return best


def _better(kind, a, b) -> bool:
    return a > b if HIGHER_IS_BETTER[kind] else a < b


def task_heatmap(task: Task, sigma_a_values, sigma_p_values, config: TrainConfig) -> np.ndarray:
    """Final task metric for gaussian activations over a (sigma_a, sigma_p) grid.

    Rows follow ``sigma_a_values``, columns ``sigma_p_values``; each cell
    trains with its own seed derived from ``config.seed`` and its index.
    """
    sa = list(sigma_a_values)
    sp = list(sigma_p_values)
    out = np.zeros((len(sa), len(sp)))
    for i, a in enumerate(sa):
        for j, p in enumerate(sp):
            cfg = replace(
                config,
                activation=f"gaussian:{float(a)!r}",
                scheme="vi_forward",
                sigma_p=float(p),
                seed=derive_seed(config.seed, i, j),
            )
            out[i, j] = fit(task, cfg).final_metric
    return out


LINE_SEARCH_MULTIPLIERS = (0.5, 0.75, 1.0, 1.5, 2.0)


def line_search_sigma_p(task: Task, config: TrainConfig, multipliers=LINE_SEARCH_MULTIPLIERS):
    """Scale the backward-condition sigma_p and keep the best task metric.

    Returns ``(best_sigma_p, {sigma_p: metric})``.
    """
    base = solve_sigma_p(parse_activation(config.activation), stats_method=config.stats_method).sigma_p
    scores = {}
    for m in multipliers:
        s = base * m
        scores[s] = fit(task, replace(config, sigma_p=s)).final_metric
    pick = max if HIGHER_IS_BETTER[task.kind] else min
    return pick(scores, key=scores.get), scores


class INRRegressor(RegressorMixin, BaseEstimator):
    """Coordinate-network regressor with variance-informed initialization.

    ``X`` holds coordinates (ideally in [-1, 1]), ``y`` the signal values.
    Training is full-batch Adam on the squared error. ``sigma_p="solve"``
    takes sigma_p from the backward condition of the activation.

    Attributes: ``network_`` (:class:`~varinit.nn.Mlp`), ``loss_curve_``,
    ``sigma_p_``, ``n_features_in_``.
    """

    def __init__(
        self,
        activation="gaussian:0.05",
        sigma_p=0.15,
        scheme="vi_forward",
        hidden_layers=8,
        width=128,
        steps=2000,
        lr=1e-3,
        distribution="uniform",
        bias_policy="zero",
        stats_method="auto",
        dtype="float32",
        random_state=0,
    ):
        self.activation = activation
        self.sigma_p = sigma_p
        self.scheme = scheme
        self.hidden_layers = hidden_layers
        self.width = width
        self.steps = steps
        self.lr = lr
        self.distribution = distribution
        self.bias_policy = bias_policy
        self.stats_method = stats_method
        self.dtype = dtype
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        sigma_p = self.sigma_p
        if isinstance(sigma_p, str) and sigma_p == "solve":
            sigma_p = solve_sigma_p(parse_activation(self.activation), stats_method=self.stats_method).sigma_p
        return TrainConfig(
            steps=int(self.steps),
            lr=float(self.lr),
            seed=int(self.random_state or 0),
            hidden_layers=int(self.hidden_layers),
            width=int(self.width),
            activation=str(parse_activation(self.activation)),
            scheme=str(self.scheme),
            sigma_p=float(sigma_p),
            stats_method=self.stats_method,
            distribution=self.distribution,
            bias_policy=self.bias_policy,
            dtype=self.dtype,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, multi_output=True, y_numeric=True)
        self._y_1d = y.ndim == 1
        config = self._config()
        task = Task("audio" if X.shape[1] == 1 else "image", X, y.reshape(len(y), -1), (len(y),))
        res = fit(task, config, raise_on_divergence=True)
        self.network_ = res.mlp
        self.loss_curve_ = res.loss_curve
        self.sigma_p_ = config.sigma_p
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        out = self.network_(X.astype(self.network_.dtype)).astype(np.float64)
        return out[:, 0] if self._y_1d else out
