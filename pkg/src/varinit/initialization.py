"""Per-layer weight distributions derived from activation statistics.

Notation follows a dense network ``z_i = W_i x_i + b_i``, ``x_{i+1} = f(z_i)``
with widths ``[M_0, M_1, ..., M_n, out]``. Layer ``i`` maps ``M_i`` inputs
(fan-in) to ``M_{i+1}`` outputs (fan-out).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .activations import ActivationSpec, parse_activation
from .stats import ActivationStats, MomentPair, StatsMethod, compute_stats, normalize_method, second_moment

DEGENERATE_TOL = 1e-12

# x_0 ~ U[-1, 1] per coordinate
UNIFORM_INPUT = MomentPair(0.0, 1.0 / 3.0)
NORMAL_INPUT = MomentPair(0.0, 1.0)

SCHEMES = ("vi_forward", "vi_backward", "xavier", "kaiming_fan_in", "kaiming_fan_out", "random_normal")


class DegenerateActivationError(ArithmeticError):
    """Raised when the moments needed as a divisor vanish."""


@dataclass(frozen=True)
class NetworkShape:
    """Widths ``[M_0, M_1, ..., M_n, output_dim]``."""

    widths: tuple

    def __init__(self, widths: Sequence[int]):
        widths = tuple(int(w) for w in widths)
        if len(widths) < 2:
            raise ValueError("a network needs at least input and output widths")
        if any(w < 1 for w in widths):
            raise ValueError(f"widths must be positive, got {widths}")
        object.__setattr__(self, "widths", widths)

    @classmethod
    def mlp(cls, input_dim: int, hidden_layers: int, width: int, output_dim: int) -> "NetworkShape":
        return cls([input_dim] + [width] * hidden_layers + [output_dim])

    @property
    def n_layers(self) -> int:
        """Number of weight matrices."""
        return len(self.widths) - 1

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    @property
    def output_dim(self) -> int:
        return self.widths[-1]

    def fans(self, index: int):
        return self.widths[index], self.widths[index + 1]


@dataclass(frozen=True)
class LayerInit:
    layer_index: int
    fan_in: int
    fan_out: int
    weight_variance: float
    distribution: str = "uniform"
    bias_policy: str = "zero"

    def __post_init__(self):
        if not (self.weight_variance > 0 and math.isfinite(self.weight_variance)):
            raise ValueError(f"layer {self.layer_index}: weight variance must be positive, got {self.weight_variance}")
        if self.distribution not in ("uniform", "normal"):
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if self.bias_policy not in ("zero", "same_as_weights"):
            raise ValueError(f"unknown bias policy {self.bias_policy!r}")

    @property
    def bound(self) -> float:
        """``c`` such that U[-c, c] has the target variance."""
        return math.sqrt(3.0 * self.weight_variance)

    @property
    def std(self) -> float:
        return math.sqrt(self.weight_variance)

    def sample(self, rng: np.random.Generator, shape, dtype=np.float64) -> np.ndarray:
        if self.distribution == "uniform":
            c = self.bound
            return rng.uniform(-c, c, size=shape).astype(dtype, copy=False)
        return (self.std * rng.standard_normal(size=shape)).astype(dtype, copy=False)


@dataclass(frozen=True)
class InitPlan:
    shape: NetworkShape
    layers: tuple
    activation: ActivationSpec
    scheme: str
    sigma_p: float
    stats: Optional[ActivationStats] = field(default=None, compare=False)

    def __iter__(self):
        return iter(self.layers)

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, index) -> LayerInit:
        return self.layers[index]

    @property
    def hidden_weight_var_times_fanin(self) -> float:
        """``sigma^2(W_i) * M_i`` of the first hidden-to-hidden layer (or the last layer)."""
        layer = self.layers[1] if len(self.layers) > 1 else self.layers[0]
        return layer.weight_variance * layer.fan_in


def forward_weight_variance(sigma_p: float, fan_in: int, input_stats: MomentPair) -> float:
    """Weight variance that maps inputs with these moments to N(0, sigma_p^2).

    ``sigma^2(W) = sigma_p^2 / (M_i (mu^2 + sigma^2))``.
    """
    m2 = second_moment(input_stats)
    if not m2 > DEGENERATE_TOL:
        raise DegenerateActivationError("activation collapses to zero")
    return sigma_p * sigma_p / (fan_in * m2)


def backward_weight_variance(fan_out: int, deriv_stats: MomentPair) -> float:
    """Weight variance keeping gradient variance constant across the layer.

    ``sigma^2(W) = 1 / (M_{i+1} (mu^2(f') + sigma^2(f')))``.
    """
    m2 = second_moment(deriv_stats)
    if not m2 > DEGENERATE_TOL:
        raise DegenerateActivationError("gradient-dead activation")
    return 1.0 / (fan_out * m2)


def first_layer_weight_variance(sigma_p: float, input_dim: int, input_moments: MomentPair = UNIFORM_INPUT) -> float:
    """Forward rule applied to the raw inputs; ``3 sigma_p^2 / M_0`` for U[-1, 1]."""
    m2 = second_moment(input_moments)
    if not m2 > DEGENERATE_TOL:
        raise DegenerateActivationError("input distribution collapses to zero")
    return sigma_p * sigma_p / (input_dim * m2)


@dataclass(frozen=True)
class RandomNormal:
    """Baseline: one fixed weight std for every layer."""

    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError("random_normal std must be positive")

    def __str__(self):
        return "random_normal"


Scheme = Union[str, RandomNormal]


def parse_scheme(scheme) -> Scheme:
    if isinstance(scheme, RandomNormal):
        return scheme
    text = str(scheme).strip().lower()
    if text.startswith("random_normal"):
        _, _, raw = text.partition(":")
        return RandomNormal(float(raw) if raw else 1.0)
    if text not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    return text


def build_plan(
    shape: NetworkShape,
    spec,
    sigma_p: float = 1.0,
    scheme: Scheme = "vi_forward",
    stats_method: StatsMethod = "auto",
    input_moments: MomentPair = UNIFORM_INPUT,
    distribution: str = "uniform",
    bias_policy: str = "zero",
    stats: Optional[ActivationStats] = None,
    preactivation_input: bool = False,
) -> InitPlan:
    """Weight-distribution parameters for every layer of ``shape``.

    For the variance-informed schemes layer 0 uses the input moments and all
    later layers (including the final linear one) use the activation moments
    at ``sigma_p``, computed once. Xavier and Kaiming use their textbook
    forms on every layer, and ``RandomNormal`` uses a single std throughout.
    Pass ``stats`` to reuse precomputed moments. With
    ``preactivation_input`` the network input is taken to be a batch of
    N(0, sigma_p^2) pre-activations that is activated before layer 0, so
    layer 0 gets the hidden-layer rule as well.
    """
    if not isinstance(shape, NetworkShape):
        shape = NetworkShape(shape)
    spec = parse_activation(spec)
    scheme = parse_scheme(scheme)
    if isinstance(scheme, RandomNormal):
        distribution = "normal"
    if scheme in ("vi_forward", "vi_backward") and stats is None:
        stats = compute_stats(spec, sigma_p, normalize_method(stats_method))

    layers = []
    for i in range(shape.n_layers):
        fan_in, fan_out = shape.fans(i)
        if isinstance(scheme, RandomNormal):
            var = scheme.std**2
        elif scheme == "xavier":
            var = 2.0 / (fan_in + fan_out)
        elif scheme == "kaiming_fan_in":
            var = 2.0 / fan_in
        elif scheme == "kaiming_fan_out":
            var = 2.0 / fan_out
        elif i == 0 and not preactivation_input:
            var = first_layer_weight_variance(sigma_p, fan_in, input_moments)
        elif scheme == "vi_forward":
            var = forward_weight_variance(sigma_p, fan_in, stats.post)
        else:
            var = backward_weight_variance(fan_out, stats.deriv)
        layers.append(LayerInit(i, fan_in, fan_out, var, distribution, bias_policy))
    return InitPlan(shape, tuple(layers), spec, str(scheme), float(sigma_p), stats)


def gain(spec, sigma_p: float = 1.0, stats_method: StatsMethod = "auto") -> float:
    """``sqrt(sigma_p^2 / E[f(z)^2])`` for ``z ~ N(0, sigma_p^2)``."""
    stats = compute_stats(spec, sigma_p, stats_method)
    m2 = stats.post_second_moment
    if not m2 > DEGENERATE_TOL:
        raise DegenerateActivationError("activation collapses to zero")
    return math.sqrt(sigma_p * sigma_p / m2)


class VarianceInformedInitializer(BaseEstimator):
    """Estimator-style front end to :func:`build_plan`.

    ``fit(X)`` records the input dimension and, with
    ``input_moments="data"``, the empirical second moment of the
    coordinates; otherwise coordinates are assumed to lie in U[-1, 1]
    (``"uniform"``) or N(0, 1) (``"normal"``). ``y`` fixes the output width.
    Set ``sigma_p="solve"`` to take sigma_p from the backward condition.

    Attributes set by ``fit``: ``plan_``, ``stats_``, ``sigma_p_``, ``gain_``,
    ``n_features_in_``.
    """

    def __init__(
        self,
        activation="gaussian:0.05",
        sigma_p=1.0,
        scheme="vi_forward",
        hidden_layers=8,
        width=128,
        stats_method="auto",
        distribution="uniform",
        bias_policy="zero",
        input_moments="uniform",
    ):
        self.activation = activation
        self.sigma_p = sigma_p
        self.scheme = scheme
        self.hidden_layers = hidden_layers
        self.width = width
        self.stats_method = stats_method
        self.distribution = distribution
        self.bias_policy = bias_policy
        self.input_moments = input_moments

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.n_features_in_ = X.shape[1]
        if y is None:
            out = 1
        else:
            y = np.asarray(y)
            out = 1 if y.ndim == 1 else y.shape[1]
        if self.input_moments == "data":
            moments = MomentPair(0.0, float(np.mean(X * X)))
        elif self.input_moments == "normal":
            moments = NORMAL_INPUT
        elif self.input_moments == "uniform":
            moments = UNIFORM_INPUT
        else:
            moments = self.input_moments
        spec = parse_activation(self.activation)
        if isinstance(self.sigma_p, str) and self.sigma_p == "solve":
            from .solver import solve_sigma_p

            self.sigma_p_ = solve_sigma_p(spec, stats_method=self.stats_method).sigma_p
        else:
            self.sigma_p_ = float(self.sigma_p)
        shape = NetworkShape.mlp(self.n_features_in_, self.hidden_layers, self.width, out)
        self.plan_ = build_plan(
            shape,
            spec,
            self.sigma_p_,
            self.scheme,
            self.stats_method,
            moments,
            self.distribution,
            self.bias_policy,
        )
        self.stats_ = self.plan_.stats
        self.gain_ = math.sqrt(self.plan_.hidden_weight_var_times_fanin)
        return self

    def sample(self, seed: int = 0, dtype=np.float64):
        """Draw concrete parameters as an :class:`~varinit.nn.Mlp`."""
        check_is_fitted(self, "plan_")
        from .nn import initialize

        return initialize(self.plan_, seed=seed, dtype=dtype)
