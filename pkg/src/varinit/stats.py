"""Moments of an activation under zero-mean Gaussian pre-activations.

For ``z ~ N(0, sigma_p^2)`` we need the mean and variance of ``f(z)`` and of
``f'(z)``. Three routes are provided:

* ``"analytic"``: closed forms (identity, relu, sine, gaussian).
* ``"quadrature"``: composite Gauss-Legendre integration, any activation.
* :class:`MonteCarlo`: sample moments over seeded normal draws.

``"auto"`` picks ``analytic`` when a closed form exists and falls back to
``quadrature`` otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np

from .activations import ActivationSpec, parse_activation
from .sampling import standard_normal

ANALYTIC_KINDS = frozenset({"identity", "relu", "sine", "gaussian"})

# Gauss-Hermite nodes for the Gaussian activation's derivative moments
GH_NODES = 96
# Gauss-Legendre order per panel and the half-width of the integration
# range in units of sigma_p
GL_ORDER = 16
TAIL = 10.0


@dataclass(frozen=True)
class MomentPair:
    mean: float
    variance: float

    def __post_init__(self):
        if self.variance < 0:
            if self.variance > -1e-15 * max(1.0, self.mean * self.mean):
                object.__setattr__(self, "variance", 0.0)
            else:
                raise ValueError(f"negative variance {self.variance}")

    @property
    def second_moment(self) -> float:
        return second_moment(self)


def second_moment(pair: MomentPair) -> float:
    """``mean**2 + variance``, i.e. E[X^2]."""
    return pair.mean * pair.mean + pair.variance


@dataclass(frozen=True)
class MonteCarlo:
    n_samples: int = 1_000_000
    seed: int = 0

    def __post_init__(self):
        if int(self.n_samples) < 2:
            raise ValueError("Monte Carlo needs at least 2 samples")
        object.__setattr__(self, "n_samples", int(self.n_samples))
        object.__setattr__(self, "seed", int(self.seed))

    def __str__(self) -> str:
        return "monte_carlo"


StatsMethod = Union[str, MonteCarlo]


@dataclass(frozen=True)
class ActivationStats:
    """Moments of ``f(z)`` (``post``) and ``f'(z)`` (``deriv``) for ``z ~ N(0, sigma_p^2)``."""

    post: MomentPair
    deriv: MomentPair
    sigma_p: float
    method: StatsMethod

    @property
    def post_second_moment(self) -> float:
        return second_moment(self.post)

    @property
    def deriv_second_moment(self) -> float:
        return second_moment(self.deriv)

    @property
    def method_name(self) -> str:
        return str(self.method)

    @property
    def n_samples(self) -> int:
        return self.method.n_samples if isinstance(self.method, MonteCarlo) else 0


def normalize_method(method: StatsMethod) -> StatsMethod:
    if isinstance(method, MonteCarlo):
        return method
    name = str(method).lower()
    if name in ("mc", "monte_carlo", "montecarlo"):
        return MonteCarlo()
    if name not in ("analytic", "quadrature", "auto"):
        raise ValueError(f"unknown stats method {method!r}")
    return name


def mc_stats(spec: ActivationSpec, sigma_p: float, n_samples: int = 1_000_000, seed: int = 0) -> ActivationStats:
    """Sample moments of ``f(z)`` and ``f'(z)`` over ``n_samples`` draws.

    Variances use the unbiased ``n - 1`` estimator. The draws are
    ``sigma_p * standard_normal(n_samples, seed)`` so the result is a pure
    function of its arguments.
    """
    spec = parse_activation(spec)
    _check_sigma(sigma_p)
    method = MonteCarlo(n_samples, seed)
    z = sigma_p * standard_normal(method.n_samples, method.seed)
    fz = spec(z)
    dz = spec.derivative(z)
    return ActivationStats(
        post=MomentPair(float(fz.mean()), float(fz.var(ddof=1))),
        deriv=MomentPair(float(dz.mean()), float(dz.var(ddof=1))),
        sigma_p=float(sigma_p),
        method=method,
    )


def gaussian_analytic_stats(sigma_a: float, sigma_p: float) -> ActivationStats:
    """Exact moments for ``f(x) = exp(-x^2 / (2 sigma_a^2))``.

    With ``r = sigma_a / sigma_p``, ``E[f] = r / sqrt(r^2 + 1)`` and
    ``E[f^2] = r / sqrt(r^2 + 2)``. The derivative moments are integrated
    with Gauss-Hermite nodes placed on the Gaussian that results from
    folding the activation's envelope into the sampling density, which is
    exact for the polynomial factor that remains.
    """
    _check_sigma(sigma_a)
    _check_sigma(sigma_p)
    r = sigma_a / sigma_p
    mean = r / math.sqrt(r * r + 1.0)
    var = r / math.sqrt(r * r + 2.0) - r * r / (r * r + 1.0)

    # f'(z) = -(z / sigma_a^2) exp(-z^2 / (2 sigma_a^2)). Folding exp(-k z^2 / (2 sigma_a^2))
    # into N(0, sigma_p^2) gives (s / sigma_p) N(0, s^2), 1/s^2 = 1/sigma_p^2 + k/sigma_a^2.
    def folded(k, poly):
        s = 1.0 / math.sqrt(1.0 / sigma_p**2 + k / sigma_a**2)
        nodes, weights = _hermite(GH_NODES)
        return (s / sigma_p) * float(np.dot(weights, poly(s * nodes)))

    d_mean = folded(1.0, lambda z: -z / sigma_a**2)
    d_second = folded(2.0, lambda z: z * z / sigma_a**4)
    return ActivationStats(
        post=MomentPair(mean, max(var, 0.0)),
        deriv=MomentPair(d_mean, max(d_second - d_mean * d_mean, 0.0)),
        sigma_p=float(sigma_p),
        method="analytic",
    )


def analytic_stats(spec: ActivationSpec, sigma_p: float) -> ActivationStats:
    """Closed-form moments; raises ``ValueError`` for kinds without one."""
    spec = parse_activation(spec)
    _check_sigma(sigma_p)
    s = float(sigma_p)
    if spec.kind == "gaussian":
        return gaussian_analytic_stats(spec.param, s)
    if spec.kind == "identity":
        post, deriv = MomentPair(0.0, s * s), MomentPair(1.0, 0.0)
    elif spec.kind == "relu":
        m = s / math.sqrt(2.0 * math.pi)
        post, deriv = MomentPair(m, s * s / 2.0 - m * m), MomentPair(0.5, 0.25)
    elif spec.kind == "sine":
        a2s2 = (spec.param * s) ** 2
        # E[sin^2(a z)] = (1 - e^{-2 a^2 s^2}) / 2, E[cos(a z)] = e^{-a^2 s^2 / 2}
        post = MomentPair(0.0, -0.5 * math.expm1(-2.0 * a2s2))
        d_mean = spec.param * math.exp(-0.5 * a2s2)
        d_second = spec.param**2 * 0.5 * (1.0 + math.exp(-2.0 * a2s2))
        deriv = MomentPair(d_mean, max(d_second - d_mean * d_mean, 0.0))
    else:
        raise ValueError(f"no closed-form moments for {spec.kind}; use 'quadrature' or Monte Carlo")
    return ActivationStats(post=post, deriv=deriv, sigma_p=s, method="analytic")


def quadrature_stats(spec: ActivationSpec, sigma_p: float) -> ActivationStats:
    """Moments by composite Gauss-Legendre integration against N(0, sigma_p^2).

    Panels are symmetric about 0 (so the relu kink sits on a panel edge) and
    no wider than half of ``min(sigma_p, spec.feature_scale)``.
    """
    spec = parse_activation(spec)
    _check_sigma(sigma_p)
    s = float(sigma_p)
    nodes, weights = _legendre_grid(s, spec.feature_scale, spec.envelope)
    dens = weights * np.exp(-0.5 * (nodes / s) ** 2) / (s * math.sqrt(2.0 * math.pi))
    fz = spec(nodes)
    dz = spec.derivative(nodes)
    e1, e2 = float(dens @ fz), float(dens @ (fz * fz))
    d1, d2 = float(dens @ dz), float(dens @ (dz * dz))
    return ActivationStats(
        post=MomentPair(e1, max(e2 - e1 * e1, 0.0)),
        deriv=MomentPair(d1, max(d2 - d1 * d1, 0.0)),
        sigma_p=s,
        method="quadrature",
    )


def compute_stats(spec: ActivationSpec, sigma_p: float, method: StatsMethod = "auto") -> ActivationStats:
    spec = parse_activation(spec)
    method = normalize_method(method)
    if isinstance(method, MonteCarlo):
        return mc_stats(spec, sigma_p, method.n_samples, method.seed)
    if method == "analytic" or (method == "auto" and spec.kind in ANALYTIC_KINDS):
        return analytic_stats(spec, sigma_p)
    return quadrature_stats(spec, sigma_p)


def _check_sigma(value):
    if not (np.isfinite(value) and value > 0):
        raise ValueError(f"standard deviation must be positive and finite, got {value!r}")


@lru_cache(maxsize=8)
def _hermite(n: int):
    # probabilists' Hermite: integrates against the standard normal density
    x, w = np.polynomial.hermite_e.hermegauss(n)
    return x, w / math.sqrt(2.0 * math.pi)


@lru_cache(maxsize=8)
def _legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


def _legendre_grid(sigma_p: float, feature: float, envelope: float):
    half = min(TAIL * sigma_p, envelope)
    width = 0.5 * min(sigma_p, feature)
    n_panels = max(4, int(math.ceil(half / width)))
    edges = np.linspace(0.0, half, n_panels + 1)
    x, w = _legendre(GL_ORDER)
    mid = 0.5 * (edges[1:] + edges[:-1])
    rad = 0.5 * (edges[1:] - edges[:-1])
    pos = (mid[:, None] + rad[:, None] * x[None, :]).ravel()
    wts = (rad[:, None] * w[None, :]).ravel()
    return np.concatenate([-pos[::-1], pos]), np.concatenate([wts[::-1], wts])
