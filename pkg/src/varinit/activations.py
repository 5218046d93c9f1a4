"""Activation functions with exact derivatives.

Every activation is described by an immutable :class:`ActivationSpec`
(kind plus one scalar parameter). Evaluation is vectorised over numpy
arrays and total on finite inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

KINDS = (
    "identity",
    "relu",
    "tanh",
    "sigmoid",
    "sine",
    "gaussian",
    "sinc",
    "gabor_wavelet",
)
PARAMETERIZED = frozenset({"sine", "gaussian", "sinc", "gabor_wavelet"})

# used when the string form omits the parameter
DEFAULT_PARAMS = {"sine": 30.0, "gaussian": 0.05, "sinc": 1.0, "gabor_wavelet": 1.0}
ALIASES = {"wavelet": "gabor_wavelet", "linear": "identity", "siren": "sine"}

# |a x| below this uses truncated Taylor series for sinc
_SINC_SERIES = 1e-3


@dataclass(frozen=True)
class ActivationSpec:
    """An activation function ``f`` and its scalar parameter.

    ``param`` is the frequency ``a`` for ``sine`` (``sin(a x)``), the width
    ``sigma_a`` for ``gaussian`` (``exp(-x^2 / (2 sigma_a^2))``), the scale ``a``
    for ``sinc`` (``sin(a x) / (a x)``) and for ``gabor_wavelet``
    (``cos(a x) exp(-(a x)^2)``). It is ignored for the other kinds.
    """

    kind: str
    param: float = 0.0

    def __post_init__(self):
        kind = ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        param = float(self.param)
        if kind in PARAMETERIZED:
            if not np.isfinite(param) or param <= 0:
                raise ValueError(f"{kind} needs a positive finite parameter, got {self.param!r}")
        else:
            param = 0.0
        object.__setattr__(self, "param", param)

    @classmethod
    def parse(cls, text: str) -> "ActivationSpec":
        """Parse ``kind[:param]``, e.g. ``gaussian:0.05`` or ``tanh``."""
        kind, sep, raw = text.strip().partition(":")
        kind = ALIASES.get(kind.strip().lower(), kind.strip().lower())
        if sep:
            try:
                param = float(raw)
            except ValueError:
                raise ValueError(f"bad activation parameter in {text!r}") from None
        else:
            param = DEFAULT_PARAMS.get(kind, 0.0)
        return cls(kind, param)

    def __str__(self) -> str:
        if self.kind in PARAMETERIZED:
            return f"{self.kind}:{self.param:g}"
        return self.kind

    @property
    def is_odd(self) -> bool:
        return self.kind in ("identity", "tanh", "sine")

    @property
    def is_even(self) -> bool:
        return self.kind in ("gaussian", "sinc", "gabor_wavelet")

    @property
    def feature_scale(self) -> float:
        """Length scale of the finest structure in ``f`` (used by quadrature)."""
        if self.kind == "gaussian":
            return self.param
        if self.kind in ("sine", "sinc", "gabor_wavelet"):
            return 1.0 / self.param
        return 1.0

    @property
    def envelope(self) -> float:
        """Half-width beyond which ``f**2`` and ``f'**2`` are negligible, or inf."""
        if self.kind == "gaussian":
            return 10.0 * self.param
        if self.kind == "gabor_wavelet":
            return 7.0 / self.param
        return np.inf

    def __call__(self, x):
        return evaluate(self, x)

    def derivative(self, x, fx=None):
        """``f'(x)``; ``fx = f(x)``, when available, lets some kinds skip work."""
        if fx is not None:
            if self.kind == "gaussian":
                return (x * (-1.0 / (self.param * self.param))) * fx
            if self.kind == "tanh":
                return 1.0 - fx * fx
            if self.kind == "sigmoid":
                return fx * (1.0 - fx)
        return evaluate_deriv(self, x)


def evaluate(spec: ActivationSpec, x):
    """Apply ``f`` elementwise. Accepts scalars or arrays."""
    x, scalar = _as_float(x)
    kind, a = spec.kind, spec.param
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        if kind == "identity":
            out = x * 1.0
        elif kind == "relu":
            out = np.maximum(x, 0.0)
        elif kind == "tanh":
            out = np.tanh(x)
        elif kind == "sigmoid":
            out = expit(x)
        elif kind == "sine":
            out = np.sin(a * x)
        elif kind == "gaussian":
            r = x / a
            out = _envelope(0.5 * r * r)
        elif kind == "sinc":
            u = a * x
            out = np.sin(u) / u
            small = np.abs(u) < _SINC_SERIES
            if small.any():
                us = u[small] ** 2
                out[small] = 1.0 - us / 6.0 + us * us / 120.0
        else:  # gabor_wavelet
            u = a * x
            out = np.cos(u) * _envelope(u * u)
    return _finite(out, scalar, kind)


def evaluate_deriv(spec: ActivationSpec, x):
    """Analytic ``f'`` elementwise; relu'(0) = 0 and sinc'(0) = 0."""
    x, scalar = _as_float(x)
    kind, a = spec.kind, spec.param
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        if kind == "identity":
            out = np.ones_like(x)
        elif kind == "relu":
            out = (x > 0).astype(x.dtype)
        elif kind == "tanh":
            t = np.tanh(x)
            out = 1.0 - t * t
        elif kind == "sigmoid":
            s = expit(x)
            out = s * (1.0 - s)
        elif kind == "sine":
            out = a * np.cos(a * x)
        elif kind == "gaussian":
            r = x / a
            g = _envelope(0.5 * r * r)
            out = np.where(g == 0.0, 0.0, -(r / a) * g)
        elif kind == "sinc":
            u = a * x
            out = (np.cos(u) - np.sin(u) / u) / u
            small = np.abs(u) < _SINC_SERIES
            if small.any():
                us = u[small]
                out[small] = -us / 3.0 + us**3 / 30.0
            out *= a
        else:  # gabor_wavelet
            u = a * x
            g = _envelope(u * u)
            out = np.where(g == 0.0, 0.0, -a * (np.sin(u) + 2.0 * u * np.cos(u)) * g)
    return _finite(out, scalar, kind)


def _envelope(q):
    """``exp(-q)`` for a fresh array ``q >= 0``, flushed to 0 below sqrt(tiny).

    Subnormal floats are extremely slow on common CPUs; the cut keeps both
    the value and any product of two such values in the normal range.
    """
    q = np.asarray(q)
    cut = -0.5 * np.log(np.finfo(q.dtype).tiny)
    np.copyto(q, np.inf, where=q > cut)
    return np.exp(-q)


def _as_float(x):
    x = np.asarray(x)
    if x.dtype.kind != "f":
        x = x.astype(np.float64)
    return (x.reshape(1), True) if x.ndim == 0 else (x, False)


_SCALED = frozenset({"sine", "sinc", "gabor_wavelet"})


def _finite(out, scalar, kind):
    # a*x can overflow for huge finite inputs; the bounded kinds then read as 0
    if kind in _SCALED and not np.all(np.isfinite(out)):
        out = np.where(np.isfinite(out), out, 0.0)
    return out[0] if scalar else out


def parse_activation(value) -> ActivationSpec:
    if isinstance(value, ActivationSpec):
        return value
    return ActivationSpec.parse(str(value))
