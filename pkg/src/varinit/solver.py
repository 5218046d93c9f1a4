"""Choosing sigma_p from the backward-stability condition.

Keeping both the forward variance (pre-activations ~ N(0, sigma_p^2)) and the
gradient variance constant across a hidden layer requires

    sigma_p^2 * (M_{i+1} / M_i) * E[f'(z)^2] / E[f(z)^2] == 1,

with both expectations taken over ``z ~ N(0, sigma_p^2)``. The left-hand
side has no closed-form root in general, so it is scanned on a grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .activations import ActivationSpec, parse_activation
from .initialization import DEGENERATE_TOL, DegenerateActivationError
from .sampling import derive_seed
from .stats import MonteCarlo, StatsMethod, compute_stats, normalize_method

FLAT_TOL = 1.0


def smape(a, b):
    """``100 |a - b| / (|a| + |b|)`` in [0, 100]; non-finite input gives 100."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        denom = np.abs(a) + np.abs(b)
        out = np.where(denom > 0, 100.0 * np.abs(a - b) / np.where(denom > 0, denom, 1.0), 0.0)
        out = np.where(np.isfinite(a) & np.isfinite(b) & np.isfinite(out), out, 100.0)
    out = np.clip(out, 0.0, 100.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SigmaGrid:
    lo: float = 1e-3
    hi: float = 10.0
    n_points: int = 2000
    spacing: str = "log"

    def __post_init__(self):
        if not (self.lo > 0 and self.hi > self.lo):
            raise ValueError("grid needs 0 < lo < hi")
        if int(self.n_points) < 2:
            raise ValueError("grid needs at least 2 points")
        if self.spacing not in ("log", "linear"):
            raise ValueError(f"unknown spacing {self.spacing!r}")

    def values(self) -> np.ndarray:
        if self.spacing == "log":
            return np.geomspace(self.lo, self.hi, int(self.n_points))
        return np.linspace(self.lo, self.hi, int(self.n_points))

    def step_at(self, value: float) -> float:
        """Distance to the neighbouring grid point around ``value``."""
        if self.spacing == "log":
            ratio = (self.hi / self.lo) ** (1.0 / (int(self.n_points) - 1))
            return value * (ratio - 1.0)
        return (self.hi - self.lo) / (int(self.n_points) - 1)


@dataclass(frozen=True)
class BackwardConditionResult:
    sigma_p: float
    residual: float
    flat: bool
    at_boundary: bool = False
    lhs: float = float("nan")


def backward_lhs(spec, sigma_p: float, fan_ratio: float = 1.0, stats_method: StatsMethod = "auto") -> float:
    """``sigma_p^2 * fan_ratio * E[f'^2] / E[f^2]``; equals 1 when the condition holds."""
    stats = compute_stats(spec, sigma_p, stats_method)
    post = stats.post_second_moment
    if not post > DEGENERATE_TOL:
        raise DegenerateActivationError("activation collapses to zero")
    return sigma_p * sigma_p * fan_ratio * stats.deriv_second_moment / post


def backward_residual(spec, sigma_p: float, fan_ratio: float = 1.0, stats_method: StatsMethod = "auto") -> float:
    """SMAPE between the backward-condition left-hand side and 1."""
    return smape(backward_lhs(spec, sigma_p, fan_ratio, stats_method), 1.0)


def _point_method(method: StatsMethod, index: int) -> StatsMethod:
    if isinstance(method, MonteCarlo):
        return MonteCarlo(method.n_samples, derive_seed(method.seed, index))
    return method


def residual_curve(spec, grid: SigmaGrid, fan_ratio=1.0, stats_method: StatsMethod = "auto"):
    """Residual at every grid point (nan where the moments are degenerate)."""
    spec = parse_activation(spec)
    method = normalize_method(stats_method)
    sigmas = grid.values()
    out = np.full(sigmas.shape, np.nan)
    for k, s in enumerate(sigmas):
        try:
            out[k] = backward_residual(spec, float(s), fan_ratio, _point_method(method, k))
        except DegenerateActivationError:
            pass
    return sigmas, out


def solve_sigma_p(
    spec,
    grid: SigmaGrid = SigmaGrid(),
    fan_ratio: float = 1.0,
    stats_method: StatsMethod = "auto",
) -> BackwardConditionResult:
    """Grid point whose backward residual is smallest.

    Ties go to the smaller sigma_p. If the residual varies by less than
    ``FLAT_TOL`` SMAPE points over the whole grid the condition does not
    pin sigma_p down; the result is then flagged ``flat`` and reports the
    middle grid point. ``at_boundary`` marks a minimum on the grid edge,
    which means the residual is still falling beyond the searched range.
    Monte Carlo statistics use a seed derived from ``(seed, point index)``.
    """
    sigmas, res = residual_curve(spec, grid, fan_ratio, stats_method)
    ok = np.isfinite(res)
    if not ok.any():
        raise DegenerateActivationError(f"{spec}: every grid point is degenerate")
    spread = np.nanmax(res) - np.nanmin(res)
    if spread < FLAT_TOL:
        k = len(sigmas) // 2
        flat = True
    else:
        k = int(np.nanargmin(res))
        flat = False
    s = float(sigmas[k])
    valid = np.flatnonzero(ok)
    return BackwardConditionResult(
        sigma_p=s,
        residual=float(res[k]) if ok[k] else float(np.nanmin(res)),
        flat=flat,
        at_boundary=(not flat) and k in (valid[0], valid[-1]),
        lhs=backward_lhs(spec, s, fan_ratio, _point_method(normalize_method(stats_method), k)) if ok[k] else float("nan"),
    )


def heatmap(sigma_a_values, sigma_p_values, stats_method: StatsMethod = "auto", fan_ratio: float = 1.0) -> np.ndarray:
    """``1 - residual / 100`` for gaussian activations.

    Rows follow ``sigma_a_values`` and columns ``sigma_p_values``.
    """
    sa = np.asarray(sigma_a_values, dtype=np.float64)
    sp = np.asarray(sigma_p_values, dtype=np.float64)
    if sa.size == 0 or sp.size == 0:
        raise ValueError("heatmap grids must be non-empty")
    method = normalize_method(stats_method)
    out = np.zeros((sa.size, sp.size))
    for i, a in enumerate(sa):
        spec = ActivationSpec("gaussian", float(a))
        for j, p in enumerate(sp):
            try:
                r = backward_residual(spec, float(p), fan_ratio, _point_method(method, i * sp.size + j))
            except DegenerateActivationError:
                continue
            out[i, j] = 1.0 - r / 100.0
    return out


def ridge_slope(matrix, row_values, col_values) -> float:
    """Least-squares slope ``k`` of ``row = k * col`` through the column argmaxes."""
    matrix = np.asarray(matrix)
    rows = np.asarray(row_values, dtype=np.float64)[np.argmax(matrix, axis=0)]
    cols = np.asarray(col_values, dtype=np.float64)
    return float(np.dot(rows, cols) / np.dot(cols, cols))


def match_weight_variance(
    spec,
    target_var_times_fanin: float,
    grid: SigmaGrid = SigmaGrid(0.05, 2.0, 2000, "log"),
    stats_method: StatsMethod = "auto",
):
    """Find sigma_p whose forward weight variance equals ``target / M``.

    This is how e.g. Xavier (``1 / M``) or Kaiming (``2 / M``) read as a
    particular sigma_p for a given activation. Returns ``(sigma_p,
    achieved_var_times_fanin)`` for the grid point with smallest relative
    mismatch.
    """
    spec = parse_activation(spec)
    method = normalize_method(stats_method)
    sigmas = grid.values()
    implied = np.full(sigmas.shape, np.nan)
    for k, s in enumerate(sigmas):
        m2 = compute_stats(spec, float(s), _point_method(method, k)).post_second_moment
        if m2 > DEGENERATE_TOL:
            implied[k] = s * s / m2
    err = np.abs(implied - target_var_times_fanin) / target_var_times_fanin
    k = int(np.nanargmin(err))
    return float(sigmas[k]), float(implied[k])
