"""Controlled variance-propagation experiments.

The bench network takes a batch of pre-activations ``z_0 ~ N(0, sigma_p^2)``,
applies the activation, and pushes the result through ``layers`` square
``width x width`` linear maps, each followed by the activation except the
last. ``E_f`` is the SMAPE between the variance of the final
pre-activations and ``sigma_p^2``. For ``E_b``, unit-variance normal noise
is used as ``dL/dz_L`` and propagated back to ``dL/dz_0``; ``E_b`` is the
SMAPE between its variance and 1.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .activations import parse_activation
from .initialization import build_plan, parse_scheme
from .sampling import derive_seed, standard_normal, weight_rng
from .solver import smape
from .stats import gaussian_analytic_stats, mc_stats

MIN_CLT_WIDTH = 100


@dataclass
class VarianceReport:
    scheme: str
    activation: str
    sigma_p: float
    E_f: float
    E_b: float
    forward_var: List[float] = field(default_factory=list)
    backward_var: List[float] = field(default_factory=list)
    forward_skew: List[float] = field(default_factory=list)
    forward_blowup_layer: Optional[int] = None
    backward_blowup_layer: Optional[int] = None
    seed: int = 0
    weight_var_times_fanin: float = float("nan")


def _unbiased_var(a: np.ndarray) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        v = float(np.var(a, ddof=1))
    return v


def _skewness(a: np.ndarray) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        d = a - a.mean()
        sd = np.sqrt(np.mean(d * d))
        if not (np.isfinite(sd) and sd > 0):
            return float("nan")
        u = d / sd
        return float(np.mean(u * u * u))


def run_variance_bench(
    spec,
    scheme="vi_forward",
    sigma_p: float = 1.0,
    layers: int = 100,
    width: int = 1000,
    batch: int = 4096,
    seed: int = 0,
    stats_method="auto",
    distribution: str = "uniform",
    plan=None,
) -> VarianceReport:
    """Run one forward/backward variance probe and summarise it.

    Overflow is not an error: the affected error saturates at 100 and the
    first layer whose variance is non-finite is recorded.
    """
    spec = parse_activation(spec)
    scheme = parse_scheme(scheme)
    if width < MIN_CLT_WIDTH:
        warnings.warn(f"width {width} is small for the Gaussian-limit assumption", stacklevel=2)
    if plan is None:
        plan = build_plan(
            [width] * (layers + 1),
            spec,
            sigma_p,
            scheme,
            stats_method,
            distribution=distribution,
            preactivation_input=True,
        )
    rng = weight_rng(derive_seed(seed, 1))
    z = sigma_p * standard_normal(batch * width, derive_seed(seed, 0)).reshape(batch, width)

    weights, zs = [], [z]
    fwd, skew, f_blow = [], [], None
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        for i, layer in enumerate(plan):
            w = layer.sample(rng, (layer.fan_out, layer.fan_in))
            weights.append(w)
            z = spec(zs[-1]) @ w.T if f_blow is None else np.full((batch, layer.fan_out), np.inf)
            v = _unbiased_var(z)
            fwd.append(v)
            skew.append(_skewness(z) if np.isfinite(v) else float("nan"))
            if f_blow is None and not np.isfinite(v):
                f_blow = i
            zs.append(z)

        g = standard_normal(batch * width, derive_seed(seed, 2)).reshape(batch, width)
        bwd, b_blow = [_unbiased_var(g)], None
        for i in range(len(weights) - 1, -1, -1):
            g = (g @ weights[i]) * spec.derivative(zs[i])
            v = _unbiased_var(g)
            bwd.append(v)
            if b_blow is None and not np.isfinite(v):
                b_blow = i
    bwd.reverse()

    return VarianceReport(
        scheme=str(scheme),
        activation=str(spec),
        sigma_p=float(sigma_p),
        E_f=100.0 if f_blow is not None else smape(fwd[-1], sigma_p * sigma_p),
        E_b=100.0 if b_blow is not None else smape(bwd[0], 1.0),
        forward_var=fwd,
        backward_var=bwd,
        forward_skew=skew,
        forward_blowup_layer=f_blow,
        backward_blowup_layer=b_blow,
        seed=seed,
        weight_var_times_fanin=plan.hidden_weight_var_times_fanin,
    )


@dataclass
class BenchSummary:
    scheme: str
    activation: str
    sigma_p: float
    E_f: float
    E_b: float
    reports: List[VarianceReport]
    weight_var_times_fanin: float


def bench_median(spec, scheme="vi_forward", sigma_p=1.0, seeds: Sequence[int] = range(5), **kwargs) -> BenchSummary:
    """Median E_f and E_b over independent seeds."""
    reports = [run_variance_bench(spec, scheme, sigma_p, seed=s, **kwargs) for s in seeds]
    return BenchSummary(
        scheme=reports[0].scheme,
        activation=reports[0].activation,
        sigma_p=float(sigma_p),
        E_f=float(np.median([r.E_f for r in reports])),
        E_b=float(np.median([r.E_b for r in reports])),
        reports=reports,
        weight_var_times_fanin=reports[0].weight_var_times_fanin,
    )


def fixed_variance_plan(var_times_fanin: float, layers: int, width: int, spec, sigma_p, distribution="uniform"):
    """Bench plan with a literal ``var_times_fanin / width`` on every layer.

    Used for competitor values quoted as a number, e.g. ``1/M`` for tanh.
    """
    plan = build_plan([width] * (layers + 1), spec, sigma_p, "xavier", distribution=distribution, preactivation_input=True)
    from dataclasses import replace

    rows = tuple(replace(layer, weight_variance=var_times_fanin / layer.fan_in) for layer in plan)
    return replace(plan, layers=rows, scheme=f"fixed:{var_times_fanin:g}")


@dataclass
class AblationRow:
    n_samples: int
    E_W: float
    wall_time: float
    E_f: float
    E_b: float


def run_mc_ablation(
    sigma_a: float = 0.05,
    sigma_p: float = 0.078,
    sample_sizes: Sequence[int] = (1_000_000, 100_000, 10_000, 1_000),
    seeds: Sequence[int] = range(5),
    bench: Optional[dict] = None,
) -> List[AblationRow]:
    """Error of the Monte Carlo weight variance against the closed form.

    ``E_W = |var_MC - var_GT| / var_GT`` for the gaussian activation, the
    median over ``seeds``; ``wall_time`` is the median time of one MC
    estimate in seconds. With ``bench`` (keyword arguments for
    :func:`run_variance_bench`, e.g. ``{"layers": 100, "width": 1000}``)
    each row also carries E_f and E_b of the MC-derived plan, using the
    first seed; otherwise those are nan.
    """
    spec = parse_activation(f"gaussian:{sigma_a}")
    truth = gaussian_analytic_stats(sigma_a, sigma_p)
    gt_var = sigma_p**2 / truth.post_second_moment
    rows = []
    for n in sample_sizes:
        errs, times, first = [], [], None
        for s in seeds:
            t0 = time.perf_counter()
            st = mc_stats(spec, sigma_p, int(n), int(s))
            times.append(time.perf_counter() - t0)
            errs.append(abs(sigma_p**2 / st.post_second_moment - gt_var) / gt_var)
            if first is None:
                first = st
        e_f = e_b = float("nan")
        if bench is not None:
            kwargs = dict(bench)
            layers, width = kwargs.pop("layers", 100), kwargs.pop("width", 1000)
            plan = build_plan(
                [width] * (layers + 1), spec, sigma_p, "vi_forward", stats=first, preactivation_input=True
            )
            rep = run_variance_bench(spec, "vi_forward", sigma_p, layers=layers, width=width, plan=plan, **kwargs)
            e_f, e_b = rep.E_f, rep.E_b
        rows.append(AblationRow(int(n), float(np.median(errs)), float(np.median(times)), e_f, e_b))
    return rows

