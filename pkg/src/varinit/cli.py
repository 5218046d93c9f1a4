"""Command-line entry point: ``varinit <subcommand> [options]``.

Every subcommand writes CSV files (plus PGM/PPM/WAV where it makes sense)
into ``--out-dir`` (default: ``$VARINIT_OUT`` or the current directory).
Options can also come from a plain-text ``key = value`` file given with
``--config``; flags on the command line win. Exit status is 0 on success,
1 on usage errors and 2 on numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .activations import PARAMETERIZED, parse_activation
from .codecs import from_unit_range, read_netpbm, read_wav, write_netpbm, write_wav
from .initialization import NetworkShape, build_plan
from .nn import save_checkpoint
from .solver import SigmaGrid, heatmap, ridge_slope, solve_sigma_p
from .stats import MonteCarlo, compute_stats, normalize_method
from .testbench import bench_median, fixed_variance_plan, run_mc_ablation
from .trainer import (
    TrainConfig,
    audio_task,
    fit,
    image_task,
    sdf2d_task,
    synthetic_audio,
    synthetic_image,
    task_heatmap,
)

OUT_ENV = "VARINIT_OUT"

CLASSIC = ("tanh", "sigmoid", "relu")
INR = ("sine:30", "gaussian:0.05", "sinc:1", "gabor_wavelet:1")

PRESETS = {
    "table1": {"activation": ",".join(CLASSIC)},
    "table2": {"activation": ",".join(CLASSIC)},
    "table3": {"activation": ",".join(INR)},
    "table4": {"sigma_a": "0.05", "sigma_p": "0.078", "samples": "1000000,100000,10000,1000"},
    "fig5a": {"sa_values": "0.01:0.5:50", "sp_values": "0.02:0.75:50"},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


# ---- option value parsers ------------------------------------------------


def _floats(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text):
    try:
        return [int(float(v)) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _grid(text):
    """``lo:hi:n`` (evenly spaced) or a comma-separated list."""
    text = str(text)
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError(f"expected lo:hi:n, got {text!r}")
        try:
            lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"expected lo:hi:n, got {text!r}") from exc
        if n < 1:
            raise argparse.ArgumentTypeError("grid needs at least one point")
        return list(np.linspace(lo, hi, n))
    return _floats(text)


def _sigma_p(text):
    if str(text).strip().lower() == "solve":
        return "solve"
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"sigma_p must be a number or 'solve', got {text!r}") from exc
    if not value > 0:
        raise argparse.ArgumentTypeError("sigma_p must be positive")
    return value


def _activations(text):
    try:
        return [parse_activation(v.strip()) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


# ---- output helpers --------------------------------------------------------


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            out.writerow([_fmt(v) for v in row])
    return path


def matrix_to_pgm(path: Path, matrix) -> Path:
    """Min-max scale to 8 bits; rows top to bottom, non-finite cells black."""
    m = np.asarray(matrix, dtype=np.float64)
    ok = np.isfinite(m)
    img = np.zeros(m.shape)
    if ok.any():
        lo, hi = m[ok].min(), m[ok].max()
        img[ok] = (m[ok] - lo) / (hi - lo) if hi > lo else 1.0
    return write_netpbm(path, np.rint(img * 255).astype(np.uint8))


def _method(args):
    name = args.stats_method
    if name == "mc":
        return MonteCarlo(args.samples, args.seed)
    return normalize_method(name)


def _act_fields(spec):
    return spec.kind, spec.param if spec.kind in PARAMETERIZED else ""


# ---- subcommands -------------------------------------------------------------


def cmd_stats(args):
    method = _method(args)
    rows = []
    for spec in args.activation:
        for s in args.sigma_p:
            st = compute_stats(spec, s, method)
            rows.append(
                [*_act_fields(spec), s, st.method_name, st.n_samples, st.post.mean, st.post.variance, st.deriv.mean, st.deriv.variance]
            )
    header = ["kind", "param", "sigma_p", "method", "n", "post_mean", "post_var", "deriv_mean", "deriv_var"]
    return [write_csv(args.out_dir / "stats.csv", header, rows)]


def _resolve_sigma(spec, sigma_p, args):
    if sigma_p == "solve":
        return solve_sigma_p(spec, _solver_grid(args), stats_method=_method(args)).sigma_p
    return sigma_p


def _solver_grid(args):
    return SigmaGrid(args.grid_lo, args.grid_hi, args.grid_points, args.spacing)


def cmd_init_table(args):
    method = _method(args)
    shape = NetworkShape.mlp(2, 2, args.width, 1)
    rows = []
    for spec in args.activation:
        for scheme in args.scheme:
            s = _resolve_sigma(spec, args.sigma_p, args)
            plan = build_plan(shape, spec, s, scheme, method)
            rows.append([*_act_fields(spec), s, scheme, plan.hidden_weight_var_times_fanin])
    header = ["activation", "param", "sigma_p", "scheme", "hidden_weight_var_times_fanin"]
    return [write_csv(args.out_dir / "init_table.csv", header, rows)]


def cmd_solve(args):
    grid = _solver_grid(args)
    rows = []
    for spec in args.activation:
        r = solve_sigma_p(spec, grid, args.fan_ratio, _method(args))
        rows.append([*_act_fields(spec), r.sigma_p, r.lhs, r.residual, r.flat, r.at_boundary, grid.step_at(r.sigma_p)])
    header = ["activation", "param", "sigma_p", "lhs", "residual", "flat", "at_boundary", "grid_step"]
    return [write_csv(args.out_dir / "solve_sigma_p.csv", header, rows)]


def cmd_heatmap(args):
    m = heatmap(args.sa_values, args.sp_values, _method(args), args.fan_ratio)
    slope = ridge_slope(m, args.sa_values, args.sp_values)
    cells = [[a, p, m[i, j]] for i, a in enumerate(args.sa_values) for j, p in enumerate(args.sp_values)]
    return [
        write_csv(args.out_dir / "heatmap.csv", ["sigma_a", "sigma_p", "score"], cells),
        matrix_to_pgm(args.out_dir / "heatmap.pgm", m),
        write_csv(args.out_dir / "heatmap_ridge.csv", ["ridge_slope"], [[slope]]),
    ]


def cmd_bench(args):
    rows = []
    seeds = [args.seed + k for k in range(args.seeds)]
    for spec in args.activation:
        for scheme in args.scheme:
            s = _resolve_sigma(spec, args.sigma_p, args)
            plan = None
            if args.var_times_fanin is not None:
                plan = fixed_variance_plan(args.var_times_fanin, args.layers, args.width, spec, s, args.distribution)
            summary = bench_median(
                spec,
                scheme,
                s,
                seeds=seeds,
                layers=args.layers,
                width=args.width,
                batch=args.batch,
                stats_method=_method(args),
                distribution=args.distribution,
                plan=plan,
            )
            name = plan.scheme if plan is not None else summary.scheme
            rows.append([*_act_fields(spec), name, s, summary.weight_var_times_fanin, summary.E_f, summary.E_b])
    header = ["activation", "param", "scheme", "sigma_p", "weight_var_times_fanin", "E_f", "E_b"]
    return [write_csv(args.out_dir / "bench_variance.csv", header, rows)]


def cmd_mc_ablation(args):
    bench = None
    if args.bench:
        bench = {"layers": args.layers, "width": args.width, "batch": args.batch, "seed": args.seed}
    seeds = [args.seed + k for k in range(args.seeds)]
    rows = run_mc_ablation(args.sigma_a, args.sigma_p, args.samples, seeds, bench)
    header = ["n_samples", "E_W", "E_f", "E_b"] + (["wall_time_s"] if args.timing else [])
    out = [[r.n_samples, r.E_W, r.E_f, r.E_b] + ([r.wall_time] if args.timing else []) for r in rows]
    return [write_csv(args.out_dir / "mc_ablation.csv", header, out)]


def _load_task(args):
    if args.task == "image":
        if args.input:
            pixels, maxval = read_netpbm(args.input)
        else:
            pixels, maxval = synthetic_image(args.image_size, args.seed), 255
        return image_task(pixels, maxval), maxval
    if args.task == "audio":
        if args.input:
            samples, rate = read_wav(args.input)
        else:
            rate = args.rate
            samples = synthetic_audio(args.audio_seconds, rate)
        return audio_task(samples, rate), None
    return sdf2d_task(args.shape, args.size, args.train_res, args.eval_res), None


def _train_config(args, task_kind):
    cfg = TrainConfig.audio_defaults() if task_kind == "audio" else TrainConfig()
    updates = dict(
        steps=args.steps,
        lr=args.lr,
        seed=args.seed,
        activation=str(args.activation[0]),
        scheme=args.scheme[0],
        stats_method=args.stats_method if args.stats_method != "mc" else MonteCarlo(args.samples, args.seed),
        distribution=args.distribution,
        dtype=args.dtype,
    )
    for key in ("layers", "width", "bias_policy"):
        value = getattr(args, key)
        if value is not None:
            updates["hidden_layers" if key == "layers" else key] = value
    cfg = replace(cfg, **updates)
    return cfg


def cmd_fit(args):
    task, maxval = _load_task(args)
    cfg = _train_config(args, task.kind)
    if args.sigma_p == "solve":
        cfg = replace(cfg, sigma_p=solve_sigma_p(parse_activation(cfg.activation), _solver_grid(args), stats_method=cfg.stats_method).sigma_p)
    else:
        cfg = replace(cfg, sigma_p=args.sigma_p)
    res = fit(task, cfg)
    out = args.out_dir
    files = [
        write_csv(out / "metric_curve.csv", ["step", "loss", "train_metric"], [[k, l, m] for k, (l, m) in enumerate(zip(res.loss_curve, res.metric_curve))]),
        write_csv(
            out / "fit_summary.csv",
            ["task", "activation", "scheme", "sigma_p", "steps", "final_metric", "diverged_at"],
            [[task.kind, cfg.activation, cfg.scheme, cfg.sigma_p, cfg.steps, res.final_metric, "" if res.diverged_at is None else res.diverged_at]],
        ),
        save_checkpoint(res.mlp, out / "checkpoint.bin"),
    ]
    if res.prediction is not None:
        pred = np.asarray(res.prediction, dtype=np.float64)
        if task.kind == "image":
            pixels = from_unit_range(pred.reshape(task.grid_shape), maxval)
            files.append(write_netpbm(out / ("reconstruction.ppm" if pixels.ndim == 3 else "reconstruction.pgm"), pixels, maxval))
        elif task.kind == "audio":
            files.append(write_wav(out / "reconstruction.wav", pred.ravel(), task.rate))
        else:
            side = args.eval_res
            files.append(matrix_to_pgm(out / "reconstruction.pgm", (pred.reshape(side, side) <= 0).astype(float)))
    if res.diverged_at is not None:
        raise FloatingPointError(f"training diverged at step {res.diverged_at}")
    return files


def cmd_task_heatmap(args):
    if args.task == "audio":
        raise UsageError("task-heatmap supports image and sdf2d tasks")
    task, _ = _load_task(args)
    cfg = _train_config(args, task.kind)
    m = task_heatmap(task, args.sa_values, args.sp_values, cfg)
    slope = ridge_slope(m, args.sa_values, args.sp_values)
    cells = [[a, p, m[i, j]] for i, a in enumerate(args.sa_values) for j, p in enumerate(args.sp_values)]
    return [
        write_csv(args.out_dir / "task_heatmap.csv", ["sigma_a", "sigma_p", "metric"], cells),
        matrix_to_pgm(args.out_dir / "task_heatmap.pgm", m),
        write_csv(args.out_dir / "task_heatmap_ridge.csv", ["ridge_slope"], [[slope]]),
    ]


# ---- parser ------------------------------------------------------------------


def _common(p, activation=None, sigma_p="1.0", method="auto", scheme="vi_forward", mc_opts=True):
    p.add_argument("--config", type=Path, help="plain-text key = value option file")
    p.add_argument("--out-dir", type=Path, default=None, help=f"output directory (default: ${OUT_ENV} or .)")
    p.add_argument("--seed", type=int, default=0, help="base random seed")
    p.add_argument("--preset", choices=sorted(PRESETS), help="load a named configuration")
    if mc_opts:
        p.add_argument("--stats-method", default=method, choices=["mc", "analytic", "quadrature", "auto"], help="activation moments")
        p.add_argument("--samples", type=int, default=1_000_000, help="Monte Carlo sample count")
    if activation is not None:
        p.add_argument("--activation", type=_activations, default=activation, help="comma-separated kind[:param] list")
    if sigma_p is not None:
        p.add_argument("--sigma-p", type=_sigma_p, default=sigma_p, help="pre-activation std, or 'solve'")
    if scheme is not None:
        p.add_argument("--scheme", type=lambda t: [s.strip() for s in t.split(",") if s.strip()], default=scheme, help="comma-separated init schemes")


def _grid_opts(p):
    p.add_argument("--grid-lo", type=float, default=1e-3, help="smallest sigma_p searched")
    p.add_argument("--grid-hi", type=float, default=10.0, help="largest sigma_p searched")
    p.add_argument("--grid-points", type=int, default=2000, help="number of grid points")
    p.add_argument("--spacing", choices=["log", "linear"], default="log", help="grid spacing")


def _train_opts(p, steps=2000):
    p.add_argument("--task", choices=["image", "audio", "sdf2d"], default="image", help="signal to fit")
    p.add_argument("--input", type=Path, help="PGM/PPM image or 16-bit mono WAV (default: synthetic signal)")
    p.add_argument("--image-size", type=int, default=64, help="side of the synthetic image")
    p.add_argument("--audio-seconds", type=float, default=1.0, help="length of the synthetic audio")
    p.add_argument("--rate", type=int, default=8000, help="sample rate of the synthetic audio")
    p.add_argument("--shape", choices=["circle", "square", "annulus"], default="circle", help="sdf2d shape")
    p.add_argument("--size", type=float, default=0.5, help="sdf2d radius or half-side")
    p.add_argument("--train-res", type=int, default=64, help="sdf2d training grid side")
    p.add_argument("--eval-res", type=int, default=256, help="sdf2d evaluation grid side")
    p.add_argument("--steps", type=int, default=steps, help="Adam steps")
    p.add_argument("--lr", type=float, default=1e-3, help="learning rate")
    p.add_argument("--layers", type=int, default=None, help="hidden layers (default 8, audio 3)")
    p.add_argument("--width", type=int, default=None, help="hidden units (default 128, audio 256)")
    p.add_argument("--bias-policy", choices=["zero", "same_as_weights"], default=None, help="bias init (audio default same_as_weights)")
    p.add_argument("--distribution", choices=["uniform", "normal"], default="uniform", help="weight distribution")
    p.add_argument("--dtype", choices=["float32", "float64"], default="float32", help="training precision")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="varinit", description="Variance-informed initialization toolkit.", formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="command")

    p = sub.add_parser("stats", help="activation moments", formatter_class=fmt)
    _common(p, activation=",".join(CLASSIC + INR), sigma_p=None, method="mc", scheme=None)
    p.add_argument("--sigma-p", type=_floats, default="1.0", help="comma-separated pre-activation stds")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("init-table", help="hidden-layer weight variance times fan-in", formatter_class=fmt)
    _common(p, activation=",".join(CLASSIC), method="mc")
    _grid_opts(p)
    p.add_argument("--width", type=int, default=1000, help="hidden width used for the table")
    p.set_defaults(func=cmd_init_table)

    p = sub.add_parser("solve-sigma-p", help="grid search for the backward condition", formatter_class=fmt)
    _common(p, activation=",".join(CLASSIC + INR), sigma_p=None, scheme=None)
    _grid_opts(p)
    p.add_argument("--fan-ratio", type=float, default=1.0, help="M_{i+1} / M_i")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("heatmap", help="backward-condition heatmap for gaussian activations", formatter_class=fmt)
    _common(p, sigma_p=None, scheme=None)
    p.add_argument("--sa-values", type=_grid, default="0.01:0.5:50", help="sigma_a grid, lo:hi:n or list")
    p.add_argument("--sp-values", type=_grid, default="0.02:0.75:50", help="sigma_p grid, lo:hi:n or list")
    p.add_argument("--fan-ratio", type=float, default=1.0, help="M_{i+1} / M_i")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("bench-variance", help="deep-network variance propagation bench", formatter_class=fmt)
    _common(p, activation=",".join(CLASSIC))
    _grid_opts(p)
    p.add_argument("--layers", type=int, default=100, help="number of square layers")
    p.add_argument("--width", type=int, default=1000, help="layer width")
    p.add_argument("--batch", type=int, default=4096, help="input batch size")
    p.add_argument("--seeds", type=int, default=5, help="independent seeds (median reported)")
    p.add_argument("--distribution", choices=["uniform", "normal"], default="uniform", help="weight distribution")
    p.add_argument("--var-times-fanin", type=float, default=None, help="use this literal variance x fan-in instead of a scheme")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("mc-ablation", help="Monte Carlo sample-size ablation (gaussian)", formatter_class=fmt)
    _common(p, sigma_p=None, scheme=None, mc_opts=False)
    p.add_argument("--sigma-a", type=float, default=0.05, help="gaussian width")
    p.add_argument("--sigma-p", type=float, default=0.078, help="pre-activation std")
    p.add_argument("--samples", type=_ints, default="1000000,100000,10000,1000", help="comma-separated sample sizes")
    p.add_argument("--seeds", type=int, default=5, help="seeds per sample size (median reported)")
    p.add_argument("--bench", type=_bool, nargs="?", const=True, default=False, help="also run the variance bench per row")
    p.add_argument("--layers", type=int, default=100, help="bench layers")
    p.add_argument("--width", type=int, default=1000, help="bench width")
    p.add_argument("--batch", type=int, default=4096, help="bench batch")
    p.add_argument("--timing", type=_bool, nargs="?", const=True, default=False, help="add wall-clock column (not reproducible)")
    p.set_defaults(func=cmd_mc_ablation)

    p = sub.add_parser("fit", help="train a coordinate network on one signal", formatter_class=fmt)
    _common(p, activation="gaussian:0.05", sigma_p="0.15")
    _grid_opts(p)
    _train_opts(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("task-heatmap", help="task metric over a (sigma_a, sigma_p) grid", formatter_class=fmt)
    _common(p, activation="gaussian:0.05", sigma_p=None, scheme=None)
    _train_opts(p, steps=500)
    p.set_defaults(image_size=32, scheme=["vi_forward"])
    p.add_argument("--sa-values", type=_grid, default="0.02:0.4:12", help="sigma_a grid, lo:hi:n or list")
    p.add_argument("--sp-values", type=_grid, default="0.05:0.5:12", help="sigma_p grid, lo:hi:n or list")
    p.set_defaults(func=cmd_task_heatmap)
    return parser


def read_config(path: Path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def _apply_defaults(sub, values: dict, origin: str):
    dests = {a.dest: a for a in sub._actions}
    forbidden = {"help", "config", "func"}
    for key in values:
        if key not in dests or key in forbidden:
            raise UsageError(f"{origin}: unknown option {key!r}")
    sub.set_defaults(**values)


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError(parser.format_help())
    sub = _subparser(parser, args.command)
    layered = False
    if args.preset:
        _apply_defaults(sub, PRESETS[args.preset], f"preset {args.preset}")
        layered = True
    if args.config:
        try:
            _apply_defaults(sub, read_config(args.config), str(args.config))
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        layered = True
    if layered:
        args = parser.parse_args(argv)
    if args.out_dir is None:
        args.out_dir = Path(os.environ.get(OUT_ENV, "."))
    return args


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        files = args.func(args)
    except UsageError as exc:
        print(f"varinit: error: {exc}", file=sys.stderr)
        return 1
    except ArithmeticError as exc:
        print(f"varinit: numerical error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"varinit: error: {exc}", file=sys.stderr)
        return 1
    for path in files:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
