"""``mollikit`` command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 numeric divergence,
3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import checkpoint, config, svg
from .autodiff import NumericError
from .datasets import DataError, load_csv, load_matrix, save_matrix, toy_dataset
from .evalmetrics import (MMD_REPORT_SCALE, avg_test_loglik, export_density_grid,
                          export_score_grid, loglik_is_bound, mmd2_rbf)
from .mollify import UnsupportedShapeError, blur_mollify
from .schedules import MollificationSchedule, blur_times, gamma, snr
from .trainer import TrainingDiverged, run_experiment

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; 2 is reserved for divergence here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else repr(float(x))


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args) -> int:
    if args.vanilla and (args.schedule or args.mollify):
        raise UsageError("--vanilla cannot be combined with --schedule or --mollify")
    if args.recipe is None and args.config is None:
        raise UsageError("give --recipe, --config, or both")
    file_values = config.parse_file(args.config) if args.config else None
    flags: dict = {}
    if args.seed is not None:
        flags["train.seed"] = args.seed
    if args.schedule:
        flags["schedule.kind"] = args.schedule
    if args.tau is not None:
        flags["schedule.tau"] = args.tau
    if args.mollify_fraction is not None:
        flags["train.mollify_fraction"] = args.mollify_fraction
    if args.iterations is not None:
        flags["train.iterations"] = args.iterations
        flags["train.epochs"] = 0
    if args.deterministic_log:
        flags["train.record_wall_time"] = False
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        flags[key.strip()] = val.strip()
    variants = ("vanilla", "mollified")
    if args.vanilla:
        variants = ("vanilla",)
    elif args.mollify:
        variants = ("mollified",)
    summary = run_experiment(args.recipe, args.out, flags, file_values, variants)
    print(json.dumps(summary, indent=2, sort_keys=True))
    if any(r["diverged"] for r in summary["runs"].values()):
        return EXIT_DIVERGED
    return EXIT_OK


def _eval_data(spec: str, n: int, seed: int) -> np.ndarray:
    """Reference points; a CSV contributes its standardized test split."""
    if spec in ("gmm", "vonmises"):
        return toy_dataset(spec, seed=seed, n_train=1, n_test=n).test
    kind, _, path = spec.partition(":")
    if kind == "csv" and path:
        return load_csv(path).test
    if kind == "points" and path:
        return load_matrix(path)
    raise UsageError(f"--data must be gmm, vonmises, csv:PATH or points:PATH; got {spec!r}")


def cmd_eval(args) -> int:
    model = checkpoint.load(args.ckpt)
    data_rng, sample_rng, ll_rng = (np.random.default_rng(s)
                                    for s in np.random.SeedSequence(args.seed).spawn(3))
    ref = _eval_data(args.data, args.samples, int(data_rng.integers(2**63)))
    if ref.ndim != 2 or ref.shape[1] != model.dim:
        raise UsageError(f"model dimension {model.dim} does not match data shape {ref.shape}")
    ref = ref[:args.samples]
    model.eval()
    out: dict = {"n_ref": len(ref)}
    if args.metric in ("mmd2", "both"):
        samples = model.sample(len(ref), sample_rng)
        m = mmd2_rbf(samples, ref, args.lengthscale, args.variance)
        out.update(mmd2=m, mmd2_x1e4=m * MMD_REPORT_SCALE)
    if args.metric in ("loglik", "both"):
        out["test_ll"] = avg_test_loglik(model, ref, rng=ll_rng, k=args.iwae_k)
        out["loglik_is_bound"] = loglik_is_bound(model)
    text = json.dumps(out, sort_keys=True)
    print(text)
    if args.out:
        checkpoint.atomic_write_text(args.out, text + "\n")
    return EXIT_OK


def cmd_sample(args) -> int:
    if args.n < 0:
        raise UsageError("-n must be non-negative")
    model = checkpoint.load(args.ckpt)
    model.eval()
    pts = model.sample(args.n, np.random.default_rng(args.seed))
    save_matrix(args.out, pts, header=f"samples n={args.n} dim={model.dim} seed={args.seed}")
    return EXIT_OK


def _bounds(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--bounds expects 'lo,hi', got {text!r}") from None
    if not hi > lo:
        raise UsageError("--bounds needs lo < hi")
    return lo, hi


def cmd_grids(args) -> int:
    model = checkpoint.load(args.ckpt)
    if model.dim != 2:
        raise UsageError(f"grids need a 2-D model, checkpoint has dim={model.dim}")
    if not hasattr(model, "log_prob_np"):
        raise UsageError("grids need an exact-density model (flow)")
    bounds = _bounds(args.bounds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dens = export_density_grid(model, out / "density.txt", bounds, args.res)
    export_score_grid(model, out / "score.txt", bounds, args.score_res)
    if args.svg:
        svg.heatmap(dens, out / "density.svg")
    return EXIT_OK


def cmd_schedule(args) -> int:
    if args.points < 2:
        raise UsageError("--points must be >= 2")
    sched = MollificationSchedule(kind=args.kind, tau=args.tau)
    lines = ["# r gamma snr"]
    for r in np.linspace(0.0, 1.0, args.points):
        g = gamma(sched, float(r))
        lines.append(f"{_fmt(r)} {_fmt(g)} {_fmt(snr(sched, float(r)))}")
    text = "\n".join(lines) + "\n"
    if args.out:
        checkpoint.atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_blur_demo(args) -> int:
    g = load_matrix(args.input)
    if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] < 1:
        raise UsageError(f"blur-demo needs a square matrix, got shape {g.shape}")
    times = blur_times(args.sigma_b_max, args.steps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    width = len(str(args.steps))
    for i, t in enumerate(times):
        save_matrix(out / f"blur_{i:0{width}d}.txt", blur_mollify(g, float(t)),
                    header=f"step {i} t {float(t)!r}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = _Parser(prog="mollikit", description="Density estimation with annealed data mollification.",
                formatter_class=fmt)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="paired vanilla / mollified training run", formatter_class=fmt)
    t.add_argument("--recipe", default=None, help=f"one of: {', '.join(sorted(config.RECIPES))}")
    t.add_argument("--config", default=None, help="key = value overrides file")
    t.add_argument("--out", required=True, help="output run directory")
    t.add_argument("--seed", type=int, default=None, help="overrides train.seed")
    mode = t.add_mutually_exclusive_group()
    mode.add_argument("--vanilla", action="store_true", default=False, help="only the vanilla run")
    mode.add_argument("--mollify", action="store_true", default=False, help="only the mollified run")
    t.add_argument("--schedule", choices=["sigmoid", "linear", "cosine"], default=None,
                   help="noise schedule; recipe value when omitted")
    t.add_argument("--tau", type=float, default=None, help="sigmoid temperature; recipe value when omitted")
    t.add_argument("--mollify-fraction", type=float, default=None,
                   help="share of training that is mollified; recipe value when omitted")
    t.add_argument("--iterations", type=int, default=None, help="override the iteration budget")
    t.add_argument("--deterministic-log", action="store_true", default=False,
                   help="write wall_ms=0 so logs are byte-identical across reruns")
    t.add_argument("--set", action="append", default=None, metavar="KEY=VALUE",
                   help="extra config override, repeatable")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint", formatter_class=fmt)
    e.add_argument("--ckpt", required=True, help="checkpoint file")
    e.add_argument("--data", default="gmm", help="gmm | vonmises | csv:PATH | points:PATH")
    e.add_argument("--metric", choices=["mmd2", "loglik", "both"], default="both", help="what to compute")
    e.add_argument("--samples", type=int, default=10_000, help="reference and model sample count")
    e.add_argument("--seed", type=int, default=0, help="seed for reference draws and model samples")
    e.add_argument("--lengthscale", type=float, default=1.0, help="RBF kernel lengthscale")
    e.add_argument("--variance", type=float, default=1e-4, help="RBF kernel variance")
    e.add_argument("--iwae-k", type=int, default=100, help="importance samples for VAE bounds")
    e.add_argument("--out", default=None, help="also write the JSON here")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sample", help="draw points from a checkpoint", formatter_class=fmt)
    s.add_argument("--ckpt", required=True, help="checkpoint file")
    s.add_argument("-n", type=int, default=1000, help="number of points")
    s.add_argument("--out", required=True, help="output matrix file")
    s.add_argument("--seed", type=int, default=0, help="sampling seed")
    s.set_defaults(func=cmd_sample)

    g = sub.add_parser("grids", help="density and score grids of a 2-D flow", formatter_class=fmt)
    g.add_argument("--ckpt", required=True, help="checkpoint of a 2-D flow")
    g.add_argument("--bounds", default="-4,4", help="square grid extent lo,hi")
    g.add_argument("--res", type=int, default=101, help="density grid resolution")
    g.add_argument("--score-res", type=int, default=21, help="score grid resolution")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--svg", action="store_true", default=False, help="best-effort heatmap")
    g.set_defaults(func=cmd_grids)

    c = sub.add_parser("schedule", help="tabulate a noise schedule", formatter_class=fmt)
    c.add_argument("--kind", choices=["sigmoid", "linear", "cosine"], default="sigmoid",
                   help="schedule family")
    c.add_argument("--tau", type=float, default=0.7, help="sigmoid temperature")
    c.add_argument("--points", type=int, default=101, help="rows, r evenly spaced on [0, 1]")
    c.add_argument("--out", default=None, help="write the table here instead of stdout")
    c.set_defaults(func=cmd_schedule)

    b = sub.add_parser("blur-demo", help="heat-equation blurring of a square matrix",
                       formatter_class=fmt)
    b.add_argument("--input", required=True, help="square matrix file")
    b.add_argument("--sigma-b-max", type=float, default=4.0,
                   help="largest blur scale; first time is sigma^2 / 2")
    b.add_argument("--steps", type=int, default=10, help="log-spaced steps (writes steps + 1 files)")
    b.add_argument("--out", required=True, help="output directory")
    b.set_defaults(func=cmd_blur_demo)
    return p


def _glue_bounds(argv: list[str]) -> list[str]:
    """``--bounds -4,4`` would otherwise be read as an unknown option."""
    out: list[str] = []
    it = iter(argv)
    for a in it:
        if a == "--bounds":
            out.append(f"--bounds={next(it, '')}")
        else:
            out.append(a)
    return out


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(_glue_bounds(list(sys.argv[1:] if argv is None else argv)))
    try:
        return args.func(args)
    except (UsageError, config.ConfigError, UnsupportedShapeError, checkpoint.CheckpointError,
            DataError, ValueError) as exc:
        print(f"mollikit {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDiverged, NumericError) as exc:
        print(f"mollikit {args.command}: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"mollikit {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
