"""Command-line front end.

Subcommands: gen, train, levelset, inc, bench, boundary, plot.  Outputs are
CSV/JSON/SVG files; every command is deterministic given identical flags and
seed.  Flag defaults can be overridden through environment variables with
the TOPOINC_ prefix (for example TOPOINC_SIGMA=0.1).  Exit codes: 0 success,
1 module error (JSON payload on stderr), 2 flag misuse (argparse).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import TopoincError
from .bench import (
    ExperimentConfig,
    adversarial_set,
    boundary_eval,
    run_levelset_report,
    run_projection_bench,
    train_variant,
)
from . import dataio
from .flow import FlowModel
from .geometry import DATASET_NAMES, make_dataset, sample_uniform
from .inc import IncConfig, project_aware, project_ideal, project_ignorant
from .latent import standard_mixture
from .noise import DEFAULT_SIGMA
from .rng import substream
from .svm import svm_train
from .svg import (
    render_boundary,
    render_field_heatmap,
    render_levelset_outline,
    render_scatter,
    render_trace,
)
from .train import TrainConfig, make_training_set, train


def _env_default(name: str, fallback, cast):
    raw = os.environ.get("TOPOINC_" + name.upper().replace("-", "_"))
    return cast(raw) if raw is not None else fallback


def _add(parser, flag, **kw):
    """add_argument with the default overridable via environment."""
    if "default" in kw and kw["default"] is not None:
        cast = kw.get("type", str)
        kw["default"] = _env_default(flag.lstrip("-"), kw["default"], cast)
    if "default" in kw:
        kw.setdefault("help", "")
        kw["help"] = (kw["help"] + f" (default: {kw['default']})").strip()
    parser.add_argument(flag, **kw)


def _bool_flag(v: str) -> bool:
    if v not in ("true", "false"):
        raise argparse.ArgumentTypeError("expected 'true' or 'false'")
    return v == "true"


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="topoinc", description=__doc__.splitlines()[0])
    top.add_argument("--version", action="version", version=__version__)
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="sample a dataset to CSV (plus standardizer sidecar)")
    _add(p, "--dataset", choices=DATASET_NAMES, required=True, help="dataset id")
    _add(p, "--n-per-class", type=int, default=1000, help="samples per class")
    _add(p, "--sigma", type=float, default=DEFAULT_SIGMA, help="noise std")
    _add(p, "--seed", type=int, default=0, help="master seed")
    _add(p, "--out", required=True, help="output CSV path")

    p = sub.add_parser("train", help="train a flow and write a checkpoint JSON")
    _add(p, "--dataset", choices=DATASET_NAMES, default=None, help="dataset id")
    _add(p, "--data", default=None, help="training CSV (alternative to --dataset)")
    p.add_argument("--latent-components", type=int, required=True, help="number of latent Gaussians")
    p.add_argument("--class-aware", type=_bool_flag, required=True, help="true or false")
    _add(p, "--iters", type=int, default=30000, help="training iterations")
    _add(p, "--batch", type=int, default=200, help="batch size")
    _add(p, "--lr", type=float, default=1e-3, help="learning rate")
    _add(p, "--sigma", type=float, default=DEFAULT_SIGMA, help="noise std for --dataset")
    _add(p, "--n-per-class", type=int, default=1000, help="samples per class for --dataset")
    _add(p, "--rotation", type=float, default=0.0, help="latent arrangement rotation (radians)")
    _add(p, "--seed", type=int, default=0, help="master seed")
    _add(p, "--out", required=True, help="checkpoint JSON path")
    _add(p, "--trace-out", default=None, help="optional loss trace CSV path")

    p = sub.add_parser("levelset", help="threshold a model density on a grid")
    _add(p, "--model", required=True, help="checkpoint JSON")
    _add(p, "--lambda", dest="lam", type=float, default=0.01, help="density threshold")
    _add(p, "--grid", type=int, default=300, help="cells per axis")
    _add(p, "--domain", type=float, default=3.0, help="half-width of the square domain")
    _add(p, "--min-area", type=int, default=4, help="speckle filter (cells)")
    _add(p, "--dataset", choices=DATASET_NAMES, default=None, help="manifold for inclusion checks")
    _add(p, "--sigma", type=float, default=DEFAULT_SIGMA, help="noise std for radii")
    _add(p, "--workers", type=int, default=1, help="parallel map workers")
    _add(p, "--out-field", required=True, help="field CSV path")
    _add(p, "--out-report", required=True, help="report JSON path")

    p = sub.add_parser("inc", help="project query points onto the manifold")
    _add(p, "--variant", choices=("ideal", "ignorant", "aware"), required=True)
    _add(p, "--model", default=None, help="checkpoint JSON (ignorant/aware)")
    _add(p, "--dataset", choices=DATASET_NAMES, default=None, help="dataset id (ideal)")
    _add(p, "--query", default=None, help="single query 'x,y' (raw units)")
    _add(p, "--in", dest="in_csv", default=None, help="query CSV x1,x2[,...]")
    _add(p, "--alpha", type=float, default=1.0, help="latent regularization factor")
    _add(p, "--steps", type=int, default=100, help="optimizer iterations")
    _add(p, "--lr", type=float, default=0.01, help="optimizer learning rate")
    _add(p, "--restarts", type=int, default=None, help="initial points (default: latent components)")
    _add(p, "--seed", type=int, default=0, help="master seed")
    _add(p, "--out", required=True, help="results CSV path")
    _add(p, "--trace-out", default=None, help="trace CSV for the first query")

    p = sub.add_parser("bench", help="projection-error benchmark for both variants")
    _add(p, "--config", default=None, help="experiment config JSON (flags override)")
    _add(p, "--dataset", choices=DATASET_NAMES, default=None)
    _add(p, "--model-ignorant", default=None, help="class-ignorant checkpoint")
    _add(p, "--model-aware", default=None, help="class-aware checkpoint")
    _add(p, "--r", type=float, default=None, help="perturbation size (default: 0.2)")
    _add(p, "--n-sources", type=int, default=None, help="source points per class (default: 100)")
    _add(p, "--steps", type=int, default=None, help="INC iterations (default: 100)")
    _add(p, "--alpha", type=float, default=None, help="INC regularization (default: 1.0)")
    _add(p, "--seed", type=int, default=None, help="master seed (default: 0)")
    _add(p, "--out-dir", required=True, help="directory for reports and manifest")

    p = sub.add_parser("boundary", help="decision-boundary grid for a defense variant")
    _add(p, "--dataset", choices=DATASET_NAMES, required=True)
    _add(p, "--defense", choices=("none", "ideal", "ignorant", "aware"), required=True)
    _add(p, "--model", default=None, help="checkpoint JSON (ignorant/aware)")
    _add(p, "--gamma", type=float, default=100.0, help="RBF kernel coefficient")
    _add(p, "--c", dest="c_reg", type=float, default=1.0, help="SVM box constraint")
    _add(p, "--grid", type=int, default=100, help="cells per axis (300 matches the figures)")
    _add(p, "--n-per-class", type=int, default=1000, help="SVM training samples per class")
    _add(p, "--sigma", type=float, default=DEFAULT_SIGMA, help="SVM training noise")
    _add(p, "--steps", type=int, default=100, help="INC iterations")
    _add(p, "--seed", type=int, default=0, help="master seed")
    _add(p, "--workers", type=int, default=1, help="parallel map workers")
    _add(p, "--out", required=True, help="label grid CSV path")
    _add(p, "--out-meta", default=None, help="metadata JSON path")

    p = sub.add_parser("plot", help="render an SVG from produced files")
    _add(p, "--kind", choices=("scatter", "field-heatmap", "levelset-outline", "trace", "boundary"),
         required=True)
    _add(p, "--in", dest="in_path", default=None, help="input CSV (scatter/trace/boundary)")
    _add(p, "--field", default=None, help="field CSV (heatmap/outline)")
    _add(p, "--lambda", dest="lam", type=float, default=0.01, help="outline threshold")
    _add(p, "--domain", type=float, default=3.0, help="half-width for boundary plots")
    _add(p, "--out", required=True, help="output SVG path")
    return top


def _err(exc: Exception) -> int:
    if isinstance(exc, TopoincError):
        payload = exc.payload()
    else:
        payload = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(payload), file=sys.stderr)
    return 1


def _cmd_gen(args) -> int:
    m = make_dataset(args.dataset)
    samples = sample_uniform(m, args.n_per_class, rng_seed=args.seed)
    pts = np.stack([s.point for s in samples])
    if args.sigma > 0:
        rng = substream(args.seed, "dataset", "noise")
        pts = pts + args.sigma * rng.standard_normal(pts.shape)
    Path(args.out).write_text(dataio.dataset_to_csv(samples, noisy_points=pts))
    dataio.write_json(
        Path(args.out).with_suffix(".meta.json"),
        {
            "dataset": args.dataset,
            "n_per_class": args.n_per_class,
            "sigma": args.sigma,
            "seed": args.seed,
            "standardizer": {"mean": pts.mean(axis=0), "std": pts.std(axis=0)},
            "version": __version__,
        },
    )
    return 0


def _cmd_train(args) -> int:
    cfg = TrainConfig(
        iterations=args.iters,
        batch=args.batch,
        learning_rate=args.lr,
        class_aware=args.class_aware,
        seed=args.seed,
        n_per_class=args.n_per_class,
        sigma=args.sigma,
    )
    latent = standard_mixture(args.latent_components, rotation=args.rotation)
    if args.dataset is not None:
        model = train(make_dataset(args.dataset), cfg, latent, metadata={"dataset": args.dataset})
    elif args.data is not None:
        pts, labels, _ = dataio.load_dataset(args.data)
        model = train((pts, labels), cfg, latent, metadata={"dataset": Path(args.data).name})
    else:
        raise TopoincError("train needs --dataset or --data")
    model.metadata["version"] = __version__
    dataio.save_model(args.out, model)
    if args.trace_out and model.loss_trace is not None:
        lines = ["iteration,loss"] + [
            f"{k},{dataio.fmt(v)}" for k, v in enumerate(model.loss_trace)
        ]
        Path(args.trace_out).write_text("\n".join(lines) + "\n")
    return 0


def _cmd_levelset(args) -> int:
    model = dataio.load_model(args.model)
    manifold = make_dataset(args.dataset) if args.dataset else None
    h = args.domain
    run = run_levelset_report(
        model,
        lam=args.lam,
        domain=(-h, h, -h, h),
        resolution=(args.grid, args.grid),
        min_area=args.min_area,
        manifold=manifold,
        sigma=args.sigma,
        workers=args.workers,
    )
    Path(args.out_field).write_text(dataio.field_to_csv(run.field))
    payload = run.report.to_dict()
    payload.update(
        max_foreground_manifold_distance=run.max_foreground_manifold_distance,
        n_foreground_beyond_delta=run.n_foreground_beyond_delta,
        seed=model.metadata.get("seed"),
        version=__version__,
    )
    dataio.write_json(args.out_report, payload)
    return 0


def _cmd_inc(args) -> int:
    if args.query is not None:
        queries = np.array([[float(v) for v in args.query.split(",")]])
    elif args.in_csv is not None:
        pts, _, _ = dataio.load_dataset(args.in_csv)
        queries = pts
    else:
        raise TopoincError("inc needs --query or --in")
    results = []
    if args.variant == "ideal":
        if args.dataset is None:
            raise TopoincError("ideal variant needs --dataset")
        m = make_dataset(args.dataset)
        results = [project_ideal(m, q) for q in queries]
        x_raw = np.stack([r.x_star for r in results])
    else:
        if args.model is None:
            raise TopoincError(f"{args.variant} variant needs --model")
        model = dataio.load_model(args.model)
        cfg = IncConfig(
            alpha=args.alpha, steps=args.steps, learning_rate=args.lr,
            restarts=args.restarts, seed=args.seed,
        )
        q_std = model.standardizer.apply(queries)
        fn = project_ignorant if args.variant == "ignorant" else project_aware
        results = [fn(model, q, cfg, query_index=k) for k, q in enumerate(q_std)]
        x_raw = model.standardizer.invert(np.stack([r.x_star for r in results]))
    lines = ["x1,x2,proj_x1,proj_x2,objective,chosen_start,variant"]
    for q, r, xr in zip(queries, results, x_raw):
        lines.append(
            ",".join(
                [dataio.fmt(q[0]), dataio.fmt(q[1]), dataio.fmt(xr[0]), dataio.fmt(xr[1]),
                 dataio.fmt(r.objective), str(r.chosen_start), r.variant]
            )
        )
    Path(args.out).write_text("\n".join(lines) + "\n")
    if args.trace_out:
        Path(args.trace_out).write_text(dataio.trace_to_csv(results[0]))
    return 0


def _cmd_bench(args) -> int:
    # flags override config-file values override built-in defaults
    file_cfg = dataio.read_json(args.config) if args.config else {}

    def pick(flag, key, default):
        return flag if flag is not None else file_cfg.get(key, default)

    dataset = pick(args.dataset, "dataset", None)
    model_ignorant = pick(args.model_ignorant, "model_ignorant", None)
    model_aware = pick(args.model_aware, "model_aware", None)
    if not (dataset and model_ignorant and model_aware):
        raise TopoincError("bench needs dataset, model-ignorant and model-aware "
                           "(via flags or --config)")
    seed = int(pick(args.seed, "seed", 0))
    cfg = ExperimentConfig(
        dataset=dataset,
        inc=IncConfig(
            alpha=float(pick(args.alpha, "alpha", 1.0)),
            steps=int(pick(args.steps, "steps", 100)),
            seed=seed,
        ),
        n_sources_per_class=int(pick(args.n_sources, "n_sources", 100)),
        perturbation=float(pick(args.r, "r", 0.2)),
        seed=seed,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model_i = dataio.load_model(model_ignorant)
    model_a = dataio.load_model(model_aware)
    rep_i, rep_a = run_projection_bench(cfg, model_i, model_a)
    artifacts = {}
    for rep in (rep_i, rep_a):
        name = f"projection-{rep.variant}.json"
        payload = rep.to_dict()
        payload["version"] = __version__
        dataio.write_json(out / name, payload)
        csv_name = f"projection-{rep.variant}.csv"
        lines = ["trial,error,error_raw"] + [
            f"{k},{dataio.fmt(rep.errors[k])},{dataio.fmt(rep.errors_raw[k])}"
            for k in range(rep.n_trials)
        ]
        (out / csv_name).write_text("\n".join(lines) + "\n")
        artifacts[rep.variant] = [name, csv_name]
    dataio.write_json(
        out / "run_manifest.json",
        {
            "command": "bench",
            "config": {
                "dataset": dataset,
                "seed": seed,
                "r": cfg.perturbation,
                "n_sources": cfg.n_sources_per_class,
                "steps": cfg.inc.steps,
                "alpha": cfg.inc.alpha,
                "model_ignorant": str(model_ignorant),
                "model_aware": str(model_aware),
            },
            "artifacts": artifacts,
            "ratio_mean_aware_over_ignorant": rep_a.mean_error / rep_i.mean_error,
            "version": __version__,
        },
    )
    return 0


def _cmd_boundary(args) -> int:
    m = make_dataset(args.dataset)
    tcfg = TrainConfig(n_per_class=args.n_per_class, sigma=args.sigma, seed=args.seed)
    pts, labels = make_training_set(m, tcfg)
    svm = svm_train(pts, labels, gamma=args.gamma, c_reg=args.c_reg)
    model = dataio.load_model(args.model) if args.model else None
    h = 3.0
    grid = boundary_eval(
        svm,
        args.defense,
        manifold=m,
        model=model,
        domain=(-h, h, -h, h),
        resolution=(args.grid, args.grid),
        inc_cfg=IncConfig(steps=args.steps, seed=args.seed),
        workers=args.workers,
    )
    Path(args.out).write_text(dataio.labels_to_csv(grid.labels[args.defense]))
    if args.out_meta:
        dataio.write_json(
            args.out_meta,
            {
                "dataset": args.dataset,
                "defense": args.defense,
                "domain": list(grid.domain),
                "resolution": list(grid.resolution),
                "gamma": args.gamma,
                "c": args.c_reg,
                "seed": args.seed,
                "version": __version__,
            },
        )
    return 0


def _cmd_plot(args) -> int:
    if args.kind == "scatter":
        pts, labels, _ = dataio.load_dataset(args.in_path)
        svg = render_scatter(pts, labels)
    elif args.kind == "field-heatmap":
        svg = render_field_heatmap(dataio.load_field(args.field))
    elif args.kind == "levelset-outline":
        svg = render_levelset_outline(dataio.load_field(args.field), args.lam)
    elif args.kind == "trace":
        rows = Path(args.in_path).read_text().splitlines()
        body = [r.split(",") for r in rows[1:] if r.strip()]
        trace_x = np.array([[float(r[3]), float(r[4])] for r in body])
        svg = render_trace(trace_x)
    else:  # boundary
        labels = dataio.labels_from_csv(Path(args.in_path).read_text())
        h = args.domain
        svg = render_boundary(labels, (-h, h, -h, h))
    Path(args.out).write_text(svg)
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "train": _cmd_train,
    "levelset": _cmd_levelset,
    "inc": _cmd_inc,
    "bench": _cmd_bench,
    "boundary": _cmd_boundary,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (TopoincError, OSError, ValueError) as exc:
        return _err(exc)


if __name__ == "__main__":
    sys.exit(main())
