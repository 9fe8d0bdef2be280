"""Command-line entry point for the whole pipeline.

Every command is deterministic given its seeds. Exit codes: 0 success, 2 input
or validation problem, 3 computation failure. With --json, errors also land on
stdout as one JSON object. PIQFLOW_CONFIG may name a JSON file of defaults
(model, tile, alpha, seed, splits, jobs); explicit flags always win.
"""

from __future__ import annotations

import functools
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace as _replace
from pathlib import Path

import click
import numpy as np

from . import analysis, cleaning, io as fileio, maps, model as modeling, screening
from .datamodel import CATEGORIES, ValidationError
from .feedback import (
    build_report,
    localized_feedback,
    quality_bucket,
    region_grid_3x3,
    select_best_frame,
)
from .features import extract_features
from .imageops import load_image, save_image
from .patches import crop_window
from .simulate import (
    RATER_TYPES,
    SimulatedRaterConfig,
    default_ground_truth,
    simulate_study,
)

EXIT_VALIDATION = 2
EXIT_COMPUTATION = 3

CONFIG_ENV = "PIQFLOW_CONFIG"
_CONFIG_KEYS = {"model", "tile", "alpha", "seed", "splits", "jobs"}


def canonical_json(obj) -> str:
    """One stable JSON encoding shared by CLI and service output."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _load_config() -> dict:
    path = os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"config file {path}: {exc}") from None
    unknown = set(cfg) - _CONFIG_KEYS
    if unknown:
        raise ValidationError(f"config file {path}: unknown keys {sorted(unknown)}")
    return cfg


def _fallback(ctx, key, flag_value, default):
    """flag > config-file value > built-in default."""
    if flag_value is not None:
        return flag_value
    return ctx.obj["config"].get(key, default)


def handle_errors(fn):
    """Uniform error-to-exit-code mapping around a command body."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        as_json = kwargs.get("as_json", False)
        try:
            return fn(*args, **kwargs)
        except (ValidationError, FileNotFoundError, click.ClickException) as exc:
            _emit_error(exc, as_json)
            sys.exit(EXIT_VALIDATION)
        except Exception as exc:
            _emit_error(exc, as_json)
            sys.exit(EXIT_COMPUTATION)

    return wrapper


def _emit_error(exc: Exception, as_json: bool) -> None:
    if as_json:
        click.echo(canonical_json({"error": type(exc).__name__, "message": str(exc)}))
    else:
        click.echo(f"error: {exc}", err=True)


@click.group()
@click.pass_context
def main(ctx):
    """Perceptual image-quality toolkit: study cleanup, prediction, guidance."""
    ctx.ensure_object(dict)
    try:
        ctx.obj["config"] = _load_config()
    except ValidationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)


def _read_sessions(ratings_path, fmt, sessions_path):
    metadata = fileio.load_session_metadata(sessions_path) if sessions_path else None
    return fileio.load_ratings(ratings_path, format=fmt, metadata=metadata)


def _read_golden(path):
    if not path:
        return None
    with open(path) as fh:
        return {k: float(v) for k, v in json.load(fh).items()}


@main.command()
@click.option("--ratings", required=True, type=click.Path(exists=True))
@click.option("--format", "fmt", default="csv", type=click.Choice(["csv", "json-lines"]))
@click.option("--sessions", type=click.Path(exists=True))
@click.option("--items", type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--json", "as_json", is_flag=True)
@handle_errors
def ingest(ratings, fmt, sessions, items, out, as_json):
    """Validate study files and write normalized copies."""
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    session_records = _read_sessions(ratings, fmt, sessions)
    fileio.save_ratings(session_records, out_dir / "ratings.csv")
    summary = {"subjects": len(session_records),
               "ratings": sum(len(s.ratings) for s in session_records)}
    if sessions:
        fileio.save_session_metadata(session_records, out_dir / "sessions.csv")
    if items:
        item_map = fileio.load_items(items)
        fileio.save_items(item_map.values(), out_dir / "items.csv")
        summary["items"] = len(item_map)
    click.echo(canonical_json(summary) if as_json
               else f"ingested {summary['subjects']} subjects, "
                    f"{summary['ratings']} ratings -> {out_dir}")


@main.command()
@click.option("--ratings", required=True, type=click.Path(exists=True))
@click.option("--format", "fmt", default="csv", type=click.Choice(["csv", "json-lines"]))
@click.option("--sessions", type=click.Path(exists=True))
@click.option("--golden", type=click.Path(exists=True),
              help="JSON mapping golden item id to reference score.")
@click.option("--out", required=True, type=click.Path())
@click.option("--report", "report_path", type=click.Path())
@click.option("--json", "as_json", is_flag=True)
@handle_errors
def screen(ratings, fmt, sessions, golden, out, report_path, as_json):
    """Run subject screening; write verdicts CSV (and optional JSON report)."""
    session_records = _read_sessions(ratings, fmt, sessions)
    report = screening.screen_report(session_records, _read_golden(golden))
    screening.save_verdicts(report.verdicts, out)
    if report_path:
        screening.save_report_json(report, report_path)
    rejected = [v.subject_id for v in report.verdicts if not v.accepted]
    summary = {"subjects": len(report.verdicts), "rejected": len(rejected),
               "rejected_ids": rejected}
    click.echo(canonical_json(summary) if as_json
               else f"screened {summary['subjects']} subjects, "
                    f"rejected {summary['rejected']}")


@main.command()
@click.option("--ratings", required=True, type=click.Path(exists=True))
@click.option("--format", "fmt", default="csv", type=click.Choice(["csv", "json-lines"]))
@click.option("--verdicts", type=click.Path(exists=True),
              help="Only subjects accepted here contribute.")
@click.option("--out", required=True, type=click.Path())
@click.option("--json", "as_json", is_flag=True)
@handle_errors
def clean(ratings, fmt, verdicts, out, as_json):
    """Outlier-reject ratings per item and write item_stats CSV."""
    session_records = _read_sessions(ratings, fmt, None)
    if verdicts:
        accepted = {v.subject_id for v in screening.load_verdicts(verdicts)
                    if v.accepted}
        session_records = [s for s in session_records if s.subject_id in accepted]
    report = cleaning.clean_all(session_records)
    fileio.save_item_stats(
        [report.stats[i] for i in sorted(report.stats)], out)
    n_rejected = sum(len(v) for v in report.rejected.values())
    summary = {"items": len(report.stats), "ratings_rejected": n_rejected,
               "items_dropped": report.dropped_items}
    click.echo(canonical_json(summary) if as_json
               else f"cleaned {summary['items']} items, "
                    f"rejected {n_rejected} ratings")


@main.command()
@click.option("--ratings", required=True, type=click.Path(exists=True))
@click.option("--format", "fmt", default="csv", type=click.Choice(["csv", "json-lines"]))
@click.option("--sessions", type=click.Path(exists=True))
@click.option("--golden", type=click.Path(exists=True))
@click.option("--items", "items_path", type=click.Path(exists=True))
@click.option("--stats", "stats_path", type=click.Path(exists=True))
@click.option("--splits", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", required=True, type=click.Path())
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
@handle_errors
def analyze(ctx, ratings, fmt, sessions, golden, items_path, stats_path,
            splits, seed, out, as_json):
    """Consistency analytics, histograms, and the binarization study.

    Re-running with the same inputs and seed writes byte-identical output.
    """
    splits = int(_fallback(ctx, "splits", splits, analysis.DEFAULT_N_SPLITS))
    seed = int(_fallback(ctx, "seed", seed, 0))
    session_records = _read_sessions(ratings, fmt, sessions)
    result: dict = {"n_subjects": len(session_records), "splits": splits,
                    "seed": seed}

    inter = analysis.inter_subject_consistency(session_records, n_splits=splits,
                                               rng_seed=seed)
    result["inter_subject"] = {"mean_srcc": inter.mean_split_half_srcc,
                               "n_splits": inter.n_splits,
                               "skipped": inter.skipped_splits}
    golden_ref = _read_golden(golden)
    if golden_ref:
        intra = analysis.intra_subject_consistency(session_records, golden_ref)
        result["intra_subject"] = {"median_lcc": intra.median_lcc,
                                   "n_excluded": intra.n_excluded}
    study = analysis.binarization_consistency_study(
        session_records, n_splits=splits, rng_seed=seed)
    result["distortion_consistency"] = study.per_strategy["probabilistic"]
    result["binarization"] = {"per_strategy": study.per_strategy,
                              "drop_pct": study.drop_pct}
    if stats_path:
        stats = fileio.load_item_stats(stats_path)
        hist = analysis.histograms(stats)
        result["histograms"] = {"mos_counts": list(hist.mos_counts),
                                "bin_edges": list(hist.bin_edges),
                                "category_mean_prob": hist.category_mean_prob}
        if items_path:
            item_map = fileio.load_items(items_path)
            try:
                pvi = analysis.patch_vs_image_correlation(stats, item_map)
                result["patch_vs_image"] = {"overall": pvi.overall,
                                            "random": pvi.random,
                                            "salient": pvi.salient,
                                            "n_pairs": pvi.n_pairs}
            except analysis.UndefinedCorrelationError:
                result["patch_vs_image"] = None
    payload = canonical_json(result)
    Path(out).write_text(payload + "\n")
    click.echo(payload if as_json else f"analysis written to {out}")


@main.command()
@click.option("--faithful", type=int, default=20)
@click.option("--constant", "n_constant", type=int, default=0)
@click.option("--haphazard", "n_haphazard", type=int, default=0)
@click.option("--antagonist", "n_antagonist", type=int, default=0)
@click.option("--items", "n_items", type=int, default=60)
@click.option("--noise", type=float, default=10.0)
@click.option("--seed", type=int, default=None)
@click.option("--out", required=True, type=click.Path())
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
@handle_errors
def simulate(ctx, faithful, n_constant, n_haphazard, n_antagonist, n_items,
             noise, seed, out, as_json):
    """Generate a synthetic study with known ground truth."""
    seed = int(_fallback(ctx, "seed", seed, 0))
    truth = default_ground_truth(n_items=n_items, rng_seed=seed)
    rng = np.random.default_rng([seed, 999])
    raters = []
    for kind, count in (("faithful", faithful), ("constant", n_constant),
                        ("haphazard", n_haphazard), ("antagonist", n_antagonist)):
        assert kind in RATER_TYPES
        for k in range(count):
            raters.append(SimulatedRaterConfig(
                subject_id=f"{kind[0]}{k:03d}", rater_type=kind,
                noise_stddev=noise, bias=float(rng.normal(0.0, 8.0)),
                label_flip_prob=0.05 if kind == "faithful" else 0.0))
    sessions = simulate_study(raters, truth, rng_seed=seed)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    fileio.save_ratings(sessions, out_dir / "ratings.csv")
    (out_dir / "golden.json").write_text(canonical_json(truth.golden_scores))
    (out_dir / "truth.json").write_text(canonical_json(
        {"true_mos": truth.true_mos,
         "label_prob": {k: list(v) for k, v in truth.label_prob.items()}}))
    summary = {"subjects": len(sessions), "items": n_items, "seed": seed}
    click.echo(canonical_json(summary) if as_json
               else f"simulated {len(sessions)} sessions -> {out_dir}")


@main.command()
@click.argument("image", type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(["random", "salient"]), default="salient")
@click.option("--fraction", type=float, default=0.4)
@click.option("--seed", type=int, default=None)
@click.option("--out", required=True, type=click.Path())
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
@handle_errors
def crop(ctx, image, mode, fraction, seed, out, as_json):
    """Cut one random or salient patch out of an image."""
    seed = int(_fallback(ctx, "seed", seed, 0))
    pixels = load_image(image)
    patch, (left, top) = crop_window(pixels, mode, fraction, seed)
    save_image(patch, out)
    info = {"left": left, "top": top,
            "width": patch.shape[1], "height": patch.shape[0], "mode": mode}
    click.echo(canonical_json(info) if as_json
               else f"{mode} patch {info['width']}x{info['height']} "
                    f"at ({left},{top}) -> {out}")


@main.command()
@click.option("--items", "items_path", required=True, type=click.Path(exists=True))
@click.option("--proportions", default="0.603,0.196,0.201")
@click.option("--seed", type=int, default=None)
@click.option("--out", required=True, type=click.Path())
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
@handle_errors
def split(ctx, items_path, proportions, seed, out, as_json):
    """Partition items train/validation/test; patches follow their parents."""
    seed = int(_fallback(ctx, "seed", seed, 0))
    parts = tuple(float(p) for p in proportions.split(","))
    if len(parts) != 3:
        raise ValidationError("--proportions needs three comma-separated numbers")
    item_map = fileio.load_items(items_path)
    ds = modeling.split_dataset(item_map, proportions=parts, seed=seed)
    obj = {"train": list(ds.train), "validation": list(ds.validation),
           "test": list(ds.test), "proportions": list(ds.proportions)}
    Path(out).write_text(canonical_json(obj) + "\n")
    sizes = {k: len(obj[k]) for k in ("train", "validation", "test")}
    click.echo(canonical_json(sizes) if as_json
               else f"split {sizes['train']}/{sizes['validation']}/{sizes['test']} -> {out}")


def _load_split(path) -> modeling.DatasetSplit:
    with open(path) as fh:
        obj = json.load(fh)
    return modeling.DatasetSplit(train=tuple(obj["train"]),
                                 validation=tuple(obj["validation"]),
                                 test=tuple(obj["test"]),
                                 proportions=tuple(obj["proportions"]))


def _features_for_items(item_map, ids, jobs):
    def one(item_id):
        return item_id, extract_features(load_image(item_map[item_id].source_path))

    wanted = [i for i in ids if i in item_map]
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            pairs = list(pool.map(one, wanted))
    else:
        pairs = [one(i) for i in wanted]
    return dict(pairs)


@main.command()
@click.option("--items", "items_path", required=True, type=click.Path(exists=True))
@click.option("--stats", "stats_path", required=True, type=click.Path(exists=True))
@click.option("--split", "split_path", required=True, type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(["mlp", "ridge"]), default="mlp")
@click.option("--hidden", type=int, default=modeling.DEFAULT_HIDDEN_DIM)
@click.option("--epochs", type=int, default=modeling.DEFAULT_EPOCHS)
@click.option("--lr", type=float, default=modeling.DEFAULT_BASE_LR)
@click.option("--seed", type=int, default=None)
@click.option("--images-only", is_flag=True)
@click.option("--jobs", type=int, default=None)
@click.option("--out", required=True, type=click.Path())
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
@handle_errors
def train(ctx, items_path, stats_path, split_path, mode, hidden, epochs, lr,
          seed, images_only, jobs, out, as_json):
    """Fit the multi-task model on the train split and save it as JSON."""
    seed = int(_fallback(ctx, "seed", seed, 0))
    jobs = int(_fallback(ctx, "jobs", jobs, 1))
    item_map = fileio.load_items(items_path)
    stats = fileio.load_item_stats(stats_path)
    ds = _load_split(split_path)
    feats = _features_for_items(item_map, list(ds.train) + list(ds.validation), jobs)
    mode_name = modeling.MODE_MLP if mode == "mlp" else modeling.MODE_RIDGE
    params = modeling.train(feats, stats, ds, items=item_map,
                            images_only=images_only, mode=mode_name,
                            hidden_dim=hidden, epochs=epochs, base_lr=lr,
                            seed=seed)
    modeling.save_model(params, out)
    summary = {"mode": mode_name, "n_train": params.metadata.get("n_train"),
               "out": str(out)}
    click.echo(canonical_json(summary) if as_json
               else f"trained {mode_name} model on {summary['n_train']} items -> {out}")


@main.command(name="eval")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--items", "items_path", required=True, type=click.Path(exists=True))
@click.option("--stats", "stats_path", required=True, type=click.Path(exists=True))
@click.option("--split", "split_path", required=True, type=click.Path(exists=True))
@click.option("--subset", type=click.Choice(["train", "validation", "test"]),
              default="test")
@click.option("--jobs", type=int, default=None)
@click.option("--out", type=click.Path())
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
@handle_errors
def eval_cmd(ctx, model_path, items_path, stats_path, split_path, subset,
             jobs, out, as_json):
    """Correlation metrics for a trained model on one split subset."""
    jobs = int(_fallback(ctx, "jobs", jobs, 1))
    params = modeling.load_model(model_path)
    item_map = fileio.load_items(items_path)
    stats = fileio.load_item_stats(stats_path)
    ds = _load_split(split_path)
    feats = _features_for_items(item_map, getattr(ds, subset), jobs)
    report = modeling.evaluate(params, feats, stats, ds, items=item_map,
                               subset=subset)
    payload = canonical_json(report.to_json_obj())
    if out:
        Path(out).write_text(payload + "\n")
    click.echo(payload if as_json else
               f"{subset}: quality srcc={report.quality_srcc} lcc={report.quality_lcc} "
               f"({report.n_items} items)")


def _parse_region(text):
    if not text:
        return None
    parts = [int(p) for p in text.split(",")]
    if len(parts) != 4:
        raise ValidationError("--region must be x,y,w,h")
    return tuple(parts)


@main.command()
@click.argument("image", type=click.Path(exists=True))
@click.option("--model", "model_path", type=click.Path(exists=True))
@click.option("--region", default=None, help="x,y,w,h rectangle")
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
@handle_errors
def predict(ctx, image, model_path, region, as_json):
    """Quality and distortion probabilities for an image or region."""
    model_path = _fallback(ctx, "model", model_path, None)
    if not model_path:
        raise ValidationError("no model given (flag --model or config)")
    params = modeling.load_model(model_path)
    pixels = load_image(image)
    quality, dist = modeling.predict(params, pixels, _parse_region(region))
    obj = {"quality": quality, "bucket": quality_bucket(quality).value,
           "distortions": {c: float(d) for c, d in zip(CATEGORIES, dist)}}
    click.echo(canonical_json(obj) if as_json
               else f"quality {quality:.1f} ({obj['bucket']}); " + ", ".join(
                   f"{c}={v:.2f}" for c, v in obj["distortions"].items()))


@main.command(name="map")
@click.argument("image", type=click.Path(exists=True))
@click.option("--model", "model_path", type=click.Path(exists=True))
@click.option("--tile", type=int, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--kind", default="quality",
              type=click.Choice(["quality", *CATEGORIES]))
@click.option("--out", required=True, type=click.Path())
@click.option("--grid-json", "grid_path", type=click.Path())
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
@handle_errors
def map_cmd(ctx, image, model_path, tile, alpha, kind, out, grid_path, as_json):
    """Render a quality or per-distortion heatmap over the image."""
    model_path = _fallback(ctx, "model", model_path, None)
    if not model_path:
        raise ValidationError("no model given (flag --model or config)")
    tile = int(_fallback(ctx, "tile", tile, 64))
    alpha = float(_fallback(ctx, "alpha", alpha, maps.DEFAULT_ALPHA))
    params = modeling.load_model(model_path)
    pixels = load_image(image)
    qmap, dmaps = maps.all_maps(params, pixels, tile)
    smap = qmap if kind == "quality" else dmaps[kind]
    save_image(maps.render(smap, pixels, alpha=alpha), out)
    if grid_path:
        maps.save_map_json(smap, grid_path)
    info = {"kind": smap.kind, "tile": tile, "alpha": alpha,
            "rows": smap.grid.shape[0], "cols": smap.grid.shape[1]}
    click.echo(canonical_json(info) if as_json
               else f"{smap.kind} map {info['rows']}x{info['cols']} -> {out}")


@main.command()
@click.argument("image", type=click.Path(exists=True))
@click.option("--model", "model_path", type=click.Path(exists=True))
@click.option("--localized", is_flag=True)
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
@handle_errors
def feedback(ctx, image, model_path, localized, as_json):
    """Guided-photography feedback for one image."""
    model_path = _fallback(ctx, "model", model_path, None)
    if not model_path:
        raise ValidationError("no model given (flag --model or config)")
    params = modeling.load_model(model_path)
    pixels = load_image(image)
    quality, dist = modeling.predict(params, pixels)
    report = build_report(quality, dist)
    if localized:
        grids = region_grid_3x3(params, pixels)
        ranked_grids = {r.category: grids[r.category] for r in report.ranked
                        if r.category in grids}
        report = _replace(report,
                          localized=tuple(localized_feedback(ranked_grids)))
    obj = report.to_json_obj()
    if as_json:
        click.echo(canonical_json(obj))
    else:
        click.echo(f"quality {quality:.1f} -> {report.bucket}")
        for r in report.ranked:
            click.echo(f"  {r.category} ({r.severity}): {r.message}")
        for cat, where in report.localized:
            click.echo(f"  {cat} at {where}")


@main.command(name="select-frame")
@click.argument("frames_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--model", "model_path", type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
@handle_errors
def select_frame(ctx, frames_dir, model_path, as_json):
    """Pick the best frame from a directory (ordered by filename)."""
    model_path = _fallback(ctx, "model", model_path, None)
    if not model_path:
        raise ValidationError("no model given (flag --model or config)")
    params = modeling.load_model(model_path)
    paths = sorted(p for p in Path(frames_dir).iterdir()
                   if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
    if not paths:
        raise ValidationError(f"no frames in {frames_dir}")
    frames = [load_image(p) for p in paths]
    index, quality, bucket = select_best_frame(frames, params)
    obj = {"index": index, "file": paths[index].name,
           "quality": quality, "bucket": bucket}
    click.echo(canonical_json(obj) if as_json
               else f"best frame: {obj['file']} (#{index}), "
                    f"quality {quality:.1f} ({bucket})")


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8008)
@click.pass_context
@handle_errors
def serve(ctx, model_path, host, port):
    """Start the HTTP API."""
    import uvicorn

    from .service import create_app

    model_path = _fallback(ctx, "model", model_path, None)
    if not model_path:
        raise ValidationError("no model given (flag --model or config)")
    app = create_app(modeling.load_model(model_path))
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
