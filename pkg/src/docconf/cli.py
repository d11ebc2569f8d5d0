"""Command-line interface: ``docconf <command> [options]``.

Every command reads its options from flags, then from the ``--config`` file
(JSON or YAML, keys spelled like the long flags with underscores), then from
built-in defaults. Output files start with ``#`` comment lines naming the
tool version, a digest of the resolved options and the seed, so reruns with
the same inputs produce identical bytes.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from functools import partial
from pathlib import Path
from typing import Callable, Optional, Sequence

import yaml

from . import __version__
from . import estimators as est
from . import evaluation as ev
from . import forest
from .active_learning import ORACLE, RANDOM, Policy, select, simulate
from .estimators import ConfidenceScore, DropoutEnsemble, Estimator
from .features import FEATURE_NAMES, FeatureConfig, feature_vector
from .io import (
    Manifest,
    ManifestEntry,
    load_manifest,
    load_polygons,
    load_probability_map,
    read_csv,
    save_manifest,
    save_polygons,
    save_probability_map,
    write_csv,
    config_digest,
)
from .metrics import DEFAULT_IOU_THRESHOLDS, GroundTruth, ImageScore, MapConfig, image_score
from .postprocess import PostprocessConfig, Prediction, extract_objects
from .synthetic import (
    CorpusConfig,
    ErrorMixture,
    SyntheticDetectorConfig,
    ensemble_maps,
    make_corpus,
    make_ground_truth,
    severities,
)

log = logging.getLogger("docconf")

EXIT_OK = 0
EXIT_INPUT = 2

DEFAULTS = {
    "threshold": 0.5,
    "connectivity": 8,
    "min_area": 50,
    "iou_thresholds": list(DEFAULT_IOU_THRESHOLDS),
    "bins": 10,
    "n_trees": 100,
    "max_depth": None,
    "min_samples_split": 2,
    "min_samples_leaf": 1,
    "features_per_split": None,
    "grid": "ranks",
    "bootstrap": 100,
    "metric": "map",
    "estimator": "dap",
    "policy": "budget:5",
    "iterations": 8,
    "n_images": 20,
    "n_pool": 100,
    "n_test": 100,
    "ensemble_size": 10,
    "height": 64,
    "width": 80,
    "layout": "pages",
    "detector": {},
    "jobs": 1,
    "seed": None,
}


class InputError(ValueError):
    pass


# -- option plumbing -------------------------------------------------------


def _load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    text = Path(path).read_text(encoding="utf-8")
    data = yaml.safe_load(text) if Path(path).suffix.lower() in (".yaml", ".yml") else json.loads(text)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise InputError(f"{path}: config file must hold a mapping")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def _resolve(args: argparse.Namespace, names: Sequence[str]) -> dict:
    """Flags, then config file, then defaults."""
    out = {}
    for name in names:
        value = getattr(args, name, None)
        if value is None:
            value = args.config_values.get(name, DEFAULTS.get(name))
        out[name] = value
    return out


def _require_seed(opts: dict) -> int:
    if opts.get("seed") is None:
        raise InputError("this command is randomized: pass --seed or set 'seed' in the config file")
    return int(opts["seed"])


def _meta(command: str, opts: dict, **extra) -> dict:
    meta = {"tool": f"docconf {__version__}", "command": command, "config": config_digest(opts)}
    if opts.get("seed") is not None:
        meta["seed"] = opts["seed"]
    meta.update(extra)
    return meta


def _postprocess(opts: dict) -> PostprocessConfig:
    return PostprocessConfig(float(opts["threshold"]), int(opts["connectivity"]), int(opts["min_area"]))


def _map_config(opts: dict) -> MapConfig:
    return MapConfig(tuple(opts["iou_thresholds"]))


def _detector(opts: dict) -> SyntheticDetectorConfig:
    raw = dict(opts.get("detector") or {})
    mixture = raw.pop("mixture", {}) or {}
    names = {f.name for f in fields(SyntheticDetectorConfig)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise InputError(f"unknown detector settings: {unknown}")
    if "blob_size" in mixture:
        mixture["blob_size"] = tuple(mixture["blob_size"])
    raw.setdefault("ensemble_size", int(opts.get("ensemble_size") or DEFAULTS["ensemble_size"]))
    return SyntheticDetectorConfig(mixture=ErrorMixture(**mixture), **raw)


def _pmap(fn: Callable, items: Sequence, jobs: int) -> list:
    """``[fn(x) for x in items]``, optionally across processes; order is kept."""
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def _safe_name(image_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", image_id)


# -- per-image workers (module level so they pickle) -----------------------


def _check_scene(scene, entry: ManifestEntry, source) -> None:
    if scene.image_id != entry.image_id:
        raise InputError(f"{source}: image id {scene.image_id!r} does not match manifest entry {entry.image_id!r}")
    if (scene.height, scene.width) != (entry.height, entry.width):
        raise InputError(
            f"{source}: size {scene.height}x{scene.width} does not match manifest {entry.height}x{entry.width}"
        )


def _member(entry: ManifestEntry, k: int, pp: PostprocessConfig) -> Prediction:
    if entry.predictions:
        p = load_polygons(entry.predictions[k], kind="prediction")
        _check_scene(p, entry, entry.predictions[k])
        return p
    m = load_probability_map(entry.maps[k])
    p = extract_objects(m, pp, entry.image_id)
    _check_scene(p, entry, entry.maps[k])
    return p


def _ground_truth(entry: ManifestEntry) -> GroundTruth:
    g = load_polygons(entry.ground_truth, kind="ground_truth")
    _check_scene(g, entry, entry.ground_truth)
    return g


def _extract_entry(entry: ManifestEntry, pp: PostprocessConfig, out_dir: Path, meta: dict):
    rows, paths = [], []
    for k, map_path in enumerate(entry.maps):
        p = extract_objects(load_probability_map(map_path), pp, entry.image_id)
        _check_scene(p, entry, map_path)
        path = out_dir / "predictions" / f"{_safe_name(entry.image_id)}_m{k:02d}.json"
        save_polygons(p, path, meta)
        rows.append((entry.image_id, k, len(p), p.filtered_pixels))
        paths.append(path)
    return rows, tuple(paths)


def _score_entry(entry: ManifestEntry, pp: PostprocessConfig, map_cfg: MapConfig) -> ImageScore:
    return image_score(_member(entry, 0, pp), _ground_truth(entry), map_cfg)


def _confidence_entry(entry, estimator: Estimator, pp, map_cfg, model) -> ConfidenceScore:
    if estimator in (Estimator.DAP, Estimator.DOV):
        e = DropoutEnsemble(entry.image_id, tuple(_member(entry, k, pp) for k in range(entry.n_members)))
        return est.dap(e, map_cfg) if estimator is Estimator.DAP else est.dov(e)
    p = _member(entry, 0, pp)
    return est.pce(p) if estimator is Estimator.PCE else est.map_rfr(model, p)


def _features_entry(entry, pp, fcfg: FeatureConfig):
    return feature_vector(_member(entry, 0, pp), fcfg)


def _rfr_entry(entry, pp, fcfg: FeatureConfig, map_cfg: MapConfig):
    p = _member(entry, 0, pp)
    return feature_vector(p, fcfg), image_score(p, _ground_truth(entry), map_cfg).map


def _require_ground_truth(m: Manifest) -> None:
    missing = [e.image_id for e in m.entries if e.ground_truth is None]
    if missing:
        raise InputError(f"{m.path}: ground truth required but missing for {missing}")


# -- commands --------------------------------------------------------------

PP_OPTS = ("threshold", "connectivity", "min_area")


def cmd_synth(args) -> int:
    opts = _resolve(args, ("seed", "n_images", "ensemble_size", "height", "width", "layout", "detector"))
    seed = _require_seed(opts)
    det = _detector(opts)
    corpus = CorpusConfig(int(opts["height"]), int(opts["width"]), opts["layout"])
    out = Path(args.out)
    (out / "maps").mkdir(parents=True, exist_ok=True)
    (out / "gt").mkdir(parents=True, exist_ok=True)
    meta = _meta("synth", opts)
    gts = [make_ground_truth(f"img-{i:05d}", corpus, seed) for i in range(int(opts["n_images"]))]
    sev = severities(gts, seed)
    entries = []
    for g in gts:
        name = _safe_name(g.image_id)
        gt_path = out / "gt" / f"{name}.json"
        save_polygons(g, gt_path, meta)
        maps = ensemble_maps(g, sev[g.image_id], det.ensemble_size, det.mixture, (seed, "synth"), det.dropout_scale)
        paths = []
        for k, m in enumerate(maps):
            path = out / "maps" / f"{name}_m{k:02d}.pmap"
            save_probability_map(m, path)
            paths.append(path)
        entries.append(ManifestEntry(g.image_id, g.height, g.width, tuple(paths), gt_path))
    save_manifest(entries, out / "manifest.json", meta)
    write_csv(out / "severity.csv", ("image_id", "severity"), [(g.image_id, sev[g.image_id]) for g in gts], meta)
    print(f"wrote {len(entries)} images with {det.ensemble_size} maps each to {out}")
    return EXIT_OK


def cmd_extract(args) -> int:
    opts = _resolve(args, PP_OPTS)
    pp = _postprocess(opts)
    m = load_manifest(args.manifest)
    out = Path(args.out)
    (out / "predictions").mkdir(parents=True, exist_ok=True)
    missing = [e.image_id for e in m.entries if not e.maps]
    if missing:
        raise InputError(f"{m.path}: no probability maps for {missing}")
    meta = _meta("extract", opts)
    results = _pmap(partial(_extract_entry, pp=pp, out_dir=out, meta=meta), m.entries, _jobs(args))
    entries = [
        ManifestEntry(e.image_id, e.height, e.width, e.maps, e.ground_truth, paths)
        for e, (_, paths) in zip(m.entries, results)
    ]
    save_manifest(entries, out / "manifest.json", meta)
    rows = [r for rs, _ in results for r in rs]
    write_csv(out / "extract.csv", ("image_id", "member", "n_objects", "filtered_pixels"), rows, meta)
    print(f"extracted {len(rows)} predictions for {len(entries)} images into {out}")
    return EXIT_OK


def cmd_score(args) -> int:
    opts = _resolve(args, PP_OPTS + ("iou_thresholds",))
    m = load_manifest(args.manifest)
    _require_ground_truth(m)
    scores = _pmap(partial(_score_entry, pp=_postprocess(opts), map_cfg=_map_config(opts)), m.entries, _jobs(args))
    n = len(scores)
    mean_iou = sum(s.pixel_iou for s in scores) / n
    mean_map = sum(s.map for s in scores) / n
    meta = _meta("score", opts, mean_iou=mean_iou, mean_map=mean_map)
    write_csv(args.out, ("image_id", "pixel_iou", "map"), [(s.image_id, s.pixel_iou, s.map) for s in scores], meta)
    print(f"{n} images: mean IoU {mean_iou:.4f}, mean mAP {mean_map:.4f}")
    return EXIT_OK


def cmd_confidence(args) -> int:
    opts = _resolve(args, PP_OPTS + ("iou_thresholds", "estimator"))
    estimator = Estimator(opts["estimator"])
    m = load_manifest(args.manifest)
    model = None
    if estimator is Estimator.MAP_RFR:
        if not args.model:
            raise InputError("map-rfr needs --model")
        model = forest.load(args.model)
        opts["model"] = model.fingerprint
    if estimator in (Estimator.DAP, Estimator.DOV):
        short = [e.image_id for e in m.entries if e.n_members < 2]
        if short:
            raise InputError(f"{estimator.value} needs ensembles of at least 2 maps; single map for {short}")
    work = partial(_confidence_entry, estimator=estimator, pp=_postprocess(opts), map_cfg=_map_config(opts), model=model)
    scores = _pmap(work, m.entries, _jobs(args))
    rows = [(s.image_id, estimator.value, s.value, s.higher_is_confident, s.note) for s in scores]
    write_csv(args.out, ("image_id", "estimator", "value", "higher_is_confident", "note"), rows,
              _meta("confidence", opts))
    print(f"scored {len(rows)} images with {estimator.value}")
    return EXIT_OK


def cmd_features(args) -> int:
    opts = _resolve(args, PP_OPTS + ("bins",))
    fcfg = FeatureConfig(bins=int(opts["bins"]))
    m = load_manifest(args.manifest)
    vectors = _pmap(partial(_features_entry, pp=_postprocess(opts), fcfg=fcfg), m.entries, _jobs(args))
    columns = ["image_id"] + [f"{name}_{b}" for name in FEATURE_NAMES for b in range(fcfg.bins)]
    rows = [(v.image_id, *v.values) for v in vectors]
    write_csv(args.out, columns, rows, _meta("features", opts, features=fcfg.fingerprint()))
    return EXIT_OK


FOREST_OPTS = ("n_trees", "max_depth", "min_samples_split", "min_samples_leaf", "features_per_split")


def _rfr_data(args, opts, fcfg):
    m = load_manifest(args.manifest)
    _require_ground_truth(m)
    work = partial(_rfr_entry, pp=_postprocess(opts), fcfg=fcfg, map_cfg=_map_config(opts))
    rows = _pmap(work, m.entries, _jobs(args))
    return forest.RegressionDataset.from_vectors([r[0] for r in rows], [r[1] for r in rows])


def cmd_train_rfr(args) -> int:
    opts = _resolve(args, PP_OPTS + ("iou_thresholds", "bins", "seed") + FOREST_OPTS)
    seed = _require_seed(opts)
    fcfg = FeatureConfig(bins=int(opts["bins"]))
    data = _rfr_data(args, opts, fcfg)
    params = forest.ForestParams(
        n_trees=int(opts["n_trees"]),
        max_depth=opts["max_depth"],
        min_samples_split=int(opts["min_samples_split"]),
        min_samples_leaf=int(opts["min_samples_leaf"]),
        features_per_split=opts["features_per_split"],
        seed=seed,
    )
    model = forest.fit(data, params, fcfg)
    forest.save(model, args.out)
    print(f"trained {params.n_trees} trees on {len(data)} images; out-of-bag MSE {model.oob_mse:.6f}")
    return EXIT_OK


def cmd_eval_rfr(args) -> int:
    opts = _resolve(args, PP_OPTS + ("iou_thresholds",))
    model = forest.load(args.model)
    fcfg = model.feature_config or FeatureConfig()
    opts["model"] = model.fingerprint
    data = _rfr_data(args, opts, fcfg)
    pred = forest.predict_many(model, data.X)
    err = float(((pred - data.y) ** 2).mean())
    rows = [(i, p, y) for i, p, y in zip(data.image_ids, pred, data.y)]
    write_csv(args.out, ("image_id", "predicted_map", "true_map"), rows, _meta("eval-rfr", opts, mse=err))
    print(f"MSE {err:.6f} over {len(rows)} images")
    return EXIT_OK


def _parse_grid(text: str, scores: Sequence[ConfidenceScore]) -> list[float]:
    if text == "dap":
        return ev.dap_grid()
    if text == "dov":
        return ev.dov_grid()
    if text == "ranks":
        return ev.rank_grid(scores)
    parts = text.split(":")
    if len(parts) != 3:
        raise InputError(f"--grid must be dap, dov, ranks or start:stop:step, got {text!r}")
    start, stop, step = (float(p) for p in parts)
    if step == 0 or (stop - start) / step < 0:
        raise InputError(f"grid step {step} never reaches {stop} from {start}")
    n = int(round((stop - start) / step))
    return [round(start + i * step, 12) for i in range(n + 1)]


def _read_confidence(path) -> list[ConfidenceScore]:
    _, rows = read_csv(path)
    try:
        return [
            ConfidenceScore(r["image_id"], r["estimator"], float(r["value"]),
                            r["higher_is_confident"] == "true", r.get("note") or "")
            for r in rows
        ]
    except KeyError as exc:
        raise InputError(f"{path}: missing column {exc}") from None


def _read_scores(path) -> list[ImageScore]:
    _, rows = read_csv(path)
    try:
        return [ImageScore(r["image_id"], float(r["pixel_iou"]), float(r["map"])) for r in rows]
    except KeyError as exc:
        raise InputError(f"{path}: missing column {exc}") from None


def cmd_reject_curve(args) -> int:
    opts = _resolve(args, PP_OPTS + ("iou_thresholds", "grid", "bootstrap", "metric", "seed"))
    n_boot = int(opts["bootstrap"])
    seed = _require_seed(opts) if n_boot > 0 else opts["seed"]
    metric = {"map": "map", "iou": "pixel_iou"}[opts["metric"]]
    if (args.scores is None) == (args.manifest is None):
        raise InputError("pass exactly one of --scores or --manifest")
    scores = _read_confidence(args.confidence)
    if args.scores is not None:
        image_scores = _read_scores(args.scores)
    else:
        m = load_manifest(args.manifest)
        _require_ground_truth(m)
        work = partial(_score_entry, pp=_postprocess(opts), map_cfg=_map_config(opts))
        image_scores = _pmap(work, m.entries, _jobs(args))
    grid = _parse_grid(str(opts["grid"]), scores)
    meta = _meta("reject-curve", opts)
    curve = ev.reject_curve(scores, image_scores, grid, metric)
    prefix = args.out
    write_csv(f"{prefix}_curve.csv", ("threshold", "rejection_rate", "metric", "n_remaining"),
              [(p.threshold, p.rejection_rate, p.metric, p.n_remaining) for p in curve.points],
              dict(meta, estimator=curve.estimator, auc=ev.area_under_curve(curve)))
    if n_boot > 0:
        columns = ("rejection_rate", "p10", "median", "p90", "n_curves")
        band = ev.bootstrap_band(scores, image_scores, grid, n_boot, seed, metric)
        write_csv(f"{prefix}_band.csv", columns,
                  zip(band.rates, band.p10, band.median, band.p90, band.n_curves), meta)
        rnd = ev.random_baseline(image_scores, n_boot, seed, metric)
        write_csv(f"{prefix}_random.csv", columns,
                  zip(rnd.rates, rnd.p10, rnd.median, rnd.p90, rnd.n_curves), meta)
    print(f"{len(curve.points)} curve points written to {prefix}_curve.csv")
    return EXIT_OK


def cmd_al_select(args) -> int:
    opts = _resolve(args, ("policy",))
    policy = Policy.parse(str(opts["policy"]))
    scores = _read_confidence(args.confidence)
    chosen = select(scores, policy)
    by_id = {s.image_id: s.value for s in scores}
    rows = [(rank, i, by_id[i]) for rank, i in enumerate(chosen.ids)]
    write_csv(args.out, ("rank", "image_id", "value"), rows,
              _meta("al-select", opts, policy=str(policy), status=chosen.status))
    print(f"selected {len(rows)} of {len(scores)} images ({chosen.status})")
    return EXIT_OK


def cmd_al_simulate(args) -> int:
    names = ("seed", "iterations", "estimator", "policy", "n_pool", "n_test", "height", "width", "layout",
             "detector", "ensemble_size", "iou_thresholds")
    opts = _resolve(args, names)
    seed = _require_seed(opts)
    det = _detector(opts)
    corpus_cfg = CorpusConfig(int(opts["height"]), int(opts["width"]), opts["layout"])
    corpus = make_corpus(int(opts["n_pool"]), int(opts["n_test"]), det, corpus_cfg, seed)
    estimator = opts["estimator"]
    if estimator not in (ORACLE, RANDOM):
        estimator = Estimator(estimator)
    state = simulate(corpus, det, estimator, Policy.parse(str(opts["policy"])), int(opts["iterations"]),
                     _map_config(opts), seed)
    columns = ("iteration", "estimator", "policy", "n_selected", "cumulative_images", "test_iou", "test_map")
    rows = [(r.iteration, r.estimator, r.policy, r.n_selected, r.cumulative_images, r.test_iou, r.test_map)
            for r in state.log]
    write_csv(args.out, columns, rows, _meta("al-simulate", opts))
    last = state.log[-1]
    print(f"{last.iteration} iterations, {last.cumulative_images} labelled, test mAP {last.test_map:.4f}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------


def _jobs(args) -> int:
    jobs = args.jobs if args.jobs is not None else args.config_values.get("jobs", DEFAULTS["jobs"])
    if int(jobs) < 1:
        raise InputError("--jobs must be >= 1")
    return int(jobs)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON or YAML file with option values")
    common.add_argument("--jobs", type=int, help="worker processes for per-image work (default 1)")
    seeded = argparse.ArgumentParser(add_help=False)
    seeded.add_argument("--seed", type=int)
    pp = argparse.ArgumentParser(add_help=False)
    pp.add_argument("--threshold", type=float, help="binarization threshold (default 0.5)")
    pp.add_argument("--connectivity", type=int, choices=(4, 8), help="pixel connectivity (default 8)")
    pp.add_argument("--min-area", dest="min_area", type=int, help="smallest kept object in pixels (default 50)")
    manifest = argparse.ArgumentParser(add_help=False)
    manifest.add_argument("--manifest", required=True)
    forest_p = argparse.ArgumentParser(add_help=False)
    forest_p.add_argument("--n-trees", dest="n_trees", type=int)
    forest_p.add_argument("--max-depth", dest="max_depth", type=int)
    forest_p.add_argument("--min-samples-split", dest="min_samples_split", type=int)
    forest_p.add_argument("--min-samples-leaf", dest="min_samples_leaf", type=int)
    forest_p.add_argument("--features-per-split", dest="features_per_split", type=int)

    parser = argparse.ArgumentParser(prog="docconf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"docconf {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, parents, help_text):
        p = sub.add_parser(name, parents=[common, *parents], help=help_text)
        p.set_defaults(func=fn)
        return p

    p = add("synth", cmd_synth, [seeded], "generate a synthetic corpus of GT, maps and ensembles")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-images", dest="n_images", type=int)
    p.add_argument("--ensemble-size", dest="ensemble_size", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--layout", choices=("pages", "lines"))

    p = add("extract", cmd_extract, [manifest, pp], "turn probability maps into polygon predictions")
    p.add_argument("--out", required=True, help="output directory")

    p = add("score", cmd_score, [manifest, pp], "per-image pixel IoU and mAP against ground truth")
    p.add_argument("--out", required=True)

    p = add("confidence", cmd_confidence, [manifest, pp], "confidence score per image")
    p.add_argument("--estimator", choices=[e.value for e in Estimator])
    p.add_argument("--model", help="mAP-RFR model file (map-rfr only)")
    p.add_argument("--out", required=True)

    p = add("features", cmd_features, [manifest, pp], "object statistics histograms")
    p.add_argument("--bins", type=int)
    p.add_argument("--out", required=True)

    p = add("train-rfr", cmd_train_rfr, [manifest, pp, seeded, forest_p], "fit the mAP regressor")
    p.add_argument("--bins", type=int)
    p.add_argument("--out", required=True, help="model file")

    p = add("eval-rfr", cmd_eval_rfr, [manifest, pp], "mean squared error of a trained regressor")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)

    p = add("reject-curve", cmd_reject_curve, [pp, seeded], "reject curve, bootstrap band and random baseline")
    p.add_argument("--confidence", required=True, help="CSV written by 'confidence'")
    p.add_argument("--scores", help="CSV written by 'score'")
    p.add_argument("--manifest", help="score against ground truth instead of reading --scores")
    p.add_argument("--grid", help="dap, dov, ranks or start:stop:step (default ranks)")
    p.add_argument("--bootstrap", type=int, help="resamples and random orderings (default 100, 0 disables)")
    p.add_argument("--metric", choices=("map", "iou"))
    p.add_argument("--out", required=True, help="output prefix")

    p = add("al-select", cmd_al_select, [], "pick images to annotate")
    p.add_argument("--confidence", required=True)
    p.add_argument("--policy", help="threshold:T or budget:K")
    p.add_argument("--out", required=True)

    p = add("al-simulate", cmd_al_simulate, [seeded], "synthetic active-learning run")
    p.add_argument("--iterations", type=int)
    p.add_argument("--estimator", choices=[e.value for e in Estimator] + [ORACLE, RANDOM])
    p.add_argument("--policy", help="threshold:T or budget:K")
    p.add_argument("--n-pool", dest="n_pool", type=int)
    p.add_argument("--n-test", dest="n_test", type=int)
    p.add_argument("--out", required=True, help="al_log.csv path")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.config_values = _load_config(args.config)
        return args.func(args)
    except (ValueError, OSError, yaml.YAMLError) as exc:
        print(f"docconf {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
