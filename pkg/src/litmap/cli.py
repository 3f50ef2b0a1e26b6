"""litmap command line: synth, featurize, train, evaluate, select-features,
map, density.

Exit codes: 0 success, 1 usage/config error, 2 data validation error,
3 internal invariant failure.  Every command is deterministic given
(inputs, config, seed); output artifacts carry provenance (tool version,
seed, input digests) either embedded or as a .provenance.json sidecar.
"""

from __future__ import annotations

import argparse
import difflib
import json
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from . import features as feat
from . import geomap
from .config import ConfigError, RunConfig, load_config_file
from .ingest import (
    ParseError,
    ParseErrorLog,
    SchemaError,
    parse_cdr,
    parse_handsets,
    parse_labels,
    parse_topups,
    parse_towers,
)
from .learn import (
    cross_validate,
    evaluate,
    gcv_backward_eliminate,
    load_model,
    predict,
    save_model,
    split_indices,
    train,
    upsample_minority,
)
from .learn.boosting import CatalogMismatch
from .learn.metrics import accuracy_at
from .learn.selection import GcvError, named_importance
from .synthgen import generate_dataset, load_manifest
from .util import file_sha256

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class DataError(Exception):
    """Input data failed validation (exit code 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _log(message: str) -> None:
    print(f"[litmap] {message}")


def _require(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{what} not found: {p}")
    return p


def _provenance(command: str, seed: int, inputs: dict[str, Path], **extra) -> dict:
    doc = {
        "tool_version": __version__,
        "command": command,
        "seed": seed,
        "inputs": {name: file_sha256(p) for name, p in sorted(inputs.items())},
    }
    doc.update(extra)
    return doc


def _write_json(path: Path, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_labels(path: Path) -> dict[str, bool]:
    """subscriber_id -> is_illiterate (positive class)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return {lb.subscriber_id: not lb.literate for lb in parse_labels(fh, strict=True)}


def _load_matrix(features_path: Path, catalog_path: Optional[Path]):
    ids, x, names = feat.read_matrix_csv(features_path)
    if catalog_path is None:
        catalog_path = features_path.parent / "catalog.csv"
    catalog = feat.read_catalog_csv(_require(catalog_path, "catalog file"))
    if feat.catalog_names(catalog) != names:
        raise DataError("feature matrix columns do not match the catalog file")
    return ids, x, catalog


def _target_vector(ids, label_map) -> np.ndarray:
    missing = [sid for sid in ids if sid not in label_map]
    if missing:
        raise DataError(f"{len(missing)} matrix rows lack labels (first: {missing[0]!r})")
    return np.array([1.0 if label_map[sid] else 0.0 for sid in ids])


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_synth(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    manifest = generate_dataset(cfg.population_config(), out, cfg.profiles())
    counts = manifest["counts"]
    _log(f"wrote {counts['cdr_rows']} CDR rows, {counts['topup_rows']} top-ups, "
         f"{counts['subscribers']} subscribers ({counts['illiterate']} illiterate), "
         f"{counts['towers']} towers -> {out}")
    return EXIT_OK


def cmd_featurize(args, cfg: RunConfig) -> int:
    data = _require(args.data, "data directory")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    strict = bool(cfg["strict"])

    manifest_path = data / "manifest.json"
    if manifest_path.exists():
        manifest = load_manifest(data)
        from datetime import date

        window_start = date.fromisoformat(manifest["config"]["window_start"])
        window_days = manifest["config"]["observation_days"]
    else:
        window_start = cfg["window_start"]
        window_days = cfg["observation_days"]

    paths = {name: _require(data / f"{name}.csv", f"{name} file")
             for name in ("cdr", "topups", "towers", "handsets", "labels")}

    with open(paths["towers"], newline="", encoding="utf-8") as fh:
        towers = list(parse_towers(fh, strict=True))
    with open(paths["handsets"], newline="", encoding="utf-8") as fh:
        handsets = list(parse_handsets(fh, strict=True))
    with open(paths["labels"], newline="", encoding="utf-8") as fh:
        labels = list(parse_labels(fh, strict=True))

    catalog = feat.default_catalog()
    cdr_errors = ParseErrorLog()
    topup_errors = ParseErrorLog()
    with open(paths["cdr"], newline="", encoding="utf-8") as cdr_fh, \
         open(paths["topups"], newline="", encoding="utf-8") as topup_fh:
        events = parse_cdr(cdr_fh, errors=cdr_errors, strict=strict)
        topups = parse_topups(topup_fh, errors=topup_errors, strict=strict)
        try:
            ids, x, missing, encoders, home_towers = feat.extract_features(
                events, topups, labels, handsets, towers, window_start, window_days,
                catalog,
            )
        except KeyError as exc:
            raise DataError(str(exc)) from exc

    feat.write_matrix_csv(out / "features.csv", ids, x, catalog)
    feat.write_catalog_csv(out / "catalog.csv", catalog)
    feat.write_home_towers_csv(out / "home_towers.csv", home_towers)
    _write_json(out / "features.provenance.json", _provenance(
        "featurize", cfg["seed"], paths,
        window_start=window_start.isoformat(),
        window_days=window_days,
        catalog_version=feat.CATALOG_VERSION,
        rows=len(ids),
        cdr_parse_errors=cdr_errors.count,
        topup_parse_errors=topup_errors.count,
    ))
    if cdr_errors.count or topup_errors.count:
        _log(f"skipped {cdr_errors.count} bad CDR rows, {topup_errors.count} bad top-up rows")
    _log(f"wrote {len(ids)} x {len(catalog)} feature matrix -> {out / 'features.csv'}")
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    features_path = _require(args.features, "feature matrix")
    labels_path = _require(args.labels, "labels file")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg["seed"]
    threshold = args.threshold if args.threshold is not None else cfg["threshold"]

    ids, x, catalog = _load_matrix(features_path, args.catalog)
    y = _target_vector(ids, _read_labels(labels_path))
    kinds = feat.catalog_kinds(catalog)
    names = feat.catalog_names(catalog)
    hp = cfg.hyperparams()

    train_idx, test_idx = split_indices(y, cfg.split_spec())
    xb, yb = upsample_minority(x[train_idx], y[train_idx], seed)
    model = train(xb, yb, kinds=kinds, hp=hp, seed=seed,
                  feature_names=names, catalog_version=feat.CATALOG_VERSION)
    train_acc = accuracy_at(model, x[train_idx], y[train_idx], threshold)
    report = evaluate(model, x[test_idx], y[test_idx], threshold, train_accuracy=train_acc)

    prov = _provenance("train", seed,
                       {"features": features_path, "labels": labels_path},
                       hyperparameters=hp.to_dict(),
                       train_fraction=cfg["train_fraction"])
    save_model(model, out / "model.json", provenance=prov)
    _write_json(out / "eval.json", {"provenance": prov, "report": report.to_dict()})

    probs = predict(model, x)
    split_of = np.full(len(ids), "train", dtype=object)
    split_of[test_idx] = "test"
    import csv as _csv

    with open(out / "predictions.csv", "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh, lineterminator="\n")
        writer.writerow(["subscriber_id", "split", "label_illiterate", "probability"])
        for i, sid in enumerate(ids):
            writer.writerow([sid, split_of[i], str(int(y[i])), repr(float(probs[i]))])

    folds = args.folds if args.folds is not None else cfg["folds"]
    if folds:
        cv = cross_validate(x, y, kinds=kinds, k=folds, hp=hp, seed=seed,
                            threshold=threshold)
        _write_json(out / "cv.json", {"provenance": prov, **cv.to_dict()})
        _log(f"{folds}-fold CV mean accuracy {cv.mean_accuracy:.4f} "
             f"(std {cv.std_accuracy:.4f})")

    importance = named_importance(model)
    _write_json(out / "importance.json", {
        "provenance": prov,
        "split_gain": [{"feature": n, "score": s} for n, s in importance],
    })

    _log(f"test accuracy {report.accuracy:.4f} "
         f"(95% CI {report.accuracy_ci_low:.4f}-{report.accuracy_ci_high:.4f}), "
         f"sensitivity {report.sensitivity:.4f}, specificity {report.specificity:.4f}, "
         f"lift {report.lift:.2f}, train-test gap {report.train_test_gap:.4f}")
    _log(f"wrote model and reports -> {out}")
    return EXIT_OK


def cmd_evaluate(args, cfg: RunConfig) -> int:
    features_path = _require(args.features, "feature matrix")
    labels_path = _require(args.labels, "labels file")
    model = load_model(_require(args.model, "model file"))
    ids, x, catalog = _load_matrix(features_path, args.catalog)
    if model.feature_names is not None and model.feature_names != feat.catalog_names(catalog):
        raise DataError("model catalog does not match the feature file")
    y = _target_vector(ids, _read_labels(labels_path))
    threshold = args.threshold if args.threshold is not None else cfg["threshold"]
    report = evaluate(model, x, y, threshold)
    doc = {
        "provenance": _provenance("evaluate", cfg["seed"], {
            "features": features_path, "labels": labels_path, "model": Path(args.model),
        }),
        "report": report.to_dict(),
    }
    if args.out:
        _write_json(Path(args.out), doc)
        _log(f"wrote {args.out}")
    _log(f"accuracy {report.accuracy:.4f}, sensitivity {report.sensitivity}, "
         f"specificity {report.specificity}")
    return EXIT_OK


def cmd_select_features(args, cfg: RunConfig) -> int:
    features_path = _require(args.features, "feature matrix")
    labels_path = _require(args.labels, "labels file")
    ids, x, catalog = _load_matrix(features_path, args.catalog)
    y = _target_vector(ids, _read_labels(labels_path))
    max_steps = args.max_steps if args.max_steps is not None else cfg["elim_max_steps"]
    result = gcv_backward_eliminate(
        x, y,
        kinds=feat.catalog_kinds(catalog),
        hp=cfg.hyperparams(),
        seed=cfg["seed"],
        feature_names=feat.catalog_names(catalog),
        n_trees=cfg["elim_trees"],
        penalty=cfg["elim_penalty"],
        tolerance=cfg["elim_tolerance"],
        max_steps=max_steps,
        threads=cfg["threads"],
    )
    doc = {
        "provenance": _provenance("select-features", cfg["seed"], {
            "features": features_path, "labels": labels_path,
        }),
        **result.to_dict(),
    }
    _write_json(Path(args.out), doc)
    _log(f"eliminated {len(result.trace)} features, {len(result.selected)} retained "
         f"-> {args.out}")
    return EXIT_OK


def cmd_map(args, cfg: RunConfig) -> int:
    features_path = _require(args.features, "feature matrix")
    labels_path = _require(args.labels, "labels file")
    home_path = _require(args.home_towers, "home-towers file")
    towers_path = _require(args.towers, "towers file")
    model = load_model(_require(args.model, "model file"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    ids, x, catalog = _load_matrix(features_path, args.catalog)
    if model.feature_names is not None and model.feature_names != feat.catalog_names(catalog):
        raise DataError("model catalog does not match the feature file")
    label_map = _read_labels(labels_path)
    y = _target_vector(ids, label_map)
    home_towers = feat.read_home_towers_csv(home_path)
    with open(towers_path, newline="", encoding="utf-8") as fh:
        towers = {t.tower_id: t for t in parse_towers(fh, strict=True)}

    probs = predict(model, x)
    predictions = {}
    illiterate = {}
    homes = {}
    unmapped = 0
    for i, sid in enumerate(ids):
        tid = home_towers.get(sid)
        if tid is None:
            unmapped += 1
            continue
        predictions[sid] = float(probs[i])
        illiterate[sid] = bool(y[i])
        homes[sid] = tid

    try:
        estimates = geomap.aggregate_towers(
            predictions, illiterate, homes, towers, min_count=cfg["min_count"]
        )
        grid = geomap.GridSpec.from_towers(
            list(towers.values()),
            cell_size_deg=cfg["cell_size_deg"],
            margin_deg=cfg["margin_deg"],
            power=cfg["idw_power"],
            k_neighbors=cfg["idw_neighbors"],
            exact_radius_km=cfg["exact_radius_km"],
            max_distance_km=cfg["max_distance_km"],
        )
        predicted = geomap.idw_interpolate(estimates, grid, "predicted_rate")
        actual = geomap.idw_interpolate(estimates, grid, "actual_rate")
        comparison = geomap.compare_surfaces(predicted, actual)
    except ValueError as exc:
        raise DataError(str(exc)) from exc

    prov = _provenance("map", cfg["seed"], {
        "features": features_path, "labels": labels_path,
        "home_towers": home_path, "towers": towers_path, "model": Path(args.model),
    }, grid=grid.to_dict(), min_count=cfg["min_count"])

    ext = "geojson" if args.format == "geojson" else "csv"
    geomap.export_surface(predicted, out / f"predicted_surface.{ext}", args.format,
                          provenance=prov if ext == "geojson" else None)
    geomap.export_surface(actual, out / f"actual_surface.{ext}", args.format,
                          provenance=prov if ext == "geojson" else None)
    geomap.write_tower_estimates_csv(out / "tower_estimates.csv", estimates)
    _write_json(out / "comparison.json", {
        "provenance": prov,
        "comparison": comparison.to_dict(),
        "scored_subscribers": len(predictions),
        "unmapped_subscribers": unmapped,
    })
    corr = comparison.correlation
    _log(f"surfaces over {grid.n_rows}x{grid.n_cols} cells; predicted-vs-actual "
         f"correlation {corr if corr is None else f'{corr:.3f}'} -> {out}")
    return EXIT_OK


def cmd_density(args, cfg: RunConfig) -> int:
    features_path = _require(args.features, "feature matrix")
    labels_path = _require(args.labels, "labels file")
    ids, x, catalog = _load_matrix(features_path, args.catalog)
    names = feat.catalog_names(catalog)
    if args.feature not in names:
        near = difflib.get_close_matches(args.feature, names, n=3)
        hint = f"; did you mean {', '.join(near)}?" if near else ""
        raise ConfigError(f"unknown feature {args.feature!r}{hint}")
    y = _target_vector(ids, _read_labels(labels_path))
    try:
        edges, ill, lit = feat.feature_density(
            x, y.astype(bool), catalog, args.feature, args.bins, log_transform=args.log
        )
    except ValueError as exc:
        raise DataError(str(exc)) from exc

    import csv as _csv

    out = Path(args.out)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin_low", "bin_high", "illiterate_density", "literate_density"])
        for i in range(len(ill)):
            writer.writerow([repr(float(edges[i])), repr(float(edges[i + 1])),
                             repr(float(ill[i])), repr(float(lit[i]))])
    _write_json(out.with_suffix(out.suffix + ".provenance.json"), _provenance(
        "density", cfg["seed"], {"features": features_path, "labels": labels_path},
        feature=args.feature, bins=args.bins, log=bool(args.log),
    ))
    _log(f"wrote density histogram -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser wiring
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="litmap", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--seed", type=int, help="override the root seed")
    parser.add_argument("--threads", type=int, help="override worker thread count")
    parser.add_argument("--strict", action="store_true",
                        help="abort on the first malformed input row")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("featurize", help="compute the feature matrix")
    p.add_argument("--data", required=True, help="directory with the five CSV files")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="split, up-sample, train, evaluate")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--catalog", help="catalog CSV (default: sibling of features)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--folds", type=int, help="also run k-fold cross-validation")
    p.add_argument("--threshold", type=float)

    p = sub.add_parser("evaluate", help="evaluate a saved model on a matrix")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--catalog")
    p.add_argument("--out", help="eval report JSON path")
    p.add_argument("--threshold", type=float)

    p = sub.add_parser("select-features", help="GCV backward elimination")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--catalog")
    p.add_argument("--out", required=True, help="selection report JSON path")
    p.add_argument("--max-steps", type=int, dest="max_steps")

    p = sub.add_parser("map", help="tower aggregation + IDW surfaces")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--home-towers", required=True, dest="home_towers")
    p.add_argument("--towers", required=True)
    p.add_argument("--catalog")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", choices=["geojson", "csv"], default="geojson")

    p = sub.add_parser("density", help="per-class feature density histogram")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--catalog")
    p.add_argument("--feature", required=True)
    p.add_argument("--bins", type=int, default=30)
    p.add_argument("--log", action="store_true", help="natural-log transform")
    p.add_argument("--out", required=True, help="histogram CSV path")

    return parser


_COMMANDS = {
    "synth": cmd_synth,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "select-features": cmd_select_features,
    "map": cmd_map,
    "density": cmd_density,
}


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config_file(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg.set("seed", str(args.seed))
        if args.threads is not None:
            cfg.set("threads", str(args.threads))
        if args.strict:
            cfg.set("strict", "1")
        return _COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"litmap: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SchemaError, ParseError, DataError, CatalogMismatch, GcvError) as exc:
        print(f"litmap: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AssertionError as exc:
        print(f"litmap: internal invariant failure: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
