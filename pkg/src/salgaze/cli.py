"""Batch entry point: synth, saliency, features, crossval, ablate, report.

Run configuration is a YAML file (nested key/value sections, see README);
``--seed``, ``--out`` and ``--jobs`` override it. Exit codes are stable for
scripting: 0 success, 2 data/IO error, 3 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import yaml

from . import __version__
from .errors import ConfigError, DataError, PipelineError
from .features import (
    build_design_matrix,
    read_features_csv,
    write_features_csv,
    write_provenance,
)
from .gaze_data import load_fixation_table, load_manifest, validate_records
from .imaging import decode_image
from .learners import (
    CvReport,
    GbtConfig,
    SvmConfig,
    ablation_sweep,
    cross_validate,
    format_report_table,
)
from .metrics import METRIC_ORDER, MetricConfig
from .models import (
    ModelRegistry,
    SaliencyBank,
    compute_map,
    export_png16,
    read_smf1,
    write_smf1,
)
from .synth import ClassBehavior, SynthConfig, generate_dataset

EXIT_OK = 0
EXIT_DATA = 2
EXIT_CONFIG = 3


@dataclass
class RunConfig:
    seed: int
    out_dir: str = "out"
    cache_dir: str = "cache"
    manifest_path: str = ""
    fixations_path: str = ""
    registry: ModelRegistry = None
    metric_config: MetricConfig = None
    learner_kind: str = "svm"
    svm: SvmConfig = field(default_factory=SvmConfig)
    gbt: GbtConfig = field(default_factory=GbtConfig)
    protocol: str = "loo_subject"
    kfold_k: int = 10
    jobs: int = 1
    synth: SynthConfig = None
    raw: dict = field(default_factory=dict)

    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def learner_config(self):
        return self.svm if self.learner_kind == "svm" else self.gbt


def load_run_config(path, overrides=None) -> RunConfig:
    overrides = overrides or {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"bad YAML in {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping, got {type(raw).__name__}")

    seed = overrides.get("seed", raw.get("seed"))
    if seed is None:
        raise ConfigError("a seed is mandatory (config key 'seed' or --seed)")

    base = os.path.dirname(os.path.abspath(path))

    def _resolve(p):
        return p if not p or os.path.isabs(p) else os.path.join(base, p)

    models_raw = raw.get("models", {})
    ids = models_raw.get("registry") or list(ModelRegistry.default().model_ids)
    registry = ModelRegistry.from_ids(ids, models_raw.get("params"))

    metrics_raw = raw.get("metrics", {})
    metric_config = MetricConfig(
        enabled=tuple(metrics_raw.get("enabled", METRIC_ORDER)),
        n_splits=int(metrics_raw.get("n_splits", 100)),
        seed=int(seed),
    )

    learner_raw = raw.get("learner", {})
    kind = learner_raw.get("kind", "svm")
    if kind not in ("svm", "gbt"):
        raise ConfigError(f"learner kind must be 'svm' or 'gbt', got {kind!r}")
    svm_cfg = SvmConfig(
        c=float(learner_raw.get("c", 0.01)),
        degree=int(learner_raw.get("degree", 3)),
        gamma=learner_raw.get("gamma"),
        coef0=float(learner_raw.get("coef0", 1.0)),
    )
    gbt_cfg = GbtConfig(
        n_estimators=int(learner_raw.get("n_estimators", 100)),
        max_depth=int(learner_raw.get("max_depth", 3)),
        learning_rate=float(learner_raw.get("learning_rate", 0.1)),
    )

    protocol_raw = raw.get("protocol", {})
    synth_raw = raw.get("synth")
    synth_cfg = None
    if synth_raw:
        behaviors = tuple(
            ClassBehavior(str(c["name"]), str(c["kind"]), float(c["weight"]))
            for c in synth_raw.get("classes", [])
        )
        synth_cfg = SynthConfig(
            behaviors=behaviors,
            n_images=int(synth_raw.get("n_images", 30)),
            width=int(synth_raw.get("width", 128)),
            height=int(synth_raw.get("height", 128)),
            subjects_per_class=int(synth_raw.get("subjects_per_class", 20)),
            fixations_per_trial=int(synth_raw.get("fixations_per_trial", 8)),
            seed=int(synth_raw.get("seed", seed)),
        )

    data_raw = raw.get("data", {})
    return RunConfig(
        seed=int(seed),
        out_dir=_resolve(overrides.get("out") or raw.get("out_dir", "out")),
        cache_dir=_resolve(raw.get("cache_dir", "cache")),
        manifest_path=_resolve(data_raw.get("manifest", "")),
        fixations_path=_resolve(data_raw.get("fixations", "")),
        registry=registry,
        metric_config=metric_config,
        learner_kind=kind,
        svm=svm_cfg,
        gbt=gbt_cfg,
        protocol=protocol_raw.get("id", "loo_subject"),
        kfold_k=int(protocol_raw.get("k", 10)),
        jobs=int(overrides.get("jobs") or raw.get("jobs", 1)),
        synth=synth_cfg,
        raw=raw,
    )


def _atomic_write_bytes(path, blob: bytes) -> None:
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def _atomic_write_text(path, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


def _write_sidecar(cfg: RunConfig, path, extra=None) -> None:
    payload = {
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "salgaze_version": __version__,
    }
    payload.update(extra or {})
    _atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _content_hash(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()[:16]


def _params_hash(params: dict) -> str:
    return hashlib.sha256(json.dumps(params, sort_keys=True).encode("utf-8")).hexdigest()[:8]


def _cache_path(cfg: RunConfig, image_hash: str, model_id: str, params: dict) -> str:
    return os.path.join(cfg.cache_dir, f"{image_hash}_{model_id}_{_params_hash(params)}.smf1")


def _bank_for_image(cfg: RunConfig, manifest, image, png=False):
    """Compute (or load cached) maps for one image; returns (bank, n_computed)."""
    path = manifest.image_path(image.image_id)
    image_hash = _content_hash(path)
    img = None
    maps = []
    computed = 0
    for model_id, params in cfg.registry.entries:
        cpath = _cache_path(cfg, image_hash, model_id, params)
        if os.path.isfile(cpath):
            maps.append(read_smf1(cpath, model_id))
            continue
        if img is None:
            img = decode_image(path)
        try:
            smap = compute_map(model_id, params, img)
        except Exception as exc:
            raise DataError(
                f"model {model_id!r} failed for image {image.image_id!r}: {exc}"
            ) from exc
        os.makedirs(cfg.cache_dir, exist_ok=True)
        tmp = cpath + ".tmp"
        write_smf1(smap, tmp)
        os.replace(tmp, cpath)
        if png:
            export_png16(smap, cpath[:-5] + ".png")
        maps.append(smap)
        computed += 1
    return SaliencyBank(image_id=image.image_id, maps=tuple(maps)), computed


def _compute_banks(cfg: RunConfig, manifest, png=False):
    """Banks for every manifest image with bounded-width parallelism.

    Returns (banks, computed_count, failures); failures are per-image messages.
    """
    banks = {}
    failures = []
    computed = 0

    def work(image):
        return image.image_id, _bank_for_image(cfg, manifest, image, png=png)

    images = sorted(manifest.images, key=lambda im: im.image_id)
    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = [(im, pool.submit(work, im)) for im in images]
            results = []
            for im, fut in futures:
                try:
                    results.append(fut.result())
                except (DataError, OSError) as exc:
                    failures.append(f"{im.image_id}: {exc}")
            for iid, (bank, n) in results:
                banks[iid] = bank
                computed += n
    else:
        for im in images:
            try:
                iid, (bank, n) = work(im)
            except (DataError, OSError) as exc:
                failures.append(f"{im.image_id}: {exc}")
                continue
            banks[iid] = bank
            computed += n
    return banks, computed, failures


def cmd_synth(cfg: RunConfig) -> int:
    if cfg.synth is None:
        raise ConfigError("config has no 'synth' section")
    paths = generate_dataset(cfg.synth, cfg.out_dir)
    _write_sidecar(cfg, os.path.join(cfg.out_dir, "synth.provenance.json"),
                   {"synth_seed": cfg.synth.seed})
    print(f"wrote {paths['manifest']} and {paths['fixations']}")
    return EXIT_OK


def cmd_saliency(cfg: RunConfig, png=False) -> int:
    manifest = load_manifest(cfg.manifest_path)
    banks, computed, failures = _compute_banks(cfg, manifest, png=png)
    os.makedirs(cfg.out_dir, exist_ok=True)
    _write_sidecar(
        cfg,
        os.path.join(cfg.out_dir, "saliency.provenance.json"),
        {"images": len(banks), "maps_computed": computed,
         "registry_hash": cfg.registry.content_hash()},
    )
    print(f"saliency maps ready for {len(banks)} images ({computed} computed, rest cached)")
    if failures:
        for msg in failures:
            print(f"error: {msg}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def _build_matrix(cfg: RunConfig):
    manifest = load_manifest(cfg.manifest_path)
    records = load_fixation_table(cfg.fixations_path)
    validate_records(manifest, records)
    banks, _, failures = _compute_banks(cfg, manifest)
    if failures:
        raise DataError("saliency computation failed: " + "; ".join(failures))
    return build_design_matrix(
        manifest, records, banks, cfg.registry, cfg.metric_config, cfg.seed
    )


def cmd_features(cfg: RunConfig) -> int:
    matrix = _build_matrix(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    features_path = os.path.join(cfg.out_dir, "features.csv")
    tmp = features_path + ".tmp"
    write_features_csv(matrix, tmp)
    os.replace(tmp, features_path)
    prov = dict(matrix.provenance)
    prov["config_hash"] = cfg.config_hash()
    prov["salgaze_version"] = __version__
    sidecar = os.path.join(cfg.out_dir, "features.provenance.json")
    _atomic_write_text(sidecar, json.dumps(prov, indent=2, sort_keys=True) + "\n")
    print(f"wrote {features_path} ({len(matrix.rows)} rows, d={len(matrix.layout)})")
    return EXIT_OK


def _load_matrix(cfg: RunConfig):
    features_path = os.path.join(cfg.out_dir, "features.csv")
    sidecar = os.path.join(cfg.out_dir, "features.provenance.json")
    if not os.path.isfile(features_path):
        raise DataError(f"missing features file {features_path}; run 'features' first")
    provenance = {}
    if os.path.isfile(sidecar):
        with open(sidecar, "r", encoding="utf-8") as fh:
            provenance = json.load(fh)
    mode = provenance.get("mode", "subject-classification")
    return read_features_csv(features_path, mode, provenance)


def cmd_crossval(cfg: RunConfig) -> int:
    matrix = _load_matrix(cfg)
    report = cross_validate(
        matrix, cfg.protocol, cfg.learner_kind, cfg.learner_config(), cfg.seed, k=cfg.kfold_k
    )
    report.config.update({"config_hash": cfg.config_hash(), "salgaze_version": __version__})
    report_path = os.path.join(cfg.out_dir, "report.json")
    _atomic_write_text(report_path, report.to_json() + "\n")
    print(format_report_table(report))
    print(f"wrote {report_path}")
    return EXIT_OK


def cmd_ablate(cfg: RunConfig, sizes, repeats: int) -> int:
    matrix = _load_matrix(cfg)
    rows = ablation_sweep(
        matrix, sizes, repeats, cfg.protocol, cfg.learner_kind, cfg.learner_config(),
        cfg.seed, k=cfg.kfold_k,
    )
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, "ablation.csv")
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["size", "mean_accuracy", "std_accuracy"])
        for row in rows:
            writer.writerow([row["size"], repr(row["mean_accuracy"]), repr(row["std_accuracy"])])
    os.replace(tmp, path)
    _write_sidecar(cfg, os.path.join(cfg.out_dir, "ablation.provenance.json"),
                   {"sizes": list(sizes), "repeats": repeats})
    for row in rows:
        print(f"size {row['size']}: {100 * row['mean_accuracy']:.2f} "
              f"± {100 * row['std_accuracy']:.2f}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_report(report_path) -> int:
    if not os.path.isfile(report_path):
        raise DataError(f"missing report file {report_path}")
    with open(report_path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    report = CvReport(
        protocol=payload["protocol"],
        seed=payload["seed"],
        pooled=payload["pooled"],
        folds=payload.get("folds", []),
        skipped_folds=payload.get("skipped_folds", []),
        config=payload.get("config", {}),
    )
    print(format_report_table(report))
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are configuration errors
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="salgaze", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="YAML run config")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--jobs", type=int, default=None)

    add_common(sub.add_parser("synth", help="generate a synthetic dataset"))
    p_sal = sub.add_parser("saliency", help="compute and cache saliency maps")
    add_common(p_sal)
    p_sal.add_argument("--png", action="store_true", help="also export 16-bit PNGs")
    add_common(sub.add_parser("features", help="extract the design matrix"))
    add_common(sub.add_parser("crossval", help="run the configured protocol"))
    p_abl = sub.add_parser("ablate", help="sweep over model-subset sizes")
    add_common(p_abl)
    p_abl.add_argument("--sizes", default="1,2,3,4,5")
    p_abl.add_argument("--repeats", type=int, default=10)
    p_rep = sub.add_parser("report", help="render a CvReport JSON as a table")
    p_rep.add_argument("--report", required=True, help="path to report.json")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "report":
            return cmd_report(args.report)
        overrides = {"seed": args.seed, "out": args.out, "jobs": args.jobs}
        overrides = {k: v for k, v in overrides.items() if v is not None}
        cfg = load_run_config(args.config, overrides)
        if args.command == "synth":
            return cmd_synth(cfg)
        if args.command == "saliency":
            return cmd_saliency(cfg, png=args.png)
        if args.command == "features":
            return cmd_features(cfg)
        if args.command == "crossval":
            return cmd_crossval(cfg)
        if args.command == "ablate":
            sizes = [int(s) for s in str(args.sizes).split(",") if s.strip()]
            return cmd_ablate(cfg, sizes, args.repeats)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except PipelineError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
