"""Command-line entry point exposing every pipeline stage.

Exit codes: 0 success, 1 domain error (diagnostic on stderr), 2 usage
error. Subcommands accept ``--seed`` wherever randomness exists, and any
two invocations with identical flags, inputs, and seeds produce
byte-identical output files (timing columns stay zero unless ``--timing``
is given; ``bench`` output is measurement by nature).

Config files are JSON with optional ``model`` / ``train`` / ``pipeline`` /
``augment`` sections mirroring the dataclass field names; command-line
flags override file values.
"""

import argparse
import json
import os
import sys
import time

from .errors import ShapeError, SignkitError
from .keypoints import read_manifest, read_sequence, validate_manifest
from .metrics import confusion_to_csv, evaluate, report_to_dict, report_to_json
from .model import (
    ModelSpec,
    build_model,
    load_model,
    read_model_header,
    save_model,
    verify_reference_architecture,
)
from .preprocess import (
    AugmentSpec,
    KalmanSpec,
    NormalizationSpec,
    PipelineConfig,
    expand_dataset,
    load_manifest_tensors,
    preprocess_pipeline,
)
from .checkpoint import save_tensor
from .stream import StreamConfig, bench_latency, infer_file
from .synth import separability_oracle, synth_dataset
from .train import (
    TrainConfig,
    grid_search,
    history_to_csv,
    kfold_cv,
    stratified_split,
    train,
)


def _load_config_file(path):
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _pipeline_config(section: dict) -> PipelineConfig:
    keep = section.get("keep_blocks")
    return PipelineConfig(
        norm=NormalizationSpec(**section.get("norm", {})),
        kalman=KalmanSpec(**section.get("kalman", {})),
        target_len=int(section.get("target_len", 30)),
        keep_blocks=tuple(keep) if keep else None,
    )


def _train_config(section: dict, args) -> TrainConfig:
    merged = dict(section)
    if args.seed is not None:
        merged["seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        merged["max_epochs"] = args.epochs
    return TrainConfig(**merged)


def _model_spec(section: dict, classes, class_names, keypoints) -> ModelSpec:
    merged = {
        "mode": "time_preserving",
        "keypoints": keypoints,
        "classes": classes,
        "class_names": class_names,
    }
    merged.update(section)
    if merged["keypoints"] != keypoints:
        raise ShapeError(
            f"config keypoints={merged['keypoints']} but preprocessed "
            f"tensors have width {keypoints}"
        )
    if tuple(merged.get("class_names") or ()) != tuple(class_names):
        raise ShapeError("config class_names must match the manifest classes")
    merged["conv_filters"] = tuple(merged.get("conv_filters", (32, 64, 128, 256)))
    return ModelSpec(**merged)


def _stream_config(pipeline: PipelineConfig, window, stride) -> StreamConfig:
    return StreamConfig(
        window=window,
        stride=stride,
        target_len=pipeline.target_len,
        norm=pipeline.norm,
        kalman=pipeline.kalman,
        keep_blocks=pipeline.keep_blocks,
    )


def _pipeline_to_dict(p: PipelineConfig) -> dict:
    return {
        "norm": {
            "ref_block": p.norm.ref_block,
            "ref_index": p.norm.ref_index,
            "shoulder_pair": list(p.norm.shoulder_pair),
            "epsilon_dnorm": p.norm.epsilon_dnorm,
        },
        "kalman": {
            "q": p.kalman.q,
            "r": p.kalman.r,
            "dt": p.kalman.dt,
            "p0": p.kalman.p0,
        },
        "target_len": p.target_len,
        "keep_blocks": list(p.keep_blocks) if p.keep_blocks else None,
    }


def cmd_synth(args):
    manifest = synth_dataset(
        args.out,
        n_classes=args.classes,
        per_class=args.per_class,
        seed=args.seed if args.seed is not None else 0,
        jitter=args.jitter,
    )
    counts = validate_manifest(manifest)
    print(f"wrote {len(manifest.sequences)} sequences, {len(counts)} classes -> {args.out}")
    return 0


def cmd_preprocess(args):
    config = _pipeline_config(_load_config_file(args.config).get("pipeline", {}))
    if args.keep_blocks:
        config = PipelineConfig(
            norm=config.norm,
            kalman=config.kalman,
            target_len=config.target_len,
            keep_blocks=tuple(args.keep_blocks.split(",")),
        )
    seq = read_sequence(args.input)
    tensor = preprocess_pipeline(seq, config)
    save_tensor(args.out, tensor)
    print(f"{args.input} -> {args.out} shape {tensor.shape}")
    return 0


def cmd_augment(args):
    section = _load_config_file(args.config).get("augment", {})
    if args.seed is not None:
        section["seed"] = args.seed
    if args.copies is not None:
        section["copies_per_sequence"] = args.copies
    spec = AugmentSpec(**section)
    expanded = expand_dataset(args.manifest, args.out, spec)
    print(f"expanded to {len(expanded.sequences)} sequences -> {args.out}")
    return 0


def cmd_train(args):
    cfg = _load_config_file(args.config)
    pipeline = _pipeline_config(cfg.get("pipeline", {}))
    manifest = read_manifest(args.manifest)
    validate_manifest(manifest)
    base_dir = os.path.dirname(os.path.abspath(args.manifest))
    train_m, test_m = stratified_split(
        manifest, args.train_frac, seed=args.seed if args.seed is not None else manifest.seed
    )
    jobs = args.jobs
    X_train, y_train = load_manifest_tensors(train_m, base_dir, pipeline, jobs=jobs)
    X_test, y_test = load_manifest_tensors(test_m, base_dir, pipeline, jobs=jobs)
    spec = _model_spec(
        cfg.get("model", {}), len(manifest.classes), manifest.classes, X_train.shape[2]
    )
    tconfig = _train_config(cfg.get("train", {}), args)
    model = build_model(spec)
    timer = time.perf_counter if args.timing else None
    model, history = train(model, (X_train, y_train), (X_test, y_test), tconfig, timer=timer)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "history.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(history_to_csv(history))
    save_model(
        model,
        os.path.join(args.out, "best.sgkp"),
        extra={"pipeline": _pipeline_to_dict(pipeline)},
    )
    report = evaluate(model, X_test, y_test, manifest.classes)
    with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report_to_json(report))
    with open(os.path.join(args.out, "confusion.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(confusion_to_csv(report))
    print(
        f"trained {len(history)} epochs; test accuracy {report.accuracy:.1f}% "
        f"-> {args.out}"
    )
    return 0


def _load_model_and_pipeline(model_path):
    header = read_model_header(model_path)
    model = load_model(model_path)
    pipeline = _pipeline_config(header.get("extra", {}).get("pipeline", {}) or {})
    return model, pipeline


def cmd_eval(args):
    model, pipeline = _load_model_and_pipeline(args.model)
    manifest = read_manifest(args.manifest)
    validate_manifest(manifest)
    base_dir = os.path.dirname(os.path.abspath(args.manifest))
    X, y = load_manifest_tensors(manifest, base_dir, pipeline, jobs=args.jobs)
    report = evaluate(model, X, y, manifest.classes)
    payload = (
        report_to_json(report) if args.format == "json" else confusion_to_csv(report)
    )
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)
    return 0


def cmd_cv(args):
    cfg = _load_config_file(args.config)
    pipeline = _pipeline_config(cfg.get("pipeline", {}))
    manifest = read_manifest(args.manifest)
    validate_manifest(manifest)
    base_dir = os.path.dirname(os.path.abspath(args.manifest))
    X, y = load_manifest_tensors(manifest, base_dir, pipeline, jobs=args.jobs)
    spec = _model_spec(
        cfg.get("model", {}), len(manifest.classes), manifest.classes, X.shape[2]
    )
    tconfig = _train_config(cfg.get("train", {}), args)
    reports, mean_f1, std_f1 = kfold_cv((X, y), spec, tconfig, k=args.k)
    os.makedirs(args.out, exist_ok=True)
    for i, report in enumerate(reports):
        with open(
            os.path.join(args.out, f"fold{i}_report.json"), "w", encoding="utf-8", newline="\n"
        ) as fh:
            fh.write(report_to_json(report))
    summary = {
        "k": args.k,
        "macro_f1_mean": round(mean_f1, 1),
        "macro_f1_std": round(std_f1, 1),
        "per_fold_macro_f1": [round(r.macro_f1, 1) for r in reports],
    }
    with open(os.path.join(args.out, "summary.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"{args.k}-fold macro-F1 {mean_f1:.1f} +/- {std_f1:.1f} -> {args.out}")
    return 0


def cmd_grid(args):
    cfg = _load_config_file(args.config)
    pipeline = _pipeline_config(cfg.get("pipeline", {}))
    with open(args.space, "r", encoding="utf-8") as fh:
        space = json.load(fh)
    manifest = read_manifest(args.manifest)
    validate_manifest(manifest)
    base_dir = os.path.dirname(os.path.abspath(args.manifest))
    X, y = load_manifest_tensors(manifest, base_dir, pipeline, jobs=args.jobs)
    spec = _model_spec(
        cfg.get("model", {}), len(manifest.classes), manifest.classes, X.shape[2]
    )
    tconfig = _train_config(cfg.get("train", {}), args)
    results = grid_search(space, (X, y), spec, tconfig)
    payload = json.dumps(results, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)
    return 0


def cmd_verify_arch(args):
    report = verify_reference_architecture()
    if args.format == "json":
        payload = {
            "rows": [
                {
                    "name": r.name,
                    "output_shape": list(r.output_shape),
                    "expected_params": r.expected_params,
                    "computed_params": r.computed_params,
                    "match": r.match,
                    "note": r.note,
                }
                for r in report.rows
            ],
            "expected_total": report.expected_total,
            "computed_total": report.computed_total,
            "delta": report.delta,
        }
        print(json.dumps(payload, indent=2))
        return 0
    header = f"{'layer':<22}{'output shape':<16}{'expected':>12}{'computed':>12}  match"
    print(header)
    print("-" * len(header))
    for r in report.rows:
        shape = "(" + ", ".join(str(v) for v in r.output_shape) + ")"
        line = (
            f"{r.name:<22}{shape:<16}{r.expected_params:>12,}"
            f"{r.computed_params:>12,}  {'yes' if r.match else 'NO'}"
        )
        if r.note:
            line += f"  [{r.note}]"
        print(line)
    print("-" * len(header))
    print(
        f"{'Total':<22}{'':<16}{report.expected_total:>12,}"
        f"{report.computed_total:>12,}  delta {report.delta:+,}"
    )
    return 0


def cmd_infer(args):
    model, pipeline = _load_model_and_pipeline(args.model)
    config = _stream_config(pipeline, args.window, args.stride)
    predictions = infer_file(model, args.input, config)
    if not predictions:
        n_frames = len(read_sequence(args.input))
        print(
            f"note: no predictions — {args.input} has {n_frames} frames, "
            f"the sliding window needs {config.window}",
            file=sys.stderr,
        )
    rows = []
    for p in predictions:
        row = {
            "window_end": p.window_end,
            "label": p.label,
            "probs": [float(v) for v in p.probs],
        }
        if args.timing:
            row["latency_ms"] = p.latency_ms
        rows.append(row)
    payload = json.dumps(rows, indent=2) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)
    return 0


def cmd_serve(args):
    from .serve import run_server

    model, pipeline = _load_model_and_pipeline(args.model)
    config = _stream_config(pipeline, args.window, args.stride)
    run_server(model, config, host=args.host, port=args.port)
    return 0


def cmd_bench(args):
    model, pipeline = _load_model_and_pipeline(args.model)
    config = _stream_config(pipeline, args.window, args.stride)
    stats = bench_latency(
        model, config, n=args.n, seed=args.seed if args.seed is not None else 0
    )
    payload = json.dumps(stats, indent=2) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="signkit",
        description="keypoint-sequence gesture recognition pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True, jobs=False, config=False):
        if seed:
            p.add_argument("--seed", type=int, default=None)
        if jobs:
            p.add_argument("--jobs", type=int, default=1)
        if config:
            p.add_argument("--config", default=None, help="JSON config file")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--per-class", type=int, default=40)
    p.add_argument("--jitter", type=float, default=0.01)
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="run the pipeline on one .kpjl file")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--keep-blocks", default=None, help="comma-separated block names")
    common(p, config=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("augment", help="expand a dataset with augmented copies")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--copies", type=int, default=None)
    common(p, config=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="train on a manifest (80/20 split)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--train-frac", type=float, default=0.8)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--timing", action="store_true", help="record real wall_ms")
    common(p, jobs=True, config=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    common(p, jobs=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cv", help="k-fold cross-validation")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--epochs", type=int, default=None)
    common(p, jobs=True, config=True)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("grid", help="grid search over lr0/kernel/units")
    p.add_argument("--manifest", required=True)
    p.add_argument("--space", required=True, help="JSON file with the search space")
    p.add_argument("--out", default=None)
    p.add_argument("--epochs", type=int, default=None)
    common(p, jobs=True, config=True)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("verify-arch", help="audit the reference architecture table")
    p.add_argument("--format", choices=("table", "json"), default="table")
    common(p, seed=False)
    p.set_defaults(func=cmd_verify_arch)

    p = sub.add_parser("infer", help="offline sliding-window inference on a file")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--window", type=int, default=30)
    p.add_argument("--stride", type=int, default=5)
    p.add_argument("--timing", action="store_true")
    common(p, seed=False)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("serve", help="WebSocket streaming inference service")
    p.add_argument("--model", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--window", type=int, default=30)
    p.add_argument("--stride", type=int, default=5)
    common(p, seed=False)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("bench", help="per-window inference latency stats")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--out", default=None)
    p.add_argument("--window", type=int, default=30)
    p.add_argument("--stride", type=int, default=5)
    common(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SignkitError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
