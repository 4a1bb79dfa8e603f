"""
Command line interface.
Runs dataset generation, featurization, training, evaluation, similarity export,
full experiments and the HTTP server.

Usage (from backend/):
    python -m app.cli gen-chords --out data/chords
    python -m app.cli featurize --input data/chords/manifest.csv --out data/features.sdlm
    python -m app.cli train --features data/features.sdlm --out runs/train
    python -m app.cli experiment --out runs/experiment --jobs 4
"""

import argparse
import json
import logging
import logging.config
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from app.config import settings, get_logging_config, ProtocolConfig
from app.models.audio import FeatureKind, FeaturePipelineConfig
from app.models.dictionary import HyperParams
from app.models.experiment import ExperimentConfig, HyperGrid, SplitSpec
from app.services.chord_service import chord_service
from app.services.dictionary_service import dictionary_service
from app.services.experiment_service import experiment_service
from app.services.model_store import model_store
from app.utils.errors import SDLError, ConfigError

logger = logging.getLogger(__name__)


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config file (if any) with command line flags applied on top."""
    config = experiment_service.load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        seed = args.seed
    else:
        seed = config.seed if args.config else settings.DEFAULT_SEED
    update = {"seed": seed}
    if getattr(args, "paper_grid", False):
        update["grid"] = HyperGrid.full()
        update["base"] = HyperParams.parse_obj(
            {**config.base.dict(), **ProtocolConfig.get_optimizer_preset(full=True)}
        )
    if getattr(args, "protocol", None):
        update["splits"] = SplitSpec.for_protocol(args.protocol)
    if getattr(args, "features", None):
        update["features_path"] = args.features
        update["dataset"] = None
    splits = update.get("splits", config.splits)
    if getattr(args, "splits", None):
        update["splits"] = splits.copy(update={"split_count": args.splits})
    try:
        return ExperimentConfig.parse_obj({**config.dict(), **update})
    except ValueError as e:
        raise ConfigError("invalid experiment config", {"reason": str(e)})


def cmd_gen_chords(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else settings.DEFAULT_SEED
    if args.config:
        dataset = experiment_service.load_config(args.config).dataset
        if dataset is None:
            raise ConfigError("config file has no dataset section", {"path": args.config})
        dataset = dataset.copy(update={"seed": seed}) if args.seed is not None else dataset
    elif args.full_scale:
        dataset = chord_service.full_config(seed)
    else:
        dataset = chord_service.desk_config(args.roots, args.instruments, seed)

    clips = chord_service.generate_dataset(dataset, args.jobs)
    out = Path(args.out)
    if args.kind:
        pipeline = FeaturePipelineConfig(kind=FeatureKind(args.kind), dim=args.dim)
        features = experiment_service.featurize_clips(clips, pipeline, chord_service.n_classes, args.jobs)
        target = out / "features.sdlm"
        model_store.save_features(features, str(target))
    else:
        target = chord_service.write_dataset(clips, str(out))

    counts = chord_service.class_counts([item.label for item in clips])
    _emit({"clips": len(clips), "per_class": counts, "output": str(target)})
    return 0


def cmd_featurize(args: argparse.Namespace) -> int:
    clips = chord_service.load_manifest_clips(args.input)
    labels = [item.label for item in clips]
    pipeline = FeaturePipelineConfig(kind=FeatureKind(args.kind), dim=args.dim, decimation=args.decimation)
    n_classes = args.classes or max(labels)
    features = experiment_service.featurize_clips(clips, pipeline, n_classes, args.jobs)
    model_store.save_features(features, args.out)
    _emit({
        "rows": features.size,
        "dim": int(features.features.shape[1]),
        "kind": pipeline.kind.value,
        "classes": n_classes,
        "output": args.out,
    })
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = build_config(args)
    features = model_store.load_features(args.features)
    result = experiment_service.train(features, config, n_jobs=args.jobs)
    bundle_path = experiment_service.write_training_outputs(result, args.out)
    _emit({
        "bundle": str(bundle_path),
        "selected": result.selected_params,
        "iterations": len(result.trace.rows),
        "stop_reason": result.trace.stop_reason,
        "grid": [{"index": r.index, "validation_mean": r.validation_mean} for r in result.grid_results],
    })
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    bundle = model_store.load_bundle(args.bundle)
    features = model_store.load_features(args.features)
    report = experiment_service.evaluate(bundle, features)
    experiment_service.write_eval_outputs(report, args.out)
    _emit({"accuracy": report.accuracy, "test_count": report.test_count, "output": args.out})
    return 0


def cmd_similarity(args: argparse.Namespace) -> int:
    bundle = model_store.load_bundle(args.bundle)
    S = dictionary_service.dictionary_similarity(bundle.dictionary)
    experiment_service.write_similarity(S, args.out)
    summary = dictionary_service.similarity_summary(S)
    _emit({"classes": int(S.shape[0]), "symmetric": bool(np.array_equal(S, S.T)), **summary.dict()})
    return 0


def cmd_experiment(args: argparse.Namespace) -> int:
    config = build_config(args)
    report = experiment_service.run_experiment(config, n_jobs=args.jobs)
    path = experiment_service.write_report(report, args.out)
    _emit({"report": str(path), "methods": {m.method: m.formatted for m in report.methods}})
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from app.services.classifier_service import classifier_service
    from main import app

    classifier_service.load(args.bundle)
    uvicorn.run(app, host=args.host, port=args.port, log_level=settings.LOG_LEVEL.lower())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdl", description=settings.PROJECT_NAME)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON or YAML experiment config")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default=settings.OUTPUT_DIR)
    common.add_argument("--jobs", type=int, default=settings.DEFAULT_JOBS)

    search = argparse.ArgumentParser(add_help=False)
    search.add_argument("--paper-grid", action="store_true", help="Full grid and full optimizer budget")
    search.add_argument("--protocol", choices=["chord", "casr"])

    gen = sub.add_parser("gen-chords", parents=[common], help="Synthesize the chord dataset")
    gen.add_argument("--full-scale", action="store_true", help="14 roots x 11 instruments at 44.1 kHz")
    gen.add_argument("--roots", type=int, default=6)
    gen.add_argument("--instruments", type=int, default=5)
    gen.add_argument("--kind", choices=[k.value for k in FeatureKind], help="Write a feature file instead of WAVs")
    gen.add_argument("--dim", type=int, default=256)
    gen.set_defaults(func=cmd_gen_chords)

    feat = sub.add_parser("featurize", parents=[common], help="Featurize a WAV manifest")
    feat.add_argument("--input", required=True, help="manifest.csv")
    feat.add_argument("--kind", choices=[k.value for k in FeatureKind], default=FeatureKind.POOLED_SPECTROGRAM.value)
    feat.add_argument("--dim", type=int, default=256)
    feat.add_argument("--decimation", type=int, default=1)
    feat.add_argument("--classes", type=int, default=None, help="Class count (default: largest label)")
    feat.set_defaults(func=cmd_featurize)

    train = sub.add_parser("train", parents=[common, search], help="Train dictionaries and the SVM")
    train.add_argument("--features", required=True)
    train.set_defaults(func=cmd_train)

    evaluate = sub.add_parser("eval", parents=[common], help="Evaluate a bundle on labeled features")
    evaluate.add_argument("--bundle", required=True)
    evaluate.add_argument("--features", required=True)
    evaluate.set_defaults(func=cmd_eval)

    sim = sub.add_parser("similarity", parents=[common], help="Export the dictionary similarity matrix")
    sim.add_argument("--bundle", required=True)
    sim.set_defaults(func=cmd_similarity)

    exp = sub.add_parser("experiment", parents=[common, search], help="Run the split/train/test comparison")
    exp.add_argument("--features", help="Prepared feature file instead of the chord dataset")
    exp.add_argument("--splits", type=int, help="Override the split count")
    exp.set_defaults(func=cmd_experiment)

    serve = sub.add_parser("serve", help="Serve a bundle over HTTP")
    serve.add_argument("--bundle", default=settings.BUNDLE_PATH)
    serve.add_argument("--host", default="0.0.0.0")
    serve.add_argument("--port", type=int, default=8000)
    serve.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand; 0 on success, 2 on toolkit errors, 1 otherwise."""
    logging.config.dictConfig(get_logging_config())
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SDLError as e:
        logger.error(f"{args.command} failed: {e.message}")
        print(json.dumps(e.to_dict(), sort_keys=True, default=str), file=sys.stderr)
        return 2
    except Exception as e:
        logger.error(f"{args.command} failed unexpectedly: {e}", exc_info=True)
        payload = {"error": "internal_error", "message": str(e), "context": {"type": type(e).__name__}}
        print(json.dumps(payload, sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
