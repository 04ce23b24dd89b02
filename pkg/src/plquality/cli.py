"""Command-line interface for the pseudo-label quality pipeline.

Subcommands: score, filter, correct, match, loss, gradcheck, simulate,
train, analyze. Exit codes: 0 success, 1 validation error (bad arguments or
malformed files), 2 numerical failure (divergence, failed gradient check).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .correction import FusionState, MockExternalClassifier, PrecomputedClassifier
from .filtering import (
    DEFAULT_CLASS_THRESHOLD,
    DEFAULT_COUPLED_THRESHOLD,
    DEFAULT_MASK_THRESHOLD,
    FilterConfig,
    FilterMode,
)
from .instances import sigmoid, softmax
from .io import (
    FORMAT_VERSION,
    PredictionSet,
    ValidationError,
    format_float,
    read_predictions,
    read_scene,
    write_csv,
    write_jsonl,
    write_predictions,
    write_scene,
)
from .losses import (
    LinearPixelModel,
    LossConfig,
    finite_difference_check,
    pmua_gradient,
    pmua_mask_loss,
    supervised_loss,
    total_loss,
)
from .matching import PROB_EPS, CostWeights, PseudoLabel, hungarian, match_cost
from .pipeline import derive_pseudo_labels
from .quality import UncertaintyMap, score_instance
from .synthetic import BenchmarkConfig, corrupt_predictions, generate_scene
from .evaluation import (
    Taxonomy,
    categorize_errors,
    confusion_matrix,
    score_iou_table,
    simplified_ap,
    scored_masks_from_predictions,
)
from .training import DivergenceError, EmaConfig, PipelineSettings, TrainSchedule, run_pipeline


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); we map usage errors to 1
        raise _UsageError(message)


def _common_flags() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="random seed (train: overrides config seeds when given)")
    common.add_argument(
        "--filter-mode", choices=[m.value for m in FilterMode], default=FilterMode.DECOUPLED.value
    )
    common.add_argument("--mask-threshold", type=float, default=DEFAULT_MASK_THRESHOLD)
    common.add_argument("--class-threshold", type=float, default=DEFAULT_CLASS_THRESHOLD)
    common.add_argument("--coupled-threshold", type=float, default=DEFAULT_COUPLED_THRESHOLD)
    common.add_argument("--lambda", dest="lambda_weight", type=float, default=1.0,
                        help="unsupervised loss weight")
    common.add_argument("--ema-alpha", type=float, default=0.9996)
    common.add_argument("--output-dir", type=Path, default=Path("."))
    return common


def _filter_config(args) -> FilterConfig:
    return FilterConfig(
        mode=FilterMode(args.filter_mode),
        mask_threshold=args.mask_threshold,
        class_threshold=args.class_threshold,
        coupled_threshold=args.coupled_threshold,
    )


def _out_path(args, name: str) -> Path:
    args.output_dir.mkdir(parents=True, exist_ok=True)
    return args.output_dir / name


def _scores_rows(pred_set: PredictionSet):
    for index, pred in enumerate(pred_set.instances):
        s = score_instance(pred)
        yield index, s.class_quality, s.mask_quality, s.coupled_score


def cmd_score(args) -> int:
    pred_set = read_predictions(args.predictions)
    out = args.output or _out_path(args, "scores.csv")
    write_csv(out, ["instance", "class_quality", "mask_quality", "coupled_score"], _scores_rows(pred_set))
    print(f"wrote {out} ({len(pred_set.instances)} instances)")
    return 0


def _scores_dict(scores) -> dict:
    return {
        "class_quality": scores.class_quality,
        "mask_quality": scores.mask_quality,
        "coupled_score": scores.coupled_score,
    }


def cmd_filter(args) -> int:
    pred_set = read_predictions(args.predictions)
    config = _filter_config(args)
    from .filtering import filter_predictions

    result = filter_predictions(pred_set.instances, config)
    document = {
        "format_version": FORMAT_VERSION,
        "mode": config.mode.value,
        "kept": [{"index": i, **_scores_dict(s)} for i, s in result.kept],
        "rejected": [{"index": i, **_scores_dict(s), "reason": r.value} for i, s, r in result.rejected],
    }
    out = args.output or _out_path(args, "filtered.json")
    Path(out).write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {out} (kept {len(result.kept)}, rejected {len(result.rejected)})")
    return 0


def _build_classifier(args, num_classes: int):
    if args.distributions:
        return PrecomputedClassifier.from_json(args.distributions)
    return MockExternalClassifier(
        num_classes=num_classes,
        accuracy=args.mock_accuracy,
        confusion=args.mock_confusion,
        seed=args.seed if args.seed is not None else 0,
    )


def cmd_correct(args) -> int:
    pred_set = read_predictions(args.predictions)
    scene = read_scene(args.scene) if args.scene else None
    classifier = _build_classifier(args, pred_set.num_classes)
    state = FusionState(it_cur=args.it_cur, it_max=args.it_max)
    batch = derive_pseudo_labels(
        pred_set.instances,
        _filter_config(args),
        classifier=classifier,
        fusion_state=state,
        ground_truth=scene.instances if scene else None,
        instance_id_prefix=f"{pred_set.image_id}/",
    )
    document = {
        "format_version": FORMAT_VERSION,
        "fusion_weight": state.weight(),
        "kept": list(batch.kept_indices),
        "corrections": [
            {
                "instance": c.index,
                "original": c.original_class,
                "corrected": c.corrected_class,
                "fused": list(c.fused),
            }
            for c in batch.corrections
        ],
    }
    out = args.output or _out_path(args, "corrected.json")
    Path(out).write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")
    flips = sum(1 for c in batch.corrections if c.corrected_class != c.original_class)
    print(f"wrote {out} (corrected {len(batch.corrections)} instances, {flips} class changes)")
    return 0


def _derive_for_matching(args, teacher_set: PredictionSet, scene) -> tuple:
    classifier = None
    state = None
    if args.correct:
        classifier = _build_classifier(args, teacher_set.num_classes)
        state = FusionState(it_cur=args.it_cur, it_max=args.it_max)
    batch = derive_pseudo_labels(
        teacher_set.instances,
        _filter_config(args),
        classifier=classifier,
        fusion_state=state,
        ground_truth=scene.instances if scene else None,
        instance_id_prefix=f"{teacher_set.image_id}/",
    )
    return batch


def _cost_weights(args) -> CostWeights:
    w_class, w_bce, w_dice = args.cost_weights
    return CostWeights(class_weight=w_class, bce_weight=w_bce, dice_weight=w_dice)


def cmd_match(args) -> int:
    student_set = read_predictions(args.student)
    teacher_set = read_predictions(args.teacher)
    if (student_set.height, student_set.width) != (teacher_set.height, teacher_set.width):
        raise ValidationError(args.student, "height/width", "student and teacher grids differ")
    scene = read_scene(args.scene) if args.scene else None
    batch = _derive_for_matching(args, teacher_set, scene)
    weights = _cost_weights(args)
    costs = np.array(
        [[match_cost(s, label, weights) for label in batch.labels] for s in student_set.instances]
    ).reshape(len(student_set.instances), len(batch.labels))
    result = hungarian(costs)
    document = {
        "format_version": FORMAT_VERSION,
        "pairs": [
            {"student": s, "pseudo": p, "cost": float(costs[s, p])} for s, p in result.pairs
        ],
        "total_cost": result.total_cost,
        "num_students": len(student_set.instances),
        "num_pseudo_labels": len(batch.labels),
    }
    out = args.output or _out_path(args, "match.json")
    Path(out).write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {out} ({len(result.pairs)} pairs, total cost {format_float(result.total_cost)})")
    return 0


def cmd_loss(args) -> int:
    student_set = read_predictions(args.student)
    teacher_set = read_predictions(args.teacher)
    scene = read_scene(args.scene) if args.scene else None
    batch = _derive_for_matching(args, teacher_set, scene)
    weights = _cost_weights(args)
    config = LossConfig(
        lambda_weight=args.lambda_weight,
        dice_enabled=args.dice,
        cost_weights=weights,
        unsup_class_enabled=not args.no_unsup_class,
    )

    students = student_set.instances
    unsup_class = 0.0
    unsup_mask = 0.0
    if batch.labels:
        costs = np.array([[match_cost(s, label, weights) for label in batch.labels] for s in students])
        match = hungarian(costs.reshape(len(students), len(batch.labels)))
        matched = {s: batch.labels[p] for s, p in match.pairs}
        probs = [np.clip(sigmoid(s.mask_logits.values), PROB_EPS, 1 - PROB_EPS) for s in students]
        unsup_mask = pmua_mask_loss(probs, matched)
        if config.unsup_class_enabled and match.pairs:
            terms = []
            for s_idx, label in matched.items():
                p = np.clip(softmax(students[s_idx].class_logits), PROB_EPS, 1 - PROB_EPS)
                terms.append(-float(np.log(p[label.class_id])))
            unsup_class = float(np.mean(terms))
    unsup_total = unsup_class + unsup_mask

    report = {
        "format_version": FORMAT_VERSION,
        "unsupervised": {"class": unsup_class, "mask": unsup_mask, "total": unsup_total},
        "lambda": config.lambda_weight,
        "pseudo_labels": len(batch.labels),
    }
    if scene is not None:
        sup, _ = supervised_loss(students, scene.instances, config)
        report["supervised"] = {"class": sup.class_term, "mask": sup.mask_term, "total": sup.total}
        report["total"] = total_loss(sup.total, unsup_total, config.lambda_weight)
    else:
        report["total"] = total_loss(0.0, unsup_total, config.lambda_weight)
    out = args.output or _out_path(args, "loss.json")
    Path(out).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {out} (total {format_float(report['total'])})")
    return 0


def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    worst = 0.0
    for _ in range(args.trials):
        height, width, dim = 4, 4, 3
        features = rng.normal(size=(height, width, dim))
        mask_bits = rng.random((height, width)) > 0.5
        uncertainty = rng.uniform(0.0, 1.0, size=(height, width))
        theta = rng.normal(scale=0.5, size=dim)
        from .instances import BinaryMask

        label = PseudoLabel(
            class_id=0, mask=BinaryMask(mask_bits), uncertainty=UncertaintyMap(uncertainty)
        )
        model = LinearPixelModel(theta)

        def loss_at(t, feats=features, lab=label):
            probs = LinearPixelModel(t).predict_probs(feats)
            return pmua_mask_loss([probs], {0: lab})

        grad = pmua_gradient(model, [features], {0: label})
        worst = max(worst, finite_difference_check(loss_at, grad, theta, step=args.step))
    print(f"max relative error over {args.trials} trials: {worst:.3e} (tolerance {args.tolerance:g})")
    return 0 if worst <= args.tolerance else 2


def cmd_simulate(args) -> int:
    if args.config:
        config = BenchmarkConfig.from_dict(json.loads(Path(args.config).read_text(encoding="utf-8")))
    else:
        config = BenchmarkConfig()
    channel = config.strong_channel if args.channel == "strong" else config.weak_channel
    base_seed = args.seed if args.seed is not None else 0
    scenes_dir = _out_path(args, "scenes")
    preds_dir = _out_path(args, "predictions")
    scenes_dir.mkdir(exist_ok=True)
    preds_dir.mkdir(exist_ok=True)
    class_names = tuple(f"class_{c}" for c in range(config.num_classes))
    for index in range(args.count):
        scene_seed = base_seed + index
        scene = generate_scene(scene_seed, config, scene_id=index)
        write_scene(scene, scenes_dir / f"scene_{index:04d}.json")
        predictions = corrupt_predictions(scene, channel, seed=scene_seed + 10_000)
        pred_set = PredictionSet(
            image_id=f"scene_{index:04d}",
            height=config.height,
            width=config.width,
            num_classes=config.num_classes,
            class_names=class_names,
            instances=tuple(predictions),
        )
        write_predictions(pred_set, preds_dir / f"pred_{index:04d}.json")
    print(f"wrote {args.count} scenes to {scenes_dir} and predictions to {preds_dir}")
    return 0


def _train_settings(args) -> PipelineSettings:
    document = {}
    if args.config:
        document = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if not isinstance(document, dict):
            raise ValidationError(args.config, "-", "top level must be an object")
    benchmark = BenchmarkConfig.from_dict(document.get("benchmark", {})) if document.get("benchmark") else BenchmarkConfig()
    schedule_doc = document.get("schedule", {})
    schedule = TrainSchedule(**schedule_doc) if schedule_doc else TrainSchedule()
    filter_doc = document.get("filter", {})
    filter_config = (
        FilterConfig(
            mode=FilterMode(filter_doc.get("mode", args.filter_mode)),
            mask_threshold=filter_doc.get("mask_threshold", args.mask_threshold),
            class_threshold=filter_doc.get("class_threshold", args.class_threshold),
            coupled_threshold=filter_doc.get("coupled_threshold", args.coupled_threshold),
        )
        if filter_doc
        else _filter_config(args)
    )
    loss_doc = document.get("loss", {})
    cost = loss_doc.get("cost_weights", [1.0, 1.0, 1.0])
    loss_config = LossConfig(
        lambda_weight=loss_doc.get("lambda", args.lambda_weight),
        dice_enabled=loss_doc.get("dice", False),
        cost_weights=CostWeights(*cost),
        unsup_class_enabled=loss_doc.get("unsup_class", True),
    )
    correction = document.get("correction", {})
    return PipelineSettings(
        benchmark=benchmark,
        schedule=schedule,
        filter_config=filter_config,
        loss_config=loss_config,
        ema=EmaConfig(alpha=document.get("ema_alpha", args.ema_alpha)),
        correction_enabled=correction.get("enabled", True),
        mock_accuracy=correction.get("mock_accuracy", args.mock_accuracy),
        mock_confusion=correction.get("mock_confusion", args.mock_confusion),
    )


def cmd_train(args) -> int:
    settings = _train_settings(args)
    result = run_pipeline(settings, seed=args.seed)
    args.output_dir.mkdir(parents=True, exist_ok=True)
    log_path = args.output_dir / "log.jsonl"
    write_jsonl(log_path, result.log)
    metrics = {
        "format_version": FORMAT_VERSION,
        "miou": result.metrics["miou"],
        "pixel_accuracy": result.metrics["pixel_accuracy"],
        "pseudo_precision": result.pseudo_precision,
        "pseudo_recall": result.pseudo_recall,
        "iterations": len(result.log),
    }
    metrics_path = args.output_dir / "final_metrics.json"
    metrics_path.write_text(json.dumps(metrics, indent=2, allow_nan=True) + "\n", encoding="utf-8")
    print(
        f"wrote {log_path} and {metrics_path} "
        f"(mIoU {result.metrics['miou']:.2f}, pixel acc {result.metrics['pixel_accuracy']:.2f})"
    )
    return 0


def cmd_analyze(args) -> int:
    pred_set = read_predictions(args.predictions)
    scene = read_scene(args.scene)
    if args.taxonomy:
        taxonomy = Taxonomy.from_dict(json.loads(Path(args.taxonomy).read_text(encoding="utf-8")))
    else:
        taxonomy = Taxonomy.identity(pred_set.num_classes)
    args.output_dir.mkdir(parents=True, exist_ok=True)

    table = score_iou_table(pred_set.instances, scene.instances)
    write_csv(
        args.output_dir / "score_iou.csv",
        ["instance", "class_quality", "mask_quality", "coupled_score", "best_iou"],
        (
            (r.instance, r.scores.class_quality, r.scores.mask_quality, r.scores.coupled_score, r.best_iou)
            for r in table.rows
        ),
    )
    write_csv(
        args.output_dir / "correlations.csv",
        ["metric", "pearson_r"],
        ((name, value) for name, value in sorted(table.correlations.items())),
    )

    scored = scored_masks_from_predictions(pred_set.instances)
    categories, histogram = categorize_errors(scored, scene.instances, taxonomy)
    write_csv(
        args.output_dir / "errors.csv",
        ["instance", "category"],
        ((i, category.value) for i, category in enumerate(categories)),
    )
    write_csv(
        args.output_dir / "error_histogram.csv",
        ["category", "count"],
        ((category.value, histogram[category]) for category in sorted(histogram, key=lambda c: c.value)),
    )

    counts = confusion_matrix(scored, scene.instances, pred_set.num_classes)
    labels = list(pred_set.class_names) + ["background"]
    write_csv(
        args.output_dir / "confusion.csv",
        ["true\\predicted"] + labels,
        ((labels[row], *counts[row].tolist()) for row in range(len(labels))),
    )

    summary = {
        "format_version": FORMAT_VERSION,
        "simplified_ap": simplified_ap(scored, scene.instances),
        "instances": len(pred_set.instances),
        "ground_truth": len(scene.instances),
    }
    (args.output_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(f"wrote analysis CSVs and summary.json to {args.output_dir}")
    return 0


def build_parser() -> _Parser:
    common = _common_flags()
    parser = _Parser(prog="plquality", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", parents=[common], help="per-instance quality scores to CSV")
    p.add_argument("--predictions", required=True, type=Path)
    p.add_argument("--output", type=Path)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("filter", parents=[common], help="filter predictions, emit kept/rejected JSON")
    p.add_argument("--predictions", required=True, type=Path)
    p.add_argument("--output", type=Path)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("correct", parents=[common], help="category correction for filtered instances")
    p.add_argument("--predictions", required=True, type=Path)
    p.add_argument("--scene", type=Path, help="scene file providing the patch-content oracle")
    p.add_argument("--distributions", type=Path, help="precomputed distributions JSON (id -> probs)")
    p.add_argument("--mock-accuracy", type=float, default=0.9)
    p.add_argument("--mock-confusion", default="residual")
    p.add_argument("--it-cur", type=int, default=0)
    p.add_argument("--it-max", type=int, default=1)
    p.add_argument("--output", type=Path)
    p.set_defaults(func=cmd_correct)

    for name, func in (("match", cmd_match), ("loss", cmd_loss)):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--student", required=True, type=Path)
        p.add_argument("--teacher", required=True, type=Path)
        p.add_argument("--scene", type=Path)
        p.add_argument("--correct", action="store_true", help="apply category correction to pseudo-labels")
        p.add_argument("--distributions", type=Path)
        p.add_argument("--mock-accuracy", type=float, default=0.9)
        p.add_argument("--mock-confusion", default="residual")
        p.add_argument("--it-cur", type=int, default=0)
        p.add_argument("--it-max", type=int, default=1)
        p.add_argument("--cost-weights", type=float, nargs=3, default=[1.0, 1.0, 1.0],
                       metavar=("W_CLASS", "W_BCE", "W_DICE"))
        p.add_argument("--dice", action="store_true")
        p.add_argument("--no-unsup-class", action="store_true")
        p.add_argument("--output", type=Path)
        p.set_defaults(func=func)

    p = sub.add_parser("gradcheck", parents=[common], help="verify the analytic gradient")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("simulate", parents=[common], help="generate scenes + noisy predictions")
    p.add_argument("--config", type=Path, help="benchmark config JSON")
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--channel", choices=["weak", "strong"], default="strong")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", parents=[common], help="run the full training pipeline")
    p.add_argument("--config", type=Path, help="training config JSON")
    p.add_argument("--mock-accuracy", type=float, default=0.9)
    p.add_argument("--mock-confusion", default="residual")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("analyze", parents=[common], help="score/error/confusion analyses to CSV")
    p.add_argument("--predictions", required=True, type=Path)
    p.add_argument("--scene", required=True, type=Path)
    p.add_argument("--taxonomy", type=Path, help="class id -> superclass id JSON")
    p.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DivergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
