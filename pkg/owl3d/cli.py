"""
Command-line entry point.

    python -m owl3d.cli <subcommand> [--config run.json] [flags]

Every subcommand writes a JSON report (to --out or stdout) that embeds the
fully resolved configuration. Exit codes: 0 success, 1 usage error, 2 data error.
"""
import argparse
import json
import logging
import sys
from collections import Counter
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Type

import numpy as np
import pandas as pd
from pydantic import ValidationError

from owl3d.clients.codecs import read_detections, detections_by_scene
from owl3d.clients.kitti import count_points, parse_kitti_calib, parse_kitti_labels, read_pointcloud_with_stats
from owl3d.clients.scene_store import SceneStore, bank_digest, load_bank, save_bank
from owl3d.clients.settings import LOG_LEVEL, configure_logging, resolve_threads
from owl3d.schemas.bank import ObjectBank
from owl3d.schemas.benchmark import BenchmarkParams
from owl3d.schemas.config import (
    AugmentConfig,
    BuildBankConfig,
    EvalRunConfig,
    IngestKittiConfig,
    LosscheckConfig,
    MixConfig,
    RunConfig,
    ScoreConfig,
    SynthConfig,
)
from owl3d.schemas.evaluation import EvalScene, ScoreMetric
from owl3d.schemas.scene import SceneRecord, ScoreSpace
from owl3d.utils.bank_augment import (
    augment_scenes,
    bank_from_colored_objects,
    build_bank,
    location_pool_from_scenes,
    multi_size_mix,
    size_pool_from_scenes,
)
from owl3d.utils.benchgen import freeze_benchmark, manifest_digest
from owl3d.utils.errors import Owl3dError, schema_error_from_validation
from owl3d.utils.losses import run_losscheck
from owl3d.utils.match_eval import match_scenes, recall_curve
from owl3d.utils.ood_metrics import PROB_SPACE_METRICS, compare_score_metrics, id_scores
from owl3d.utils.parallel import parallel_map

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _csv_floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _csv_ints(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _csv_strings(text: str) -> List[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


# ---------- reports ----------

def _report(command: str, cfg: RunConfig, **body) -> dict:
    return {"command": command, "config": cfg.model_dump(mode="json"), **body}


def _emit(report: dict, out: Optional[str]):
    text = json.dumps(report, indent=2) + "\n"
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        logger.info(f"Report written to {path}")
    else:
        sys.stdout.write(text)


def _emit_csv(rows: List[dict], csv_path: Optional[str]):
    if not csv_path:
        return
    path = Path(csv_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows).to_csv(path, index=False)
    logger.info(f"CSV written to {path}")


# ---------- subcommands ----------

def _ingest_one(cfg: IngestKittiConfig, scene_id: str) -> Tuple[SceneRecord, Dict[str, int]]:
    calib_path = cfg.calib_dir / f"{scene_id}.txt"
    label_path = cfg.label_dir / f"{scene_id}.txt"
    calib = parse_kitti_calib(calib_path.read_text(), path=str(calib_path))
    cloud, stats = read_pointcloud_with_stats(cfg.velodyne_dir / f"{scene_id}.bin")
    objects = parse_kitti_labels(label_path.read_text(), calib, path=str(label_path))
    return SceneRecord(scene_id=scene_id, cloud=cloud, annotations=count_points(cloud, objects)), stats


def run_ingest_kitti(cfg: IngestKittiConfig, threads: int):
    scene_ids = sorted(p.stem for p in cfg.label_dir.glob("*.txt"))
    store = SceneStore(cfg.out_dir)

    def ingest(scene_id: str):
        scene, stats = _ingest_one(cfg, scene_id)
        store.save(scene)
        return scene, stats

    results = parallel_map(ingest, scene_ids, threads)
    classes = Counter(o.class_label for scene, _ in results for o in scene.annotations)
    totals = Counter()
    for _, stats in results:
        totals.update(stats)
    logger.info(f"Ingested {len(results)} KITTI scenes into {store.root}")
    body = {
        "scenes": len(results),
        "objects": dict(sorted(classes.items())),
        "points": {k: totals.get(k, 0) for k in ("records", "dropped_non_finite", "clamped_intensity")},
    }
    rows = [{"class": k, "objects": v} for k, v in sorted(classes.items())]
    return body, rows


def _read_colored(path: Path) -> np.ndarray:
    try:
        return np.loadtxt(path, ndmin=2)
    except ValueError as exc:
        raise Owl3dError(f"{path}: {exc}")


def _bank_summary(bank: ObjectBank, digest: str) -> dict:
    return {
        "entries": len(bank),
        "by_class": dict(sorted(Counter(e.class_label for e in bank.entries).items())),
        "resized": sum(e.resized for e in bank.entries),
        "digest": digest,
    }


def _bank_rows(bank: ObjectBank) -> List[dict]:
    return [
        {"index": i, "class": e.class_label, "source_scene": e.source_scene, "num_points": e.num_points,
         "l": e.box.l, "w": e.box.w, "h": e.box.h, "resized": e.resized}
        for i, e in enumerate(bank.entries)
    ]


def run_build_bank(cfg: BuildBankConfig, threads: int):
    if cfg.scenes_dir is None and cfg.colored_dir is None:
        raise UsageError("build-bank needs --scenes-dir and/or --colored-dir")
    entries = []
    if cfg.scenes_dir is not None:
        scenes = SceneStore(cfg.scenes_dir).load_all(threads)
        entries += build_bank(scenes, cfg.classes, cfg.min_points).entries
    if cfg.colored_dir is not None:
        paths = sorted(cfg.colored_dir.glob("*.txt"))
        objects = [(p.stem, _read_colored(p)) for p in paths]
        entries += bank_from_colored_objects(objects, cfg.colored_label, cfg.min_points).entries
    bank = ObjectBank(entries=entries)
    digest = save_bank(bank, cfg.out_dir)
    return _bank_summary(bank, digest), _bank_rows(bank)


def run_mix(cfg: MixConfig, threads: int):
    bank = load_bank(cfg.bank_dir)
    pool = size_pool_from_scenes(SceneStore(cfg.sizes_dir).load_all(threads), cfg.size_class)
    mixed = multi_size_mix(bank, pool, cfg.seed)
    digest = save_bank(mixed, cfg.out_dir)
    body = _bank_summary(mixed, digest)
    body["size_pool"] = len(pool.dims)
    return body, _bank_rows(mixed)


def run_augment(cfg: AugmentConfig, threads: int):
    scenes = SceneStore(cfg.scenes_dir).load_all(threads)
    bank = load_bank(cfg.bank_dir)
    locations = location_pool_from_scenes(scenes, cfg.donor_classes)
    results = augment_scenes(scenes, bank, locations, cfg.seed, cfg.class_label, cfg.sample_number, threads)
    out = SceneStore(cfg.out_dir)
    for result in results:
        out.save(result.scene)
    rows = [{"scene_id": r.scene.scene_id, "accepted": r.accepted, "rejected": r.rejected} for r in results]
    body = {
        "scenes": len(results),
        "accepted": sum(r.accepted for r in results),
        "rejected": sum(r.rejected for r in results),
        "bank_digest": bank_digest(bank),
        "per_scene": rows,
    }
    return body, rows


def run_synth(cfg: SynthConfig, threads: int):
    scenes = SceneStore(cfg.scenes_dir).load_all(threads)
    bank = load_bank(cfg.bank_dir)
    donors = None
    if cfg.donors_dir is not None:
        donors = location_pool_from_scenes(SceneStore(cfg.donors_dir).load_all(threads), cfg.donor_classes)
    params = BenchmarkParams(
        name=cfg.name,
        seed=cfg.seed,
        samples_per_scene=cfg.samples_per_scene,
        range_m=cfg.range_m,
        unseen_label=cfg.unseen_label,
    )
    manifest = freeze_benchmark(scenes, bank, params, cfg.out_dir, donors=donors, threads=threads)
    body = {
        "scenes": len(manifest.scene_ids),
        "flagged": len(manifest.flagged),
        "out_of_range": len(manifest.out_of_range),
        "bank_digest": manifest.params.bank_digest,
        "manifest_digest": manifest_digest(manifest),
    }
    rows = [{"scene_id": s.scene_id, "inserted": len(s.inserted)} for s in manifest.scenes]
    return body, rows


def _eval_scenes(cfg: EvalRunConfig) -> List[EvalScene]:
    store = SceneStore(cfg.gt_dir)
    id_store = SceneStore(cfg.id_gt_dir) if cfg.id_gt_dir else None
    id_classes = set(cfg.id_classes)
    dets = detections_by_scene(read_detections(cfg.detections, cfg.num_classes))
    scenes = []
    for scene_id in store.scene_ids():
        doc = store.load_annotations(scene_id)
        gts = list(doc.objects)
        if id_store is not None:
            if id_store.has_scene(scene_id):
                gts += [o for o in id_store.load_annotations(scene_id).objects if o.class_label in id_classes]
            else:
                logger.warning(f"Scene {scene_id} is missing from {id_store.root}; no ID objects added")
        found = dets.get(scene_id)
        if found is None:
            logger.warning(f"No detections for scene {scene_id}; all its objects count as missed")
        scenes.append(
            EvalScene(
                scene_id=scene_id,
                gts=gts,
                detections=found.detections if found else [],
                score_space=found.score_space if found else ScoreSpace.LOGIT,
            )
        )
    extra = sorted(set(dets) - {s.scene_id for s in scenes})
    if extra:
        logger.warning(f"{len(extra)} detection scenes have no ground truth and are ignored")
    return scenes


def _metrics_for(cfg: EvalRunConfig, scenes: Sequence[EvalScene]) -> List[ScoreMetric]:
    if cfg.metrics:
        return list(cfg.metrics)
    if any(s.score_space == ScoreSpace.PROB for s in scenes):
        return [m for m in ScoreMetric if m in PROB_SPACE_METRICS]
    return list(ScoreMetric)


def run_eval(cfg: EvalRunConfig, threads: int):
    scenes = _eval_scenes(cfg)
    recall = recall_curve(scenes, cfg.eval, id_classes=cfg.id_classes, ood_classes=cfg.ood_classes, threads=threads)
    matches = match_scenes(scenes, cfg.eval, threads)
    ood = compare_score_metrics(matches, scenes, _metrics_for(cfg, scenes), cfg.id_classes, cfg.ood_classes, cfg.temperature)
    rows = [r.model_dump(by_alias=True) for r in recall.rows]
    body = {"scenes": len(scenes), "recall": rows, "ood": ood.as_report()}
    return body, rows


def run_score(cfg: ScoreConfig, threads: int):
    rows = []
    for scene in read_detections(cfg.detections):
        if not scene.detections:
            continue
        values = id_scores([d.scores for d in scene.detections], cfg.metric, cfg.temperature, scene.score_space)
        rows += [{"scene_id": scene.scene_id, "det_index": i, "score": float(v)} for i, v in enumerate(values)]
    return {"metric": cfg.metric.value, "scores": rows}, rows


def run_losscheck_command(cfg: LosscheckConfig, threads: int):
    report = run_losscheck(cfg.seed, cfg.loss, cfg.epsilon, cfg.tolerance)
    if not report.passed:
        failed = [r.name for r in report.losses if not r.passed]
        logger.error(f"Gradient check failed for {', '.join(failed)}")
    body = report.model_dump(mode="json")
    return body, [r.model_dump() for r in report.losses]


COMMANDS: Dict[str, Tuple[Type[RunConfig], Callable]] = {
    "ingest-kitti": (IngestKittiConfig, run_ingest_kitti),
    "build-bank": (BuildBankConfig, run_build_bank),
    "mix": (MixConfig, run_mix),
    "augment": (AugmentConfig, run_augment),
    "synth": (SynthConfig, run_synth),
    "eval": (EvalRunConfig, run_eval),
    "score": (ScoreConfig, run_score),
    "losscheck": (LosscheckConfig, run_losscheck_command),
}


# ---------- argument parsing ----------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="owl3d", description="Open-world 3D detection evaluation toolkit")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def command(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", dest="_config", help="JSON config file keyed by subcommand")
        p.add_argument("--threads", type=int, help="Worker threads (default: OWL3D_THREADS or 1)")
        p.add_argument("--out", dest="_out", help="Write the JSON report here instead of stdout")
        p.add_argument("--csv", dest="_csv", help="Also write a flattened CSV")
        return p

    p = command("ingest-kitti", "Convert KITTI velodyne/label_2/calib into a scene store")
    p.add_argument("--velodyne-dir", dest="velodyne_dir")
    p.add_argument("--label-dir", dest="label_dir")
    p.add_argument("--calib-dir", dest="calib_dir")
    p.add_argument("--out-dir", dest="out_dir")

    p = command("build-bank", "Extract an object bank from scenes and/or colored scans")
    p.add_argument("--scenes-dir", dest="scenes_dir")
    p.add_argument("--colored-dir", dest="colored_dir")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--classes", type=_csv_strings)
    p.add_argument("--colored-label", dest="colored_label")
    p.add_argument("--min-points", dest="min_points", type=int)

    p = command("mix", "Multi-size mix: resize every odd bank entry to a pooled size")
    p.add_argument("--bank-dir", dest="bank_dir")
    p.add_argument("--sizes-dir", dest="sizes_dir")
    p.add_argument("--size-class", dest="size_class")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--seed", type=int)

    p = command("augment", "Paste bank objects into training scenes")
    p.add_argument("--scenes-dir", dest="scenes_dir")
    p.add_argument("--bank-dir", dest="bank_dir")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--class-label", dest="class_label")
    p.add_argument("--sample-number", dest="sample_number", type=int)
    p.add_argument("--donor-classes", dest="donor_classes", type=_csv_strings)

    p = command("synth", "Freeze a synthetic OOD benchmark")
    p.add_argument("--scenes-dir", dest="scenes_dir")
    p.add_argument("--bank-dir", dest="bank_dir")
    p.add_argument("--donors-dir", dest="donors_dir")
    p.add_argument("--donor-classes", dest="donor_classes", type=_csv_strings)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--name")
    p.add_argument("--samples-per-scene", dest="samples_per_scene", type=int)
    p.add_argument("--range", dest="range_m", type=_csv_floats, help="lo,hi in meters")
    p.add_argument("--unseen-label", dest="unseen_label")

    p = command("eval", "Recall table and OOD metrics from ground truth and detections")
    p.add_argument("--gt-dir", dest="gt_dir")
    p.add_argument("--id-gt-dir", dest="id_gt_dir", help="Source scenes whose ID objects join each benchmark scene")
    p.add_argument("--detections")
    p.add_argument("--k", dest="eval.proposal_k", type=int, help="Proposals kept per scene for matching")
    p.add_argument("--iou", dest="eval.iou_thresholds", type=_csv_floats)
    p.add_argument("--iou-kind", dest="eval.iou_kind", choices=["3d", "bev"])
    p.add_argument("--recall-mode", dest="eval.recall_mode", choices=["coverage", "one_to_one"])
    p.add_argument("--k-values", dest="eval.k_values", type=_csv_ints)
    p.add_argument("--id-classes", dest="id_classes", type=_csv_strings)
    p.add_argument("--ood-classes", dest="ood_classes", type=_csv_strings)
    p.add_argument("--metrics", type=_csv_strings)
    p.add_argument("--temperature", type=float)
    p.add_argument("--num-classes", dest="num_classes", type=int)

    p = command("score", "Apply a score metric to every detection of a detections file")
    p.add_argument("--detections")
    p.add_argument("--metric", choices=[m.value for m in ScoreMetric])
    p.add_argument("--temperature", type=float)

    p = command("losscheck", "Finite-difference verification of the training losses")
    p.add_argument("--seed", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--tolerance", type=float)

    return parser


def _nest(flat: dict) -> dict:
    """{"eval.proposal_k": 5} -> {"eval": {"proposal_k": 5}}"""
    out: dict = {}
    for key, value in flat.items():
        node = out
        *parents, leaf = key.split(".")
        for part in parents:
            node = node.setdefault(part, {})
        node[leaf] = value
    return out


def _merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _load_config_file(path: str, command: str) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise Owl3dError(f"{path} line {e.lineno}: invalid JSON: {e.msg}")
    if not isinstance(data, dict):
        raise UsageError(f"{path}: config must be a JSON object keyed by subcommand")
    section = data.get(command, {})
    if not isinstance(section, dict):
        raise UsageError(f"{path}: section {command!r} must be an object")
    return section


def resolve_config(command: str, args: argparse.Namespace) -> RunConfig:
    model, _ = COMMANDS[command]
    flags = {k: v for k, v in vars(args).items() if not k.startswith("_") and k != "command"}
    values = _load_config_file(args._config, command) if getattr(args, "_config", None) else {}
    try:
        return model.model_validate(_merge(values, _nest(flags)))
    except ValidationError as exc:
        raise UsageError(f"owl3d: invalid configuration: {exc}")


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError("a subcommand is required")
        cfg = resolve_config(args.command, args)
        missing = [str(p) for p in cfg.input_paths() if not p.exists()]
        if missing:
            logger.error(f"Input path does not exist: {missing[0]}")
            sys.stderr.write(f"owl3d: input path does not exist: {missing[0]}\n")
            return EXIT_DATA
        _, runner = COMMANDS[args.command]
        body, rows = runner(cfg, resolve_threads(cfg.threads))
        _emit(_report(args.command, cfg, **body), getattr(args, "_out", None))
        _emit_csv(rows, getattr(args, "_csv", None))
        return EXIT_OK
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    except ValidationError as exc:
        # configuration is validated in resolve_config, so this is input data
        error = schema_error_from_validation(exc)
        logger.error(f"SchemaError: {error}")
        sys.stderr.write(f"owl3d: invalid input data: {error}\n")
        return EXIT_DATA
    except (Owl3dError, OSError) as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        sys.stderr.write(f"owl3d: {exc}\n")
        return EXIT_DATA


def main():
    configure_logging(LOG_LEVEL)
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
