"""Command-line harness.

Subcommands: phantom, train, sweep, eval, vessel-exp, export. Every command
accepts --config <json>, --seed <u64>, --out <dir>, --threads <n>, prints a
machine-readable JSON summary to stdout, and writes a run manifest with the
fully resolved configuration. Reruns with identical flags and seed produce
byte-identical outputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .backend import backend_name
from .errors import TrainingDiverged, UndefinedMetricError, VolumeFormatError
from .experiments import (DatasetConfig, SweepConfig, VesselExpConfig,
                          build_dataset, dataclass_from_dict, dataclass_to_dict,
                          run_sweep, run_vessel_experiment, write_csv, write_json,
                          METRIC_COLUMNS)
from .fields import Volume3D, slice_xz, threshold
from .fileio import read_volume, write_graymap, write_volume
from .metrics import extract_surfaces, local_mean_deviations, overlap_scores
from .model import ConvModel
from .train import TrainConfig, train


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SystemExit(f"error: cannot read config {path}: {exc}")


def _apply_seed(cfg_dict: dict, seed: int | None, key_path=("phantom", "seed")) -> dict:
    if seed is None:
        return cfg_dict
    node = cfg_dict
    for key in key_path[:-1]:
        node = node.setdefault(key, {})
    node[key_path[-1]] = seed
    return cfg_dict


def _write_manifest(out: Path, command: str, config: dict, outputs: list[str]) -> None:
    write_json(out / "manifest.json", {
        "command": command,
        "config": config,
        "outputs": sorted(outputs),
        "package_version": __version__,
        "kernel_backend": backend_name(),
    })


def _emit(summary: dict) -> None:
    print(json.dumps(summary, sort_keys=True))


def _outputs_of(out: Path) -> list[str]:
    return sorted(p.name for p in out.iterdir() if p.is_file())


# ---------------------------------------------------------------------------
# commands


def cmd_phantom(args) -> int:
    raw = _apply_seed(_load_config(args.config), args.seed)
    cfg = dataclass_from_dict(DatasetConfig, raw)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = build_dataset(cfg)
    checksums = {}
    for vid, lv in dataset["volumes"].items():
        write_volume(lv.volume, out / f"{vid}_image")
        write_volume(Volume3D(values=lv.epidermis_gt,
                              spacing_um=lv.volume.spacing_um),
                     out / f"{vid}_epidermis", as_mask=True)
        write_volume(Volume3D(values=lv.vessel_gt,
                              spacing_um=lv.volume.spacing_um),
                     out / f"{vid}_vessels", as_mask=True)
        for suffix in ("image", "epidermis", "vessels"):
            name = f"{vid}_{suffix}.raw"
            checksums[name] = _sha256(out / name)
    write_json(out / "dataset.json", {
        "ids": sorted(dataset["volumes"]),
        "split": dataset["split"],
        "config": dataclass_to_dict(cfg),
    })
    _write_manifest(out, "phantom", dataclass_to_dict(cfg), _outputs_of(out))
    _emit({"command": "phantom", "out": str(out), "volumes": len(dataset["volumes"]),
           "split": dataset["split"], "checksums": checksums})
    return 0


def cmd_train(args) -> int:
    raw = _apply_seed(_load_config(args.config), args.seed,
                      key_path=("dataset", "phantom", "seed"))
    dataset_cfg = dataclass_from_dict(DatasetConfig, raw.get("dataset", {}))
    train_cfg = dataclass_from_dict(TrainConfig, raw.get("train", {}))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = build_dataset(dataset_cfg)
    model = ConvModel(hidden_channels=train_cfg.hidden_channels,
                      seed=dataset_cfg.phantom.seed)
    try:
        model, record = train(model, dataset["train"], dataset["val"], train_cfg,
                              seed=dataset_cfg.phantom.seed)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    model.save(out / "model.ckpt", epoch=record.best_epoch)
    write_json(out / "train_record.json", record.as_dict())
    config = {"dataset": dataclass_to_dict(dataset_cfg),
              "train": dataclass_to_dict(train_cfg)}
    _write_manifest(out, "train", config, _outputs_of(out))
    last = record.epochs[record.best_epoch]
    _emit({"command": "train", "out": str(out), "best_epoch": record.best_epoch,
           "epochs_run": len(record.epochs), "val_dice": last.val_dice,
           "val_total": last.val_total, "checkpoint": "model.ckpt",
           "checksum": _sha256(out / "model.ckpt")})
    return 0


def cmd_sweep(args) -> int:
    raw = _apply_seed(_load_config(args.config), args.seed,
                      key_path=("dataset", "phantom", "seed"))
    cfg = dataclass_from_dict(SweepConfig, raw)
    out = Path(args.out)
    report = run_sweep(cfg, out, threads=args.threads)
    config = dataclass_to_dict(cfg)
    _write_manifest(out, "sweep", config, _outputs_of(out))
    _emit({"command": "sweep", "out": str(out), "report": report})
    return 0


def cmd_vessel_exp(args) -> int:
    raw = _apply_seed(_load_config(args.config), args.seed)
    cfg = dataclass_from_dict(VesselExpConfig, raw)
    out = Path(args.out)
    report = run_vessel_experiment(cfg, out)
    _write_manifest(out, "vessel-exp", dataclass_to_dict(cfg), _outputs_of(out))
    _emit({"command": "vessel-exp", "out": str(out),
           "dice_no_mask": report["arms"]["no_mask"]["dice"]["mean"],
           "dice_learned_mask": report["arms"]["learned_mask"]["dice"]["mean"],
           "dice_oracle_mask": report["arms"]["oracle_mask"]["dice"]["mean"],
           "dice_improvement": report["dice_improvement"],
           "detector_threshold": report["detector"]["threshold"]})
    return 0


def cmd_eval(args) -> int:
    raw = _load_config(args.config)
    for key in ("pred", "gt"):
        if key not in raw:
            print(f"error: eval config needs {key!r} (path to a mask volume)",
                  file=sys.stderr)
            return 2
    pred_vol = read_volume(raw["pred"])
    gt_vol = read_volume(raw["gt"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    X, Y, Z = gt_vol.dims
    rows = []
    for y in range(Y):
        pred_slice = slice_xz(pred_vol, y).astype(np.uint8)
        gt_slice = slice_xz(gt_vol, y).astype(np.uint8)
        scores = overlap_scores(pred_slice, gt_slice)
        devs = []
        top, bottom = extract_surfaces(pred_slice)
        for profile in (top, bottom):
            if profile.valid.any():
                devs.append(local_mean_deviations(profile))
        ra = float(np.concatenate(devs).mean()) if devs else float("nan")
        rows.append([f"y{y:03d}", float("nan"), "external", scores.dice,
                     scores.precision, scores.recall, scores.iou, ra,
                     top.n_invalid])
    volume_scores = overlap_scores(pred_vol.values, gt_vol.values)
    write_csv(out / "eval.csv", METRIC_COLUMNS, rows)
    _write_manifest(out, "eval", {"pred": str(raw["pred"]), "gt": str(raw["gt"])},
                    _outputs_of(out))
    _emit({"command": "eval", "out": str(out),
           "dice": volume_scores.dice, "iou": volume_scores.iou,
           "precision": volume_scores.precision, "recall": volume_scores.recall,
           "n_slices": Y})
    return 0


def _overlay(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Image with the mask's top/bottom boundary pixels pushed to max."""
    out = image.astype(np.float64).copy()
    hi = out.max() if out.size else 1.0
    top, bottom = extract_surfaces(mask)
    for x in np.nonzero(top.valid)[0]:
        out[int(top.depths[x]), x] = hi
        out[int(bottom.depths[x]), x] = hi
    return out


def cmd_export(args) -> int:
    raw = _load_config(args.config)
    if "volume" not in raw or "y" not in raw:
        print("error: export config needs 'volume' (path) and 'y' (slice index)",
              file=sys.stderr)
        return 2
    vol = read_volume(raw["volume"])
    image = slice_xz(vol, int(raw["y"]))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_graymap(image, out / "slice_image.pgm")
    written = ["slice_image.pgm"]
    if "gt" in raw:
        gt = slice_xz(read_volume(raw["gt"]), int(raw["y"])).astype(np.uint8)
        write_graymap(_overlay(image, gt), out / "slice_gt_overlay.pgm")
        written.append("slice_gt_overlay.pgm")
    if "pred" in raw:
        pred = slice_xz(read_volume(raw["pred"]), int(raw["y"])).astype(np.uint8)
        write_graymap(_overlay(image, pred), out / "slice_pred_overlay.pgm")
        written.append("slice_pred_overlay.pgm")
    _write_manifest(out, "export", {k: str(v) for k, v in raw.items()},
                    _outputs_of(out))
    _emit({"command": "export", "out": str(out), "outputs": sorted(written)})
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layerseg",
        description="Smoothness-regularized layer segmentation toolkit")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, default=None,
                        help="override the phantom/model seed")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--threads", type=int, default=1,
                        help="parallel workers where supported")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("phantom", parents=[common],
                   help="generate a labeled phantom dataset").set_defaults(fn=cmd_phantom)
    sub.add_parser("train", parents=[common],
                   help="train the conv segmenter").set_defaults(fn=cmd_train)
    sub.add_parser("sweep", parents=[common],
                   help="smoothness-weight sweep").set_defaults(fn=cmd_sweep)
    sub.add_parser("eval", parents=[common],
                   help="score a prediction mask against ground truth").set_defaults(fn=cmd_eval)
    sub.add_parser("vessel-exp", parents=[common],
                   help="vessel-masking sensitivity experiment").set_defaults(fn=cmd_vessel_exp)
    sub.add_parser("export", parents=[common],
                   help="export slice graymaps").set_defaults(fn=cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, VolumeFormatError, UndefinedMetricError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
