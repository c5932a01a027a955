"""Dilation and density ablation grid.

Seven runs: three dilation schemes on the plain dilated network, then one
and three blocks, each with and without dense connections, at a fixed
dilation of 512.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

from wavesep.dataset import scan_dataset
from wavesep.evaluate import LABELS, evaluate
from wavesep.model import ModelConfig, build_model
from wavesep.synth import write_synthetic_dataset
from wavesep.train import TrainConfig, train_loop

log = logging.getLogger(__name__)

TOY_MODEL = ModelConfig(arch="dilated", num_blocks=3, layers_per_block=3, base_filters=4,
                        K=2, C=1, segment_length=1024)
TOY_TRAIN = TrainConfig(lr=1e-3, batch_size=4, epochs=1, steps_per_epoch=60, val_segments=4,
                        micro_batch=0)
TOY_TRACK_LENGTH = 8192


@dataclass(frozen=True)
class AblationRun:
    group: str
    label: str
    model: ModelConfig


def ablation_grid(base: ModelConfig) -> list[AblationRun]:
    runs = [AblationRun("dilation", mode, replace(base, arch="dilated", dilation_mode=mode))
            for mode in ("fixed(1)", "fixed(512)", "adaptive")]
    for blocks in (1, 3):
        for arch in ("dilated_dense", "dilated"):
            label = f"{blocks}-block {'dense' if arch == 'dilated_dense' else 'plain'}"
            runs.append(AblationRun("density", label,
                                    replace(base, arch=arch, num_blocks=blocks, dilation_mode="fixed(512)")))
    return runs


def config_hash(model: ModelConfig, train: TrainConfig) -> str:
    blob = json.dumps({"model": model.to_dict(), "train": vars(train)}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def make_toy_data(root, K: int = 2, C: int = 1, seed: int = 0) -> Path:
    stems = ModelConfig(K=K).source_names
    return write_synthetic_dataset(root, stems, C=C, length=TOY_TRACK_LENGTH,
                                   counts={"train": 64, "validation": 2, "test": 4}, seed=seed,
                                   task="close")


def run_one(model_cfg: ModelConfig, train_cfg: TrainConfig, data_root) -> dict[str, float]:
    stems = model_cfg.source_names
    train = scan_dataset(data_root, "train", stems)
    val = scan_dataset(data_root, "validation", stems)
    test = scan_dataset(data_root, "test", stems)
    result = train_loop(build_model(model_cfg), train, val if len(val) else None, train_cfg)
    report = evaluate(result.model, test)
    return {s.name: (s.mean, s.median) for s in report.sources}


def run_ablation(data_root, out_dir, base: ModelConfig, train_cfg: TrainConfig) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "ablation.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "run", "config_hash", "arch", "num_blocks", "dilation_mode",
                    "source", "mean_sdr_db", "median_sdr_db"])
        for run in ablation_grid(base):
            log.info("ablation run %s / %s", run.group, run.label)
            scores = run_one(run.model, train_cfg, data_root)
            tag = config_hash(run.model, train_cfg)
            for name, (mean, median) in scores.items():
                w.writerow([run.group, run.label, tag, run.model.arch, run.model.num_blocks,
                            run.model.dilation_mode, LABELS.get(name, name), f"{mean:.3f}",
                            f"{median:.3f}"])
            fh.flush()
    return path
