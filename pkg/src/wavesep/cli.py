"""Command-line entry point: train, separate, evaluate, inspect, ablate.

Exit codes: 0 success, 1 usage/config error, 2 numeric abort, 3 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from wavesep import ablation
from wavesep.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from wavesep.config import ConfigFileError, documented_defaults, load_config
from wavesep.dataset import DatasetError, scan_dataset
from wavesep.evaluate import evaluate, separate
from wavesep.model import ConfigError, build_model, render_inspect
from wavesep.tensor import DimensionError
from wavesep.train import TrainingDiverged, train_loop, write_history
from wavesep.wavio import WavFormatError, load_wav, write_wav

log = logging.getLogger("wavesep")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_DATA = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _run_config(args):
    rc = load_config(args.config)
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        rc.set(key.strip(), value.strip(), "--set: ")
    return rc


def cmd_train(args) -> int:
    rc = _run_config(args)
    data = args.data or rc.paths.get("data")
    out = args.out or rc.paths.get("out")
    if not data or not out:
        raise UsageError("train needs --data and --out (or data/out in the config file)")
    history = args.history or rc.paths.get("history") or f"{out}.history.csv"
    overrides = {"checkpoint_path": out}
    if args.seed is not None:
        overrides["seed"] = args.seed
    tcfg = rc.train_config(**overrides)
    if args.resume:
        ck = load_checkpoint(args.resume)
        model, optimizer, start = ck.model, ck.optimizer, ck.step
        if rc.model and rc.model_config() != model.config:
            log.warning("model keys in the config file are ignored when resuming")
    else:
        model, optimizer, start = build_model(rc.model_config()), None, 0
    stems = model.config.source_names
    train = scan_dataset(data, "train", stems)
    val = scan_dataset(data, "validation", stems)
    if not len(train):
        raise DatasetError([f"{data}: train split is empty"])
    result = train_loop(model, train, val if len(val) else None, tcfg, optimizer, start)
    if result.step == start:
        save_checkpoint(out, result.model, result.optimizer, start // tcfg.steps_per_epoch, start)
    write_history(history, result.history, append=bool(args.resume))
    log.info("trained to step %d; checkpoint %s, history %s", result.step, out, history)
    return EXIT_OK


def cmd_separate(args) -> int:
    ck = load_checkpoint(args.ckpt)
    cfg = ck.model.config
    mixture, rate = load_wav(args.input)
    if mixture.shape[0] != cfg.C:
        raise DimensionError(f"{args.input} has {mixture.shape[0]} channels, model expects {cfg.C}")
    est = separate(ck.model, mixture).astype(np.float32)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for name, x in zip(cfg.source_names, est):
        write_wav(outdir / f"{name}.wav", x, rate, codec=args.codec)
    log.info("wrote %d sources to %s", len(est), outdir)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    ck = load_checkpoint(args.ckpt)
    test = scan_dataset(args.data, "test", ck.model.config.source_names)
    if not len(test):
        raise DatasetError([f"{args.data}: test split is empty"])
    report = evaluate(ck.model, test)
    out = Path(args.report)
    out.write_text(report.to_csv())
    table = report.to_table(f"{ck.model.config.arch} on {len(test)} test tracks")
    out.with_suffix(".txt").write_text(table)
    sys.stderr.write(table)
    return EXIT_OK


def cmd_inspect(args) -> int:
    if args.defaults:
        sys.stdout.write(documented_defaults())
        return EXIT_OK
    rc = _run_config(args)
    sys.stdout.write(render_inspect(build_model(rc.model_config())) + "\n")
    return EXIT_OK


def cmd_ablate(args) -> int:
    rc = _run_config(args)
    out = Path(args.out)
    if args.seed is not None:
        rc.train["seed"] = args.seed
    if args.toy:
        base = replace(ablation.TOY_MODEL, **rc.model)
        tcfg = replace(ablation.TOY_TRAIN, **rc.train)
        data = args.data or ablation.make_toy_data(out / "toy_data", base.K, base.C, tcfg.seed)
    else:
        if not args.data:
            raise UsageError("ablate needs --data unless --toy is given")
        base, tcfg, data = rc.model_config(), rc.train_config(), args.data
    path = ablation.run_ablation(data, out, base, tcfg)
    log.info("ablation results in %s", path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wavesep", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", help="key = value run configuration file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config key (repeatable)")

    t = sub.add_parser("train", help="train a model")
    with_config(t)
    t.add_argument("--data")
    t.add_argument("--out", help="checkpoint path")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--seed", type=int)
    t.add_argument("--history", help="history CSV (default: <out>.history.csv)")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("separate", help="separate a mixture WAV")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--outdir", required=True)
    s.add_argument("--codec", choices=("float32", "pcm16"), default="float32")
    s.set_defaults(func=cmd_separate)

    e = sub.add_parser("evaluate", help="SDR report on the test split")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--report", required=True)
    e.set_defaults(func=cmd_evaluate)

    i = sub.add_parser("inspect", help="print layers, dilations and receptive field")
    with_config(i)
    i.add_argument("--defaults", action="store_true", help="print every config key and default")
    i.set_defaults(func=cmd_inspect)

    a = sub.add_parser("ablate", help="run the dilation/density ablation grid")
    with_config(a)
    a.add_argument("--data")
    a.add_argument("--out", required=True)
    a.add_argument("--toy", action="store_true", help="small models on synthetic tones")
    a.add_argument("--seed", type=int)
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        log.error("%s", exc)
        return EXIT_NUMERIC
    except (DatasetError, WavFormatError, DimensionError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except (UsageError, ConfigFileError, ConfigError, CheckpointError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
