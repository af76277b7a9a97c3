"""Command-line benchmark harness.

    snnbench <command> --config <path> [--set key=value]... --out <dir>

Commands: train, eval, profile, ablate, report. Every run echoes the fully
merged configuration to <out>/effective-config.txt so results can be
reproduced from the output directory alone. Exit code 0 on success, 2 with a
one-line reason on stderr otherwise.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from . import config as C
from .arch import SCHEDULE_NAMES, ArchSpec, apply_schedule, build, scale_width, schedule_mask
from .data import (Dataset, load_cifar_bin, load_tinyimagenet, normalize,
                   synth_blobs, train_val_split)
from .lif import LifParams
from .metrics import evaluate
from .profiler import profile_forward
from .report import BenchRow, read_bench_csv, row_energy_mj, write_bench_csv, write_report
from .train import (TrainConfig, load_checkpoint, predict, save_checkpoint,
                    train_network)


def build_dataset(cfg: dict) -> Dataset:
    source = C.cfg_str(cfg, "data.source")
    if source == "synth":
        ds = synth_blobs(seed=C.cfg_int(cfg, "data.seed"),
                         classes=C.cfg_int(cfg, "data.classes"),
                         per_class=C.cfg_int(cfg, "data.per_class"),
                         size=C.cfg_int(cfg, "data.size"))
    elif source in ("cifar10", "cifar100"):
        path = C.cfg_str(cfg, "data.path")
        if not path:
            raise ValueError(f"data.path is required for source {source}")
        ds = load_cifar_bin(path, variant=10 if source == "cifar10" else 100,
                            split=C.cfg_str(cfg, "data.split"))
        ds = Dataset(normalize(ds.images), ds.labels, ds.class_count, ds.split)
    elif source == "tinyimagenet":
        path = C.cfg_str(cfg, "data.path")
        if not path:
            raise ValueError("data.path is required for source tinyimagenet")
        ds = load_tinyimagenet(path, split=C.cfg_str(cfg, "data.split"))
        ds = Dataset(normalize(ds.images), ds.labels, ds.class_count, ds.split)
    else:
        raise ValueError(f"unknown data.source {source!r}; "
                         "valid: synth, cifar10, cifar100, tinyimagenet")
    limit = C.cfg_opt_int(cfg, "data.limit")
    if limit is not None:
        ds = ds.subset(np.arange(min(limit, len(ds))), ds.split)
    return ds


def build_arch(cfg: dict, class_count: int) -> ArchSpec:
    spec = apply_schedule(ArchSpec(), C.cfg_str(cfg, "model.schedule"))
    width = C.cfg_float(cfg, "model.width_scale")
    if width != 1.0:
        spec = scale_width(spec, width)
    return replace(spec,
                   mode=C.cfg_str(cfg, "model.mode"),
                   time_steps=C.cfg_int(cfg, "model.time_steps"),
                   num_classes=class_count)


def lif_params_from(cfg: dict) -> LifParams:
    return LifParams(tau=C.cfg_float(cfg, "model.tau"),
                     alpha=C.cfg_float(cfg, "model.alpha"),
                     leak_factor=C.cfg_opt_float(cfg, "model.leak_factor"))


def train_config_from(cfg: dict) -> TrainConfig:
    return TrainConfig(
        lr=C.cfg_float(cfg, "train.lr"),
        decay_factor=C.cfg_float(cfg, "train.decay_factor"),
        decay_epochs=C.cfg_int_list(cfg, "train.decay_epochs"),
        batch_size=C.cfg_int(cfg, "train.batch_size"),
        max_epochs=C.cfg_int(cfg, "train.max_epochs"),
        patience=C.cfg_int(cfg, "train.patience"),
        seed=C.cfg_int(cfg, "train.seed"),
        ga_lambda=C.cfg_float(cfg, "train.lambda"),
        epsilon=C.cfg_float(cfg, "train.epsilon"),
        time_steps=C.cfg_int(cfg, "model.time_steps"),
        ga_mode=C.cfg_str(cfg, "train.ga_mode"),
        val_fraction=C.cfg_float(cfg, "train.val_fraction"))


def echo_config(cfg: dict, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "effective-config.txt"), "w", encoding="utf-8") as f:
        f.write(C.format_config(cfg))


def _mirror_weights(src_net, dst_net) -> None:
    for a, b in zip(src_net.parameters(), dst_net.parameters()):
        b.data = a.data.copy()


def _profile_row(cfg: dict, net, batch: Dataset, schedule_name: str) -> tuple:
    result = profile_forward(
        net, batch.images,
        first_layer_macs_once=C.cfg_bool(cfg, "profile.first_layer_macs_once"),
        membrane_update_macs=C.cfg_bool(cfg, "profile.membrane_update_macs"))
    preds = predict(net, batch.images)
    metrics = evaluate(preds, batch.labels, batch.class_count)
    delta_acc = None
    if net.spec.mode == "snn" and C.cfg_bool(cfg, "profile.compare_cnn"):
        twin = build(replace(net.spec, mode="cnn"))
        _mirror_weights(net, twin)
        twin_preds = predict(twin, batch.images)
        delta_acc = metrics.accuracy - evaluate(twin_preds, batch.labels,
                                                batch.class_count).accuracy
    row = BenchRow(
        model=f"{net.spec.mode}-squeezenet",
        schedule=schedule_name,
        dataset=C.cfg_str(cfg, "data.source"),
        acc=metrics.accuracy, f1=metrics.macro_f1,
        ac=result.counts.ac, mac=result.counts.mac, params=result.counts.params,
        energy_mj=row_energy_mj(result.counts.ac, result.counts.mac),
        eta=result.report.eta, delta_acc=delta_acc,
        retained="+".join(sorted(schedule_mask(schedule_name))))
    return row, result


def _profile_batch(cfg: dict, ds: Dataset) -> Dataset:
    n = min(C.cfg_int(cfg, "profile.batch_size"), len(ds))
    return ds.subset(np.arange(n), ds.split)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_train(cfg: dict, out_dir: str, full_scale: bool) -> int:
    ds = build_dataset(cfg)
    tc = train_config_from(cfg)
    train_ds, val_ds = train_val_split(ds, tc.val_fraction, tc.seed)
    spec = build_arch(cfg, ds.class_count)
    net = build(spec, lif_params_from(cfg), seed=tc.seed)
    result = train_network(net, train_ds.images, train_ds.labels,
                           val_ds.images, val_ds.labels, tc, out_dir)
    ckpt = os.path.join(out_dir, "checkpoint.bin")
    save_checkpoint(net, ckpt)
    echo_config(cfg, out_dir)
    print(f"train: epochs={result.epochs_run} stop={result.stop_reason} "
          f"train_acc={result.final_train_acc:.4f} best_val={result.best_val_acc:.4f} "
          f"checkpoint={ckpt}")
    return 0


def cmd_eval(cfg: dict, out_dir: str, full_scale: bool) -> int:
    ckpt = C.cfg_str(cfg, "eval.checkpoint")
    if not ckpt:
        raise ValueError("eval.checkpoint is required")
    net = load_checkpoint(ckpt)
    ds = build_dataset(cfg)
    preds = predict(net, ds.images)
    metrics = evaluate(preds, ds.labels, ds.class_count)
    echo_config(cfg, out_dir)
    with open(os.path.join(out_dir, "metrics.csv"), "w", encoding="utf-8") as f:
        f.write("metric,value\n")
        f.write(f"accuracy,{metrics.accuracy!r}\n")
        f.write(f"macro_f1,{metrics.macro_f1!r}\n")
    print(f"eval: acc={metrics.accuracy:.4f} macro_f1={metrics.macro_f1:.4f} n={len(ds)}")
    return 0


def cmd_profile(cfg: dict, out_dir: str, full_scale: bool) -> int:
    ds = build_dataset(cfg)
    batch = _profile_batch(cfg, ds)
    ckpt = C.cfg_str(cfg, "profile.checkpoint")
    if ckpt:
        net = load_checkpoint(ckpt)
        schedule_name = C.cfg_str(cfg, "model.schedule")
    else:
        spec = build_arch(cfg, ds.class_count)
        net = build(spec, lif_params_from(cfg), seed=C.cfg_int(cfg, "train.seed"))
        schedule_name = C.cfg_str(cfg, "model.schedule")
    row, result = _profile_row(cfg, net, batch, schedule_name)
    echo_config(cfg, out_dir)
    write_bench_csv([row], os.path.join(out_dir, "bench.csv"))
    with open(os.path.join(out_dir, "layers.csv"), "w", encoding="utf-8") as f:
        f.write(result.layer_table_csv())
    eta_txt = f" eta={row.eta:.3f}" if row.eta is not None else ""
    print(f"profile: mode={net.spec.mode} ac={row.ac} mac={row.mac} "
          f"params={row.params} energy_mj={row.energy_mj:.6g}{eta_txt}")
    return 0


def cmd_ablate(cfg: dict, out_dir: str, full_scale: bool) -> int:
    if full_scale:
        print("warning: --full-scale trains every schedule at the configured "
              "epoch budget; this can take a very long time", file=sys.stderr)
    ds = build_dataset(cfg)
    do_train = C.cfg_bool(cfg, "ablate.train") or full_scale
    tc = train_config_from(cfg)
    rows = []
    for name in SCHEDULE_NAMES:
        spec = apply_schedule(build_arch(cfg, ds.class_count), name)
        net = build(spec, lif_params_from(cfg), seed=tc.seed)
        if do_train:
            train_ds, val_ds = train_val_split(ds, tc.val_fraction, tc.seed)
            train_network(net, train_ds.images, train_ds.labels,
                          val_ds.images, val_ds.labels, tc)
        batch = _profile_batch(cfg, ds)
        row, _ = _profile_row(cfg, net, batch, name)
        rows.append(row)
    echo_config(cfg, out_dir)
    write_bench_csv(rows, os.path.join(out_dir, "bench.csv"))
    with open(os.path.join(out_dir, "schedules.csv"), "w", encoding="utf-8") as f:
        f.write("schedule,retained\n")
        for row in rows:
            f.write(f"{row.schedule},{row.retained}\n")
    print(f"ablate: {len(rows)} schedules -> {os.path.join(out_dir, 'bench.csv')}")
    return 0


def cmd_report(cfg: dict, out_dir: str, full_scale: bool) -> int:
    path = C.cfg_str(cfg, "report.input")
    if not path:
        raise ValueError("report.input is required (path to a bench.csv)")
    rows = read_bench_csv(path)
    echo_config(cfg, out_dir)
    summary_path, svg_path = write_report(rows, out_dir)
    print(f"report: {len(rows)} rows -> {svg_path}, {summary_path}")
    return 0


_COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "profile": cmd_profile,
    "ablate": cmd_ablate,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="snnbench",
        description="Train, profile, and report on spiking SqueezeNet variants.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--set", action="append", default=[], dest="overrides",
                       metavar="KEY=VALUE", help="override one config key")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--full-scale", action="store_true",
                       help="run the long full-scale variant (ablate/train)")
    args = parser.parse_args(argv)
    try:
        cfg = C.effective_config(args.config, args.overrides)
        os.makedirs(args.out, exist_ok=True)
        return _COMMANDS[args.command](cfg, args.out, args.full_scale)
    except Exception as exc:
        print(f"snnbench {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
