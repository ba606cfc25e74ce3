"""Command-line entry point.

Commands: train, eval, sweep, gradcheck, compare-propagators, export-masks,
make-synthetic. Exit codes: 0 success, 1 configuration/validation error,
2 runtime failure.
"""

import argparse
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import runner
from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError, equivalent_spacing
from .detection import MSE, SCE
from .fields import GridSpec, make_field
from .layers import build_model, layer_modulation
from .propagation import PropagationPlan, asm_propagate, relative_l2, rs_propagate
from .training import DetectorContext, model_grad_check


def _load_cfg(args):
    cfg = cfgmod.load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.deterministic:
        cfg.deterministic = True
    if args.out is not None:
        cfg.out_dir = args.out
    return cfg.validate()


def cmd_train(args):
    cfg = _load_cfg(args)
    init_ckpt = load_checkpoint(args.init_checkpoint) if args.init_checkpoint else None
    ckpt, curve, _, _ = runner.train_from_config(cfg, init_ckpt=init_ckpt)
    ckpt_path, curve_path = runner.write_artifacts(cfg.out_dir, args.name, ckpt,
                                                   curve, cfg)
    print(f"checkpoint: {ckpt_path}")
    print(f"curve: {curve_path}")
    print(f"best_val_accuracy: {ckpt.val_accuracy}")
    return 0


def cmd_eval(args):
    cfg = _load_cfg(args) if args.config else None
    ckpt = load_checkpoint(args.checkpoint)
    report = runner.eval_from_checkpoint(ckpt, cfg)
    out = Path(args.out or ckpt.metadata.get("config", {}).get("out_dir", "runs"))
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{args.name}_eval.csv"
    hash_line = f"# config_hash={ckpt.metadata.get('config_hash', '')}\n"
    csv_path.write_text(hash_line + report.to_csv(), encoding="utf-8")
    print(f"report: {csv_path}")
    print(f"test_accuracy: {report.accuracy}")
    return 0


def cmd_sweep(args):
    cfg = _load_cfg(args)
    layers_axis = [int(x) for x in args.layers.split(",")]
    loss_axis = args.losses.split(",")
    dz_axis = [float(x) for x in args.delta_z.split(",")]
    modes = args.modes.split(",")
    data = runner.load_data(cfg)
    buf = io.StringIO()
    buf.write(f"# config_hash={cfg.config_hash()}\n")
    buf.write("layers,loss,delta_z_ref,modulation,accuracy,efficiency,contrast\n")
    for dz_ref in dz_axis:
        for mode in modes:
            for n_layers in layers_axis:
                for loss in loss_axis:
                    run_cfg = cfgmod.config_from_dict(dict(
                        cfg.to_dict(), n_layers=n_layers, loss=loss,
                        modulation_mode=mode,
                        delta_z=equivalent_spacing(dz_ref, cfg.grid_n),
                        z_in=None, z_out=None))
                    ckpt, _, _, _ = runner.train_from_config(run_cfg, data=data)
                    report = runner.eval_from_checkpoint(ckpt, run_cfg, data)
                    eff = "" if report.mean_efficiency is None else repr(report.mean_efficiency)
                    con = "" if report.mean_contrast is None else repr(report.mean_contrast)
                    buf.write(f"{n_layers},{loss},{dz_ref},{mode},"
                              f"{repr(report.accuracy)},{eff},{con}\n")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{args.name}_sweep.csv"
    path.write_text(buf.getvalue(), encoding="utf-8")
    print(f"sweep: {path}")
    return 0


def cmd_gradcheck(args):
    cfg = _load_cfg(args)
    # always checked on a small grid so finite differences stay cheap
    grid = GridSpec(16, 16, cfg.dx)
    model = build_model(grid, cfg.n_layers, cfg.delta_z, cfg.modulation_mode,
                        cfg.parameterization, z_in=cfg.z_in, z_out=cfg.z_out,
                        padding_factor=cfg.padding_factor)
    det_ctx = DetectorContext(runner.build_layout(cfg, grid), grid)
    rng = np.random.default_rng(cfg.seed)
    err = model_grad_check(model, det_ctx, cfg.loss, rng, n_probes=args.probes)
    print(f"max_relative_fd_error: {err}")
    return 0


def cmd_compare_propagators(args):
    n = args.grid
    grid = GridSpec(n, n)
    rng = np.random.default_rng(args.seed or 0)
    values = rng.random((n, n)) * np.exp(2j * np.pi * rng.random((n, n)))
    field = make_field(grid, values)
    print("z,relative_l2")
    worst = 0.0
    for z in [float(x) for x in args.z.split(",")]:
        fast = asm_propagate(field, PropagationPlan(grid, z, args.padding))
        exact = rs_propagate(field, z)
        err = relative_l2(fast.values, exact.values)
        worst = max(worst, err)
        print(f"{z},{err}")
    return 0


def _write_pgm16(path, data):
    with open(path, "wb") as fh:
        fh.write(f"P5\n{data.shape[1]} {data.shape[0]}\n65535\n".encode())
        fh.write(data.astype(">u2").tobytes())


def cmd_export_masks(args):
    ckpt = load_checkpoint(args.checkpoint)
    model = ckpt.to_model()
    out = Path(args.out or "masks")
    out.mkdir(parents=True, exist_ok=True)
    for i, layer in enumerate(model.layers):
        a, phi = layer_modulation(layer)
        phi_wrapped = np.mod(phi, 2.0 * np.pi)
        _write_pgm16(out / f"layer{i}_amplitude.pgm",
                     np.round(a * 65535.0))
        _write_pgm16(out / f"layer{i}_phase.pgm",
                     np.round(phi_wrapped / (2.0 * np.pi) * 65535.0))
        sidecar = {"layer": i, "phase_min": 0.0, "phase_max": 2.0 * np.pi,
                   "amplitude_min": 0.0, "amplitude_max": 1.0,
                   "config_hash": ckpt.metadata.get("config_hash", "")}
        (out / f"layer{i}.json").write_text(json.dumps(sidecar, sort_keys=True))
    print(f"masks: {out}")
    return 0


def cmd_make_synthetic(args):
    from .synthetic import write_idx_dataset

    paths = write_idx_dataset(args.out or "data", n_train=args.n_train,
                              n_test=args.n_test, seed=args.seed or 1234)
    for name, (ip, lp) in paths.items():
        print(f"{name}: {ip} {lp}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="d2nn")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--deterministic", action="store_true")
        p.add_argument("--out", default=None)
        p.add_argument("--name", default="run")

    p = sub.add_parser("train", help="train a model from a config")
    common(p)
    p.add_argument("--init-checkpoint", default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    common(p, config_required=False)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep", help="layers x loss x spacing x modulation sweep")
    common(p)
    p.add_argument("--layers", default="1,3,5")
    p.add_argument("--losses", default=f"{MSE},{SCE}")
    p.add_argument("--delta-z", dest="delta_z", default="40")
    p.add_argument("--modes", default="phase_only")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("gradcheck", help="adjoint vs finite differences")
    common(p)
    p.add_argument("--probes", type=int, default=20)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("compare-propagators", help="ASM vs direct summation")
    p.add_argument("--grid", type=int, default=16)
    p.add_argument("--z", default="4,40")
    p.add_argument("--padding", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_compare_propagators)

    p = sub.add_parser("export-masks", help="per-layer amplitude/phase images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_export_masks)

    p = sub.add_parser("make-synthetic", help="emit rendered-digit IDX files")
    p.add_argument("--out", default=None)
    p.add_argument("--n-train", type=int, default=60000)
    p.add_argument("--n-test", type=int, default=10000)
    p.add_argument("--seed", type=int, default=1234)
    p.set_defaults(fn=cmd_make_synthetic)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, CheckpointError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
