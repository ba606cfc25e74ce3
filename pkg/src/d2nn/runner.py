"""Glue between run configurations, tasks, training and artifacts.

Used by the CLI and by the acceptance suite so both exercise the same
code paths.
"""

import io
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import dataset as ds
from . import detection, metrics
from .checkpoint import Checkpoint, from_model, load_checkpoint, save_checkpoint
from .config import (ALL_OPTICAL, DIRECT, PERFECT_IMAGER, STAGE1, STAGE2,
                     ConfigError)
from .electronic import make_net
from .fields import GridSpec
from .hybrid import (HybridTask, PerfectImagerTask, Stage1Task, default_sensor)
from .layers import LayerParams, build_model
from .training import DetectorContext, OpticalTask, evaluate_accuracy, train_task


def build_grid(cfg):
    return GridSpec(cfg.grid_n, cfg.grid_n, cfg.dx)


def build_layout(cfg, grid):
    if cfg.detector_layout:
        return detection.DetectorLayout(
            tuple(tuple(c) for c in cfg.detector_layout["centers"]),
            float(cfg.detector_layout["side"]))
    return detection.default_layout(grid)


def build_det_ctx(cfg, grid=None):
    grid = grid or build_grid(cfg)
    return DetectorContext(build_layout(cfg, grid), grid)


def build_optical_model(cfg, grid=None):
    grid = grid or build_grid(cfg)
    return build_model(grid, cfg.n_layers, cfg.delta_z, cfg.modulation_mode,
                       cfg.parameterization, z_in=cfg.z_in, z_out=cfg.z_out,
                       padding_factor=cfg.padding_factor)


def load_data(cfg):
    """Train/val/test arrays per the config, with desk-scale subsetting."""
    train_pool = ds.load_idx(cfg.train_images, cfg.train_labels)
    test_pool = ds.load_idx(cfg.test_images, cfg.test_labels)
    train, val, test = ds.split(train_pool, test_pool, cfg.seed)
    if cfg.n_train:
        train = ds.stratified_subsample(train, cfg.n_train, cfg.seed)
    if cfg.n_val:
        val = ds.stratified_subsample(val, cfg.n_val, cfg.seed)
    if cfg.n_test:
        test = ds.stratified_subsample(test, cfg.n_test, cfg.seed)
    return {
        "train_images": train.images, "train_labels": train.labels,
        "val_images": val.images, "val_labels": val.labels,
        "test_images": test.images, "test_labels": test.labels,
    }


def build_task(cfg, mode=None, init_ckpt=None):
    """Task object for a hybrid mode; init_ckpt seeds stage-2 optical layers."""
    mode = mode or cfg.hybrid_mode
    grid = build_grid(cfg)
    rng = np.random.default_rng(cfg.seed)
    if mode == PERFECT_IMAGER:
        net = make_net(cfg.electronic, cfg.sensor_p, rng=rng)
        return PerfectImagerTask(cfg.sensor_p, net)
    model = build_optical_model(cfg, grid)
    if init_ckpt is not None:
        init_model = init_ckpt.to_model()
        if init_model.grid != grid or len(init_model.layers) != cfg.n_layers:
            raise ConfigError("initial checkpoint geometry conflicts with config")
        model = init_model
    if mode == ALL_OPTICAL:
        return OpticalTask(model, build_det_ctx(cfg, grid), cfg.loss, cfg.encoding)
    sensor = default_sensor(grid, cfg.sensor_p)
    if mode == STAGE1:
        return Stage1Task(model, sensor, build_det_ctx(cfg, grid), cfg.encoding)
    if mode in (STAGE2, DIRECT):
        net = make_net(cfg.electronic, cfg.sensor_p, rng=rng)
        return HybridTask(model, sensor, net, cfg.encoding)
    raise ConfigError(f"unknown hybrid mode {mode!r}")


def checkpoint_from_task(task, cfg, mode, val_acc, epoch):
    meta = {
        "mode": mode,
        "encoding": cfg.encoding,
        "loss": cfg.loss,
        "seed": cfg.seed,
        "epoch": epoch,
        "val_accuracy": val_acc,
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
    }
    if isinstance(task, PerfectImagerTask):
        grid = build_grid(cfg)
        ckpt = Checkpoint(dict(meta, n_x=grid.n_x, n_y=grid.n_y, dx=grid.dx,
                               n_layers=0, z_in=0.0, delta_z=cfg.delta_z, z_out=0.0,
                               modulation_mode=cfg.modulation_mode,
                               parameterization=cfg.parameterization), [], [])
        ckpt.electronic = {f"net.{k}": np.asarray(v, dtype=np.float64)
                           for k, v in task.net.state_arrays().items()}
        return ckpt
    ckpt = from_model(task.model, meta)
    if isinstance(task, Stage1Task):
        vl = task.virtual_model.layers[0]
        ckpt.electronic["virtual.alpha"] = vl.alpha.astype(np.float64)
        ckpt.electronic["virtual.beta"] = vl.beta.astype(np.float64)
    if isinstance(task, HybridTask):
        ckpt.electronic = {f"net.{k}": np.asarray(v, dtype=np.float64)
                           for k, v in task.net.state_arrays().items()}
    return ckpt


def task_from_checkpoint(ckpt, cfg=None):
    """Rebuild the task a checkpoint was trained as, for evaluation."""
    meta = ckpt.metadata
    cfg = cfg or cfgmod.config_from_dict(meta["config"])
    if (meta["n_x"], meta["dx"]) != (cfg.grid_n, cfg.dx):
        raise ConfigError("checkpoint geometry conflicts with requested config")
    mode = meta["mode"]
    grid = build_grid(cfg)
    if mode == PERFECT_IMAGER:
        net = make_net(cfg.electronic, cfg.sensor_p)
        net.load_state({k[4:]: v for k, v in ckpt.electronic.items()})
        return PerfectImagerTask(cfg.sensor_p, net)
    model = ckpt.to_model()
    if mode == ALL_OPTICAL:
        return OpticalTask(model, build_det_ctx(cfg, grid), cfg.loss, cfg.encoding)
    sensor = default_sensor(grid, cfg.sensor_p)
    if mode == STAGE1:
        vl = LayerParams(ckpt.electronic["virtual.alpha"],
                         ckpt.electronic["virtual.beta"],
                         model.modulation_mode, model.parameterization)
        return Stage1Task(model, sensor, build_det_ctx(cfg, grid), cfg.encoding,
                          virtual_layer=vl)
    net = make_net(cfg.electronic, cfg.sensor_p)
    net.load_state({k[4:]: v for k, v in ckpt.electronic.items()
                    if k.startswith("net.")})
    return HybridTask(model, sensor, net, cfg.encoding)


def curve_to_csv(curve, cfg):
    buf = io.StringIO()
    buf.write(f"# config_hash={cfg.config_hash()}\n")
    buf.write("epoch,train_loss,val_accuracy\n")
    for rec in curve:
        buf.write(f"{rec.epoch},{repr(rec.train_loss)},{repr(rec.val_accuracy)}\n")
    return buf.getvalue()


def train_from_config(cfg, data=None, init_ckpt=None):
    """Run the training pipeline for a config.

    stage2 without an explicit initial checkpoint first runs stage 1 for the
    same number of epochs, then the joint stage. Returns (checkpoint, curve);
    stage-2 curves are the joint-stage curves.
    """
    data = data or load_data(cfg)
    mode = cfg.hybrid_mode
    if mode == STAGE2 and init_ckpt is None:
        stage1_task = build_task(cfg, mode=STAGE1)
        snap, val_acc, epoch, _ = train_task(stage1_task, data, cfg.epochs,
                                             cfg.batch_size, cfg.lr, cfg.seed)
        stage1_task.restore(snap)
        init_ckpt = checkpoint_from_task(stage1_task, cfg, STAGE1, val_acc, epoch)
    task = build_task(cfg, mode=mode, init_ckpt=init_ckpt)
    snap, val_acc, epoch, curve = train_task(task, data, cfg.epochs,
                                             cfg.batch_size, cfg.lr, cfg.seed)
    task.restore(snap)
    ckpt = checkpoint_from_task(task, cfg, mode, val_acc, epoch)
    return ckpt, curve, task, data


def eval_from_checkpoint(ckpt, cfg=None, data=None):
    """Evaluate a checkpoint on the test split; returns an EvalReport."""
    meta = ckpt.metadata
    cfg = cfg or cfgmod.config_from_dict(meta["config"])
    data = data or load_data(cfg)
    task = task_from_checkpoint(ckpt, cfg)
    if meta["mode"] == ALL_OPTICAL:
        return metrics.evaluate_model(task.model, data["test_images"],
                                      data["test_labels"], task.det_ctx,
                                      cfg.encoding)
    labels = data["test_labels"]
    preds = np.concatenate([task.predict(data["test_images"][s:s + 256])
                            for s in range(0, len(labels), 256)])
    cm = metrics.confusion_matrix(labels, preds, 10)
    acc = float(np.mean(preds == labels))
    return metrics.EvalReport(acc, cm, None, None, labels, preds,
                              np.zeros((len(labels), 10)), np.zeros(len(labels)))


def write_artifacts(out_dir, name, ckpt, curve, cfg):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_path = out / f"{name}.ckpt"
    save_checkpoint(ckpt, ckpt_path)
    curve_path = out / f"{name}_curve.csv"
    curve_path.write_text(curve_to_csv(curve, cfg), encoding="utf-8")
    return ckpt_path, curve_path
