"""Command line front end: ``pedtrack <command> [options]``.

Every command reads and writes the plain-text formats of the library.
Options may also come from ``--config FILE`` (``key = value`` lines, keys are
option names with ``-`` or ``_``); explicit flags win over the file.
Exit status: 0 success, 1 data or validation error, 2 usage error.
"""

import argparse
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import evaluate, lidartrack, pdr, pipeline, plots, segment, sync
from .datamodel import ParseError, Trajectory, read_run, validate_run, write_run
from .nn import VARIANTS, ModelConfig, ModelFileError, TrainConfig, TrainingDiverged, fit, load_model, predict, save_model
from .nn.train import read_history, write_history
from .synthworld import SensorNoise, WalkConfig, spike_recording

log = logging.getLogger("pedtrack")

DATA_ERRORS = (
    ParseError,
    ValueError,
    OSError,
    ModelFileError,
    TrainingDiverged,
    sync.NoSpike,
    lidartrack.NoSubjectEver,
    segment.EmptyRunError,
)


class UsageError(Exception):
    pass


def _pair(text):
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'a,b', got {text!r}") from None
    return a, b


def _out(args, name):
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


def _noise(args):
    if args.noiseless:
        return SensorNoise.noiseless(args.clock_offset)
    return replace(SensorNoise(), lidar_std=args.lidar_std, clock_offset=args.clock_offset)


# ------------------------------------------------------------------ commands


def cmd_synth(args):
    noise = _noise(args)
    if args.spike:
        rec = spike_recording(noise, seed=args.seed)
        imu, lidar, truth = rec.imu, rec.lidar, rec.truth
    else:
        walk = WalkConfig(duration=60.0 * args.minutes, mean_speed=args.speed, room=args.room, seed=args.seed)
        sim = pipeline.simulate_run(walk, noise, imu_rate=args.imu_rate, scan_rate=args.scan_rate)
        imu, lidar, truth = sim.imu, sim.lidar, sim.truth
    for name, run in (("imu.csv", imu), ("lidar.csv", lidar), ("truth.csv", truth)):
        write_run(run, _out(args, name))
    print(f"wrote {len(imu)} IMU samples, {len(lidar.scans)} scans to {args.out_dir}")


def cmd_track(args):
    run = read_run(args.lidar, "lidar")
    _check(run, args.lidar)
    if args.delay:
        run = sync.apply_delay(run, args.delay)
    ct = lidartrack.track(run, args.threshold)
    labels = lidartrack.window_displacements(ct, period=2.0, stride=args.stride)
    write_run(Trajectory(ct.t, ct.xy[:, 0], ct.xy[:, 1]), _out(args, "centroids.csv"))
    lidartrack.write_labels(labels, _out(args, "labels.csv"))
    print(f"{len(ct.t)} centroids ({len(ct.dropped)} scans dropped), {len(labels)} labels")


def cmd_sync(args):
    pairs = []
    if args.pair:
        for imu_path, lidar_path in args.pair:
            imu, lidar = read_run(imu_path, "imu"), read_run(lidar_path, "lidar")
            pairs.append((sync.imu_velocity(imu), sync.lidar_velocity(lidartrack.track(lidar))))
    else:
        noise = _noise(args)
        for k in range(args.recordings):
            rec = spike_recording(noise, seed=args.seed + 7919 * k)
            pairs.append((sync.imu_velocity(rec.imu), sync.lidar_velocity(lidartrack.track(rec.lidar))))
    est = sync.average_delay(pairs, args.method)
    sync.write_delay_table(est, _out(args, "delay.csv"))
    print(f"delay mean {est.mean * 1e3:.3f} ms, std {est.std * 1e3:.3f} ms over {len(est.per_recording)} recordings")


def cmd_segment(args):
    windows = []
    for k, (imu_path, lidar_path) in enumerate(args.run):
        imu, lidar = read_run(imu_path, "imu"), read_run(lidar_path, "lidar")
        _check(imu, imu_path)
        _check(lidar, lidar_path)
        windows += pipeline.run_windows(imu, lidar, args.delay, f"run{k:02d}", stride=args.stride, clip=args.clip)
    test_runs = [f"run{k:02d}" for k in args.test_run]
    split = segment.normalize_split(segment.split_dataset(windows, args.ratio, args.seed, test_runs))
    for name in ("train", "val", "test"):
        segment.write_windows(getattr(split, name), _out(args, f"{name}.txt"))
    split.normalizer.save(_out(args, "normalizer.txt"))
    print(f"train {len(split.train)}, val {len(split.val)}, test {len(split.test)} windows; overflow {split.overflow}")


def _load_split(data_dir):
    split = segment.DatasetSplit(
        *(segment.read_windows(os.path.join(data_dir, f"{n}.txt")) for n in ("train", "val", "test"))
    )
    if not split.train or not split.val:
        raise ValueError(f"{data_dir}: train and val sets must be non-empty")
    return split


def _model_cfg(args, variant):
    over = {k: getattr(args, k) for k in ("hidden", "dense", "attn_width") if getattr(args, k) is not None}
    return ModelConfig.for_variant(variant, **over)


def _train_cfg(args):
    return TrainConfig(epochs=args.epochs, batch=args.batch, lr0=args.lr, seed=args.seed)


def cmd_train(args):
    split = _load_split(args.data)
    X_tr, y_tr = split.arrays("train", args.target)
    X_va, y_va = split.arrays("val", args.target)
    params, hist = fit(X_tr, y_tr, X_va, y_va, _model_cfg(args, args.variant), _train_cfg(args))
    stem = f"{args.variant}_{args.target}"
    save_model(params, _out(args, f"model_{stem}.txt"))
    write_history(hist, _out(args, f"history_{stem}.csv"))
    print(f"final val MAE {hist[-1]['val_mae']:.4f} m; baseline {evaluate.mean_baseline(split, args.target, 'val'):.4f} m")


def cmd_predict(args):
    params = load_model(args.model)
    windows = segment.read_windows(args.windows)
    if not windows:
        raise ValueError(f"{args.windows}: no windows")
    pred = predict(params, np.stack([w.x for w in windows]))
    path = args.output or _out(args, "predictions.csv")
    with open(path, "w") as f:
        f.write("run_id,t_start,pred,dx,dy\n")
        for w, p in zip(windows, pred):
            f.write(f"{w.run_id},{float(w.t_start)!r},{float(p)!r},{float(w.dx)!r},{float(w.dy)!r}\n")
    print(f"{len(pred)} predictions -> {path}")


def _read_predictions(path):
    rows = []
    with open(path) as f:
        header = f.readline().strip()
        if header != "run_id,t_start,pred,dx,dy":
            raise ValueError(f"{path}: not a predictions file")
        for line in f:
            if line.strip():
                r = line.rstrip("\n").split(",")
                rows.append((r[0], float(r[1]), float(r[2]), float(r[3]), float(r[4])))
    return rows


def _joined_predictions(dx_path, dy_path):
    """(run_id, t_start) -> (pred_dx, pred_dy, dx, dy)"""
    dx = {(r[0], r[1]): r for r in _read_predictions(dx_path)}
    dy = {(r[0], r[1]): r for r in _read_predictions(dy_path)}
    keys = sorted(set(dx) & set(dy))
    if not keys:
        raise ValueError("the dx and dy prediction files share no windows")
    return keys, np.array([[dx[k][2], dy[k][2], dx[k][3], dy[k][4]] for k in keys])


def _non_overlapping(keys, period=2.0):
    run = keys[0][0]
    picked, last = [], -np.inf
    for i, (rid, t) in enumerate(keys):
        if rid == run and t >= last + period - 1e-9:
            picked.append(i)
            last = t
    return picked


def cmd_reconstruct(args):
    if args.imu:
        run = read_run(args.imu, "imu")
        traj = pdr.pdr_reconstruct(run, args.threshold, args.theta0, args.start)
    elif args.labels:
        labels = lidartrack.read_labels(args.labels)
        if args.stride_filter:
            labels = [labels[i] for i in _non_overlapping([("", lb.t_start) for lb in labels])]
        steps = [(lb.t_start, lb.dx, lb.dy) for lb in labels]
        traj = evaluate.reconstruct_trajectory(steps, args.start)
    elif args.dx and args.dy:
        keys, vals = _joined_predictions(args.dx, args.dy)
        idx = _non_overlapping(keys)
        steps = [(keys[i][1], vals[i, 0], vals[i, 1]) for i in idx]
        traj = evaluate.reconstruct_trajectory(steps, args.start)
        truth = evaluate.reconstruct_trajectory([(keys[i][1], vals[i, 2], vals[i, 3]) for i in idx], args.start)
        write_run(truth, _out(args, "path_truth.csv"))
    else:
        raise UsageError("reconstruct needs --imu, --labels, or both --dx and --dy")
    path = args.output or _out(args, "path.csv")
    write_run(traj, path)
    print(f"{len(traj.t)} points -> {path}")


def cmd_eval(args):
    keys, vals = _joined_predictions(args.dx, args.dy)
    rep = evaluate.mae_report(vals[:, :2], vals[:, 2:], args.name, args.dataset)
    path = _out(args, "eval.csv")
    with open(path, "w") as f:
        f.write("model,dataset,mae_dx,mae_dy,n_windows\n")
        f.write(f"{rep.model_name},{rep.dataset_name},{float(rep.mae_dx)!r},{float(rep.mae_dy)!r},{rep.n_windows}\n")
    print(f"MAE dx {rep.mae_dx:.4f} m, dy {rep.mae_dy:.4f} m over {rep.n_windows} windows")


def cmd_ablate(args):
    split = _load_split(args.data)
    over = {k: getattr(args, k) for k in ("hidden", "dense", "attn_width") if getattr(args, k) is not None}
    results = evaluate.ablation_run(args.variants, split, _train_cfg(args), over, out_dir=args.out_dir)
    for r in results:
        if r.error:
            print(f"{r.name}: diverged ({r.error})")
        elif "val" in r.reports:
            rep = r.reports["val"]
            print(f"{r.name}: val MAE dx {rep.mae_dx:.4f} dy {rep.mae_dy:.4f}, stability dx {r.stability['dx']:.4f}")
    print(f"table -> {os.path.join(args.out_dir, 'ablation.csv')}")


def _series_item(text):
    if "=" in text:
        label, path = text.split("=", 1)
    else:
        label, path = os.path.splitext(os.path.basename(text))[0], text
    return label, path


def cmd_plot(args):
    series = {}
    for item in args.series:
        label, path = _series_item(item)
        if args.kind == "path":
            tr = read_run(path, "trajectory")
            series[label] = tr.xy
        elif args.kind == "training_curve":
            hist = read_history(path)
            ep = [r["epoch"] for r in hist]
            prefix = f"{label} " if len(args.series) > 1 else ""
            series[prefix + "train"] = np.column_stack([ep, [r["train_mae"] for r in hist]])
            series[prefix + "val"] = np.column_stack([ep, [r["val_mae"] for r in hist]])
        else:
            series.update(_bar_values(path, args.column))
    out = args.output or _out(args, f"{args.kind}.svg")
    plots.emit_plot(series, args.kind, out, args.title)
    print(f"plot -> {out} (+ csv sidecar)")


def _bar_values(path, column):
    with open(path) as f:
        header = f.readline().strip().split(",")
        if column not in header:
            raise ValueError(f"{path}: no column {column!r}")
        j = header.index(column)
        out = {}
        for line in f:
            r = line.rstrip("\n").split(",")
            if len(r) > j and r[j]:
                out[f"{r[0]} {r[1]}".strip()] = float(r[j])
    return out


def _check(run, path):
    bad = validate_run(run)
    if bad:
        v = bad[0]
        raise ValueError(f"{path}: {len(bad)} violation(s), first: {v.invariant} at {v.index}: {v.detail}")


# ------------------------------------------------------------------ parser


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out-dir", default=".")
    common.add_argument("--config", help="key = value file of option defaults")
    common.add_argument("-v", "--verbose", action="store_true")

    noise = argparse.ArgumentParser(add_help=False)
    noise.add_argument("--lidar-std", type=float, default=0.03, help="range noise (m)")
    noise.add_argument("--clock-offset", type=float, default=0.00389, help="LiDAR clock lag (s)")
    noise.add_argument("--noiseless", action="store_true")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--hidden", type=int)
    model.add_argument("--dense", type=int)
    model.add_argument("--attn-width", type=int)
    model.add_argument("--epochs", type=int, default=60)
    model.add_argument("--batch", type=int, default=5)
    model.add_argument("--lr", type=float, default=1e-3)

    p = argparse.ArgumentParser(prog="pedtrack", description="IMU displacement regression toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common, noise], help="simulate a walk: imu.csv, lidar.csv, truth.csv")
    s.add_argument("--minutes", type=float, default=5.0)
    s.add_argument("--speed", type=float, default=1.3)
    s.add_argument("--room", type=_pair, default=(6.0, 5.0), help="width,depth in m")
    s.add_argument("--imu-rate", type=float, default=250.0)
    s.add_argument("--scan-rate", type=float, default=40.0)
    s.add_argument("--spike", action="store_true", help="write a synchronisation spike recording instead")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("track", parents=[common], help="centroid track and 2 s displacement labels")
    s.add_argument("--lidar", required=True)
    s.add_argument("--delay", type=float, default=0.0, help="subtracted from scan times (s)")
    s.add_argument("--threshold", type=float, default=lidartrack.DEFAULT_THRESHOLD)
    s.add_argument("--stride", type=float, default=2.0)
    s.set_defaults(func=cmd_track)

    s = sub.add_parser("sync", parents=[common, noise], help="estimate the LiDAR delay from spike recordings")
    s.add_argument("--pair", nargs=2, action="append", metavar=("IMU", "LIDAR"))
    s.add_argument("--recordings", type=int, default=10, help="simulated recordings when no --pair is given")
    s.add_argument("--method", choices=("peak", "parabola", "xcorr"), default="peak")
    s.set_defaults(func=cmd_sync)

    s = sub.add_parser("segment", parents=[common], help="labelled, normalised windows and a train/val/test split")
    s.add_argument("--run", nargs=2, action="append", required=True, metavar=("IMU", "LIDAR"))
    s.add_argument("--delay", type=float, default=0.0)
    s.add_argument("--stride", type=float, default=0.5)
    s.add_argument("--clip", type=float, default=3.0)
    s.add_argument("--ratio", type=float, default=0.8)
    s.add_argument("--test-run", type=int, action="append", default=[], help="index of a held-out run")
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("train", parents=[common, model], help="train one model for one target")
    s.add_argument("--data", required=True, help="directory written by segment")
    s.add_argument("--target", choices=("dx", "dy"), required=True)
    s.add_argument("--variant", choices=tuple(VARIANTS), default="2gru_att")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", parents=[common], help="apply a saved model to a window file")
    s.add_argument("--model", required=True)
    s.add_argument("--windows", required=True)
    s.add_argument("--output")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("reconstruct", parents=[common], help="chain displacements (or run PDR) into a path")
    s.add_argument("--dx", help="predictions file of the dx model")
    s.add_argument("--dy", help="predictions file of the dy model")
    s.add_argument("--labels", help="labels file from track")
    s.add_argument("--stride-filter", action="store_true", help="keep only non-overlapping label windows")
    s.add_argument("--imu", help="run threshold PDR on this IMU file instead")
    s.add_argument("--threshold", type=float, default=pdr.DEFAULT_THRESHOLD, help="PDR step threshold (m/s^2)")
    s.add_argument("--theta0", type=float, default=0.0)
    s.add_argument("--start", type=_pair, default=(0.0, 0.0))
    s.add_argument("--output")
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("eval", parents=[common], help="MAE report from dx and dy predictions")
    s.add_argument("--dx", required=True)
    s.add_argument("--dy", required=True)
    s.add_argument("--name", default="model")
    s.add_argument("--dataset", default="test")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("ablate", parents=[common, model], help="train several variants on the same split")
    s.add_argument("--data", required=True)
    s.add_argument("--variants", nargs="+", choices=tuple(VARIANTS), default=["2gru_att", "2gru", "gru", "3gru"])
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("plot", parents=[common], help="SVG figure with a CSV sidecar")
    s.add_argument("--kind", choices=("path", "training_curve", "bar"), required=True)
    s.add_argument("--series", nargs="+", required=True, metavar="[LABEL=]FILE")
    s.add_argument("--column", default="mae_dx", help="ablation column for bar plots")
    s.add_argument("--title", default="")
    s.add_argument("--output")
    s.set_defaults(func=cmd_plot)
    return p, sub.choices


def read_config(path):
    cfg = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            cfg[k.replace("-", "_")] = v
    return cfg


def _apply_config(subparser, cfg, path):
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, raw in cfg.items():
        act = actions.get(key)
        if act is None or key in ("config", "help"):
            raise UsageError(f"{path}: unknown option {key!r} for this command")
        try:
            if act.nargs == 0:  # store_true flags
                defaults[key] = raw.lower() in ("1", "true", "yes", "on")
            elif act.nargs in ("+", "*"):
                defaults[key] = [act.type(v) if act.type else v for v in raw.split()]
            else:
                defaults[key] = act.type(raw) if act.type else raw
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"{path}: bad value for {key}: {exc}") from None
        if act.choices is not None:
            vals = defaults[key] if isinstance(defaults[key], list) else [defaults[key]]
            if any(v not in act.choices for v in vals):
                raise UsageError(f"{path}: {key} must be one of {', '.join(map(str, act.choices))}")
    subparser.set_defaults(**defaults)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser, subparsers = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on usage errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.config:
            _apply_config(subparsers[args.command], read_config(args.config), args.config)
            args = parser.parse_args(argv)
        args.func(args)
    except (UsageError, argparse.ArgumentTypeError) as exc:
        print(f"pedtrack {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except DATA_ERRORS as exc:
        print(f"pedtrack {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
