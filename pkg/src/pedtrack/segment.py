"""Clipping, magnitude augmentation, [-1, 1] normalisation, windowing and splits."""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .datamodel import ImuRun

log = logging.getLogger(__name__)

N_CHANNELS = 12
CHANNEL_NAMES = ("ax", "ay", "az", "gx", "gy", "gz", "mx", "my", "mz", "|a|", "|g|", "|m|")


class EmptyRunError(ValueError):
    pass


def clip_run(run, margin=3.0):
    """Drop the first and last ``margin`` seconds."""
    if margin == 0:
        return run
    if len(run) == 0 or run.duration <= 2 * margin:
        raise EmptyRunError(f"run of {run.duration:.3f} s is too short to clip {margin} s at both ends")
    t = run.t
    keep = np.flatnonzero((t >= t[0] + margin - 1e-9) & (t <= t[-1] - margin + 1e-9))
    return run.slice(keep[0], keep[-1] + 1)


def augment_magnitudes(run):
    """``(N, 12)`` matrix: accel, gyro, mag, then the norm of each triple."""
    if isinstance(run, ImuRun):
        chans = np.column_stack([run.accel, run.gyro, run.mag])
    else:
        chans = np.asarray(run, dtype=np.float64).reshape(-1, 9)
    mags = [np.linalg.norm(chans[:, i : i + 3], axis=1) for i in (0, 3, 6)]
    return np.column_stack([chans, *mags])


@dataclass(frozen=True, eq=False)
class Normalizer:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=np.float64))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=np.float64))

    @property
    def constant(self):
        return ~(self.hi > self.lo)

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        span = np.where(self.constant, 1.0, self.hi - self.lo)
        out = 2.0 * (x - self.lo) / span - 1.0
        return np.where(self.constant, 0.0, out)

    def inverse(self, z):
        z = np.asarray(z, dtype=np.float64)
        return (z + 1.0) * 0.5 * (self.hi - self.lo) + self.lo

    def save(self, path):
        with open(path, "w") as f:
            f.write(" ".join(repr(float(v)) for v in self.lo) + "\n")
            f.write(" ".join(repr(float(v)) for v in self.hi) + "\n")

    @classmethod
    def load(cls, path):
        with open(path) as f:
            vals = [float(v) for v in f.read().split()]
        if len(vals) % 2:
            raise ValueError(f"{path}: expected an even count of numbers, got {len(vals)}")
        n = len(vals) // 2
        return cls(vals[:n], vals[n:])


def fit_normalizer(channels):
    """Per-channel min/max over ``(..., C)`` data (training windows only)."""
    flat = np.asarray(channels, dtype=np.float64)
    flat = flat.reshape(-1, flat.shape[-1])
    norm = Normalizer(flat.min(axis=0), flat.max(axis=0))
    if norm.constant.any():
        log.warning("constant channels %s map to 0", np.flatnonzero(norm.constant).tolist())
    return norm


@dataclass(frozen=True, eq=False)
class LabeledWindow:
    x: np.ndarray  # (T, C)
    dx: float
    dy: float
    t_start: float
    run_id: str = ""

    @property
    def key(self):
        return (self.run_id, round(self.t_start, 9))


def window_examples(channels, times, labels, rate, length_s=2.0, stride_s=0.5, tol=1.0 / 80, run_id=""):
    """Cut ``[t0, t0 + length_s)`` windows every ``stride_s`` and attach the
    displacement label whose start lies within ``tol`` of ``t0``.

    Windows without a matching label are dropped. ``tol`` defaults to half a
    40 Hz scan interval.
    """
    rows_f = rate * length_s
    rows = int(round(rows_f))
    step_f = rate * stride_s
    step = int(round(step_f))
    if abs(rows_f - rows) > 1e-6 or abs(step_f - step) > 1e-6 or rows < 1 or step < 1:
        raise ValueError(f"rate*length ({rows_f}) and rate*stride ({step_f}) must be positive integers")
    channels = np.asarray(channels, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    starts = np.array(sorted(lb.t_start for lb in labels)) if labels else np.zeros(0)
    by_start = sorted(labels, key=lambda lb: lb.t_start)
    out = []
    for i in range(0, len(times) - rows + 1, step):
        t0 = times[i]
        j = int(np.searchsorted(starts, t0))
        cand = [k for k in (j - 1, j) if 0 <= k < len(starts)]
        if not cand:
            continue
        k = min(cand, key=lambda k: abs(starts[k] - t0))
        if abs(starts[k] - t0) > tol:
            continue
        lb = by_start[k]
        out.append(LabeledWindow(channels[i : i + rows].copy(), lb.dx, lb.dy, float(t0), run_id))
    return out


@dataclass
class DatasetSplit:
    train: list
    val: list
    test: list
    split_ratio: float = 0.8
    seed: int = 0
    normalizer: Normalizer = None
    overflow: dict = field(default_factory=dict)

    def arrays(self, subset, target):
        ws = getattr(self, subset)
        X = np.stack([w.x for w in ws]) if ws else np.zeros((0, 0, 0))
        return X, np.array([getattr(w, target) for w in ws])


def split_dataset(windows, ratio=0.8, seed=0, test_runs=()):
    """Deterministic shuffled train/val split; windows of ``test_runs`` form the test set."""
    test_runs = set(test_runs)
    test = [w for w in windows if w.run_id in test_runs]
    pool = [w for w in windows if w.run_id not in test_runs]
    order = np.random.default_rng(seed).permutation(len(pool))
    n_train = int(round(ratio * len(pool)))
    train = [pool[i] for i in order[:n_train]]
    val = [pool[i] for i in order[n_train:]]
    if not train or not val:
        raise ValueError(f"split of {len(pool)} windows at ratio {ratio} leaves an empty train or val set")
    return DatasetSplit(train, val, test, ratio, seed)


def normalize_split(split):
    """Fit the normaliser on the training windows only and apply it everywhere."""
    norm = fit_normalizer(np.stack([w.x for w in split.train]))

    def conv(ws):
        return [replace(w, x=norm.apply(w.x)) for w in ws]

    out = DatasetSplit(conv(split.train), conv(split.val), conv(split.test), split.split_ratio, split.seed, norm)
    for name in ("val", "test"):
        ws = getattr(out, name)
        out.overflow[name] = int(sum(np.count_nonzero(np.abs(w.x) > 1.0) for w in ws))
    return out


# ---------------------------------------------------------------- text container

MAGIC = "pedtrack-windows 1"


def write_windows(windows, path):
    """Header ``pedtrack-windows 1 T C count``, then per window one
    ``window run_id t_start dx dy`` line followed by T rows of C values."""
    T, C = windows[0].x.shape if windows else (0, 0)
    with open(path, "w") as f:
        f.write(f"{MAGIC} {T} {C} {len(windows)}\n")
        for w in windows:
            f.write(f"window {w.run_id or '-'} {float(w.t_start)!r} {float(w.dx)!r} {float(w.dy)!r}\n")
            for row in w.x:
                f.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_windows(path):
    with open(path) as f:
        head = f.readline().split()
        if " ".join(head[:2]) != MAGIC:
            raise ValueError(f"{path}: not a window container")
        T, C, n = (int(v) for v in head[2:5])
        out = []
        for k in range(n):
            line = f.readline().split()
            if len(line) != 5 or line[0] != "window":
                raise ValueError(f"{path}: window {k}: bad block header")
            rows = [f.readline() for _ in range(T)]
            try:
                x = np.array([[float(v) for v in r.split()] for r in rows])
            except ValueError as exc:
                raise ValueError(f"{path}: window {k}: {exc}") from None
            if x.shape != (T, C):
                raise ValueError(f"{path}: window {k}: expected ({T}, {C}) values, got {x.shape}")
            run_id = "" if line[1] == "-" else line[1]
            out.append(LabeledWindow(x, float(line[3]), float(line[4]), float(line[2]), run_id))
    return out
