"""Threshold-and-integrate pedestrian dead reckoning baseline."""

from dataclasses import dataclass

import numpy as np

from .datamodel import Trajectory

DEFAULT_THRESHOLD = 2.0
MIN_GAP = 0.25


@dataclass(frozen=True)
class StepSegment:
    i_start: int
    i_end: int
    duration: float


def detect_steps(accel_mag, threshold, min_gap=MIN_GAP, rate=250.0):
    """Steps run from an upward threshold crossing to the next downward one.

    An upward crossing less than ``min_gap`` seconds after the previous step
    ended is merged into that step (a swing produces two accel lobes).
    """
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    a = np.asarray(accel_mag, dtype=np.float64)
    above = a > threshold
    if not above.any():
        return []
    edges = np.diff(above.astype(np.int8))
    rises = list(np.flatnonzero(edges == 1) + 1)
    falls = list(np.flatnonzero(edges == -1) + 1)
    if above[0]:
        rises.insert(0, 0)
    if above[-1]:
        falls.append(len(a) - 1)
    gap = min_gap * rate
    spans = []
    for r, f in zip(rises, falls):
        if spans and r - spans[-1][1] < gap:
            spans[-1][1] = f
        else:
            spans.append([r, f])
    return [StepSegment(int(r), int(f), (f - r) / rate) for r, f in spans if f > r]


def _horizontal_world_accel(run, tilt):
    acc = run.accel if tilt is None else tilt(run.accel)
    return acc[:, :2]


def step_vector(run, seg, tilt=None):
    """Horizontal displacement over a step, integrating twice from rest."""
    if not 0 <= seg.i_start < seg.i_end < len(run):
        raise IndexError(f"step [{seg.i_start}, {seg.i_end}] outside run of {len(run)} samples")
    sl = slice(seg.i_start, seg.i_end + 1)
    t = run.t[sl]
    a = _horizontal_world_accel(run, tilt)[sl]
    dt = np.diff(t)[:, None]
    v = np.vstack([np.zeros(2), np.cumsum(0.5 * dt * (a[1:] + a[:-1]), axis=0)])
    return np.sum(0.5 * dt * (v[1:] + v[:-1]), axis=0)


def step_displacement(run, seg, tilt=None):
    """Stride length (m) of one detected step.

    ``tilt`` maps sensor-frame accel to world frame; the synthetic data is
    already world-frame and gravity-free, so it defaults to identity.
    """
    return float(np.hypot(*step_vector(run, seg, tilt)))


def heading_track(gyro_z, theta0=0.0, rate=250.0, t=None):
    """Yaw from one trapezoidal integration of the z rate, wrapped to (-pi, pi]."""
    w = np.asarray(gyro_z, dtype=np.float64)
    if len(w) == 0:
        return w.copy()
    dt = np.diff(t) if t is not None else np.full(len(w) - 1, 1.0 / rate)
    ang = theta0 + np.concatenate([[0.0], np.cumsum(0.5 * dt * (w[1:] + w[:-1]))])
    out = (ang > np.pi) | (ang <= -np.pi)
    ang[out] = np.pi - np.mod(np.pi - ang[out], 2.0 * np.pi)
    return ang


def pdr_reconstruct(run, threshold=DEFAULT_THRESHOLD, theta0=0.0, start=(0.0, 0.0), min_gap=MIN_GAP, tilt=None):
    """Start point plus one point per step, advanced by the stride length
    along the gyro heading at the step midpoint."""
    if len(run) == 0:
        return Trajectory([0.0], [start[0]], [start[1]])
    mag = np.linalg.norm(run.accel, axis=1)
    steps = detect_steps(mag, threshold, min_gap, run.rate)
    heading = heading_track(run.gyro[:, 2], theta0, t=run.t)
    ts, xs, ys = [run.t[0]], [float(start[0])], [float(start[1])]
    x, y = float(start[0]), float(start[1])
    for seg in steps:
        d = step_displacement(run, seg, tilt)
        h = heading[(seg.i_start + seg.i_end) // 2]
        x += d * np.cos(h)
        y += d * np.sin(h)
        ts.append(run.t[seg.i_end])
        xs.append(x)
        ys.append(y)
    if len(ts) > 1 and ts[1] <= ts[0]:
        ts[0] = ts[1] - 1.0 / run.rate
    return Trajectory(ts, xs, ys)
