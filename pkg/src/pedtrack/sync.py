"""IMU/LiDAR clock-delay estimation from single-spike velocity recordings.

Sign convention: a positive delay means LiDAR timestamps are late relative to
the IMU clock; :func:`apply_delay` subtracts it from every scan timestamp.
"""

from dataclasses import dataclass

import numpy as np

from .datamodel import LidarRun, LidarScan

MAX_WINDOW = 5.0
SPIKE_RATIO = 5.0
HALF_MAX = 0.5
CENTROID_RES = 2e-4  # s


class NoSpike(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class VelocityTrace:
    t: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", np.asarray(self.t, dtype=np.float64))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=np.float64))
        if self.t.shape != self.v.shape:
            raise ValueError("t and v must have the same length")

    def shifted(self, delta):
        return VelocityTrace(self.t + delta, self.v)


@dataclass(frozen=True)
class DelayEstimate:
    per_recording: tuple
    mean: float
    std: float


def imu_velocity(run, window=None):
    """Speed from one trapezoidal integration of accel, starting at rest."""
    t = run.t
    t0, t1 = (t[0], t[-1]) if window is None else window
    if t1 - t0 > MAX_WINDOW:
        raise ValueError(f"integration window of {t1 - t0:.3f} s exceeds {MAX_WINDOW} s")
    if len(t) == 0 or t0 < t[0] - 1e-12 or t1 > t[-1] + 1e-12 or t1 <= t0:
        raise ValueError(f"window [{t0}, {t1}] outside run span")
    sel = (t >= t0 - 1e-12) & (t <= t1 + 1e-12)
    ts, a = t[sel], run.accel[sel]
    dv = 0.5 * np.diff(ts)[:, None] * (a[1:] + a[:-1])
    vel = np.vstack([np.zeros(3), np.cumsum(dv, axis=0)])
    return VelocityTrace(ts, np.linalg.norm(vel, axis=1))


def lidar_velocity(ctrack):
    """Centroid speed: central differences inside, one-sided at the ends."""
    t, p = ctrack.t, ctrack.xy
    if len(t) < 2:
        raise ValueError("need at least two centroids")
    vel = np.empty_like(p)
    vel[1:-1] = (p[2:] - p[:-2]) / (t[2:] - t[:-2])[:, None]
    vel[0] = (p[1] - p[0]) / (t[1] - t[0])
    vel[-1] = (p[-1] - p[-2]) / (t[-1] - t[-2])
    return VelocityTrace(t, np.hypot(vel[:, 0], vel[:, 1]))


def _spike_index(trace):
    v = trace.v
    if len(v) < 3:
        raise NoSpike("trace too short")
    i = int(np.argmax(v))
    if not v[i] > 0 or v[i] < SPIKE_RATIO * np.median(v):
        raise NoSpike(f"no dominant peak (max {v[i]:.3g}, median {np.median(v):.3g})")
    return i


def _parabola_time(t, v, i):
    if i == 0 or i == len(v) - 1:
        return float(t[i])
    # parabola through three possibly unevenly spaced points
    x = t[i - 1 : i + 2] - t[i]
    y = v[i - 1 : i + 2]
    denom = x[0] * x[2] * (x[0] - x[2])
    a = (x[2] * (y[0] - y[1]) - x[0] * (y[2] - y[1])) / denom
    b = (x[0] ** 2 * (y[2] - y[1]) - x[2] ** 2 * (y[0] - y[1])) / denom
    if a >= 0:
        return float(t[i])
    return float(t[i] - b / (2.0 * a))


def _lobe_centroid_time(t, v, i, frac=HALF_MAX, res=CENTROID_RES):
    """Centroid of the linearly interpolated trace above ``frac * max``,
    over the contiguous lobe holding the maximum."""
    h = frac * v[i]
    lo, hi = i, i
    while lo > 0 and v[lo - 1] > h:
        lo -= 1
    while hi < len(v) - 1 and v[hi + 1] > h:
        hi += 1
    a, b = max(lo - 1, 0), min(hi + 1, len(v) - 1)
    # grid anchored at t[i] so a time shift moves it rigidly
    k = np.arange(np.floor((t[a] - t[i]) / res), np.ceil((t[b] - t[i]) / res) + 1)
    g = t[i] + k * res
    w = np.clip(np.interp(g, t[a : b + 1], v[a : b + 1]) - h, 0.0, None)
    if not w.sum() > 0:
        return float(t[i])
    return float(t[i] + np.sum(k * res * w) / np.sum(w))


def peak_time(trace, refine="centroid"):
    """Time of the dominant maximum.

    ``refine="centroid"`` uses the centroid of the lobe above half the peak,
    which averages every sample of the spike; ``"parabola"`` fits three samples.
    """
    i = _spike_index(trace)
    if refine == "centroid":
        return _lobe_centroid_time(trace.t, trace.v, i)
    if refine == "parabola":
        return _parabola_time(trace.t, trace.v, i)
    raise ValueError(f"unknown refinement {refine!r}")


def xcorr_delay(vi, vl, max_lag=0.5):
    """Lag maximising sum_j vl(t_j) * vi(t_j - lag), on the IMU sample grid,
    refined by a parabola through the three best lags."""
    dt = float(np.median(np.diff(vi.t)))
    lags = np.arange(-max_lag, max_lag + 0.5 * dt, dt)
    vl0 = vl.v - vl.v.mean()
    score = np.array([np.dot(vl0, np.interp(vl.t - lag, vi.t, vi.v, left=0.0, right=0.0)) for lag in lags])
    i = int(np.argmax(score))
    if 0 < i < len(lags) - 1:
        y0, y1, y2 = score[i - 1 : i + 2]
        curv = y0 - 2 * y1 + y2
        if curv < 0:
            return float(lags[i] + 0.5 * dt * (y0 - y2) / curv)
    return float(lags[i])


def estimate_delay(vi, vl, method="peak"):
    """Delay of the LiDAR trace relative to the IMU trace (seconds)."""
    if method == "peak":
        return peak_time(vl) - peak_time(vi)
    if method == "parabola":
        return peak_time(vl, "parabola") - peak_time(vi, "parabola")
    if method == "xcorr":
        _spike_index(vi), _spike_index(vl)  # same spike gate as the peak method
        return xcorr_delay(vi, vl)
    raise ValueError(f"unknown method {method!r}")


def average_delay(recordings, method="peak"):
    """Mean and population std of per-recording delays; spike-free recordings are skipped."""
    est = []
    for vi, vl in recordings:
        try:
            est.append(estimate_delay(vi, vl, method))
        except NoSpike:
            continue
    if not est:
        raise NoSpike("no recording contained a spike in both traces")
    arr = np.array(est)
    return DelayEstimate(tuple(est), float(arr.mean()), float(arr.std()))


def apply_delay(run, delay):
    scans = [LidarScan(s.t - delay, s.points) for s in run.scans]
    return LidarRun(run.reference, scans)


def write_delay_table(estimate, path):
    with open(path, "w") as f:
        f.write("recording,delay_s\n")
        for i, d in enumerate(estimate.per_recording):
            f.write(f"{i},{float(d)!r}\n")
        f.write(f"mean,{float(estimate.mean)!r}\nstd,{float(estimate.std)!r}\n")
