"""Subject tracking from 2D scans: background subtraction, centroid, 2 s labels."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

DEFAULT_THRESHOLD = 0.1
MIN_POINTS = 3


class NoSubject(ValueError):
    """Too few moved points in a scan to place the subject."""


class NoSubjectEver(ValueError):
    """No scan of a run contained the subject."""


@dataclass(frozen=True, eq=False)
class CentroidTrack:
    t: np.ndarray
    xy: np.ndarray
    dropped: tuple = ()  # timestamps of scans without a subject

    def __post_init__(self):
        object.__setattr__(self, "t", np.asarray(self.t, dtype=np.float64))
        object.__setattr__(self, "xy", np.asarray(self.xy, dtype=np.float64).reshape(-1, 2))

    def __len__(self):
        return len(self.t)

    def __eq__(self, other):
        return isinstance(other, CentroidTrack) and np.array_equal(self.t, other.t) and np.array_equal(self.xy, other.xy)

    def scan_interval(self):
        return float(np.median(np.diff(self.t))) if len(self.t) > 1 else np.inf


@dataclass(frozen=True)
class DisplacementLabel:
    t_start: float
    t_end: float
    dx: float
    dy: float


def subtract_background(f0, fi, dist_threshold=DEFAULT_THRESHOLD, tree=None):
    """Points of ``fi`` farther than ``dist_threshold`` from every point of ``f0``."""
    ref = f0.points if hasattr(f0, "points") else np.asarray(f0)
    pts = fi.points if hasattr(fi, "points") else np.asarray(fi)
    if len(pts) == 0:
        return pts.reshape(0, 2)
    if len(ref) == 0:
        return pts
    tree = tree or cKDTree(ref)
    d, _ = tree.query(pts, k=1, distance_upper_bound=dist_threshold + 1e-12)
    return pts[d > dist_threshold]


def largest_cluster(points, gap=0.3):
    """Longest run of consecutive (scan-ordered) points with neighbour spacing <= ``gap``."""
    if len(points) < 2:
        return points
    step = np.hypot(*np.diff(points, axis=0).T)
    breaks = np.flatnonzero(step > gap) + 1
    groups = np.split(np.arange(len(points)), breaks)
    best = max(groups, key=len)
    return points[best]


def centroid(points, min_points=MIN_POINTS):
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(points) < min_points:
        raise NoSubject(f"{len(points)} moved points, need at least {min_points}")
    return points.mean(axis=0)


def track(run, dist_threshold=DEFAULT_THRESHOLD, min_points=MIN_POINTS, cluster_gap=0.3):
    """One centroid per scan in which the subject is found.

    Moved points are reduced to their largest scan-ordered cluster before the
    centroid so isolated noise returns on the walls cannot drag it. Pass
    ``cluster_gap=None`` to use every moved point.
    """
    tree = cKDTree(run.reference.points) if len(run.reference.points) else None
    ts, xy, dropped = [], [], []
    for scan in run.scans:
        moved = subtract_background(run.reference, scan, dist_threshold, tree=tree)
        if cluster_gap is not None:
            moved = largest_cluster(moved, cluster_gap)
        try:
            xy.append(centroid(moved, min_points))
            ts.append(scan.t)
        except NoSubject:
            dropped.append(scan.t)
    if not ts:
        raise NoSubjectEver(f"subject not found in any of {len(run.scans)} scans")
    return CentroidTrack(np.array(ts), np.array(xy), tuple(dropped))


def _segments(t, max_gap):
    """Index ranges [a, b) of the track without gaps longer than ``max_gap``."""
    breaks = np.flatnonzero(np.diff(t) > max_gap) + 1
    edges = np.concatenate([[0], breaks, [len(t)]])
    return list(zip(edges[:-1], edges[1:]))


def window_displacements(ctrack, period=2.0, stride=None, origin=None, max_gap_scans=3, scan_interval=None):
    """Displacement labels over windows ``[s, s + period]``, ``s = origin + k * stride``.

    Positions at the window edges are linearly interpolated between scans.
    Windows that overlap a gap longer than ``max_gap_scans`` scan intervals are
    dropped. Defaults: consecutive windows (``stride = period``) starting at the
    first centroid.
    """
    t, xy = ctrack.t, ctrack.xy
    if len(t) < 2 or t[-1] - t[0] < period:
        return []
    stride = period if stride is None else stride
    origin = t[0] if origin is None else origin
    dt = scan_interval or ctrack.scan_interval()
    tol = 1e-9 * max(1.0, abs(t[-1]))
    labels = []
    for a, b in _segments(t, max_gap_scans * dt):
        t_a, t_b = t[a], t[b - 1]
        k0 = int(np.ceil((t_a - origin) / stride - 1e-9))
        k1 = int(np.floor((t_b - period - origin) / stride + 1e-9))
        for k in range(k0, k1 + 1):
            s = origin + k * stride
            e = s + period
            if s < t_a - tol or e > t_b + tol:
                continue
            seg_t = t[a:b]
            p0 = [np.interp(s, seg_t, xy[a:b, 0]), np.interp(s, seg_t, xy[a:b, 1])]
            p1 = [np.interp(e, seg_t, xy[a:b, 0]), np.interp(e, seg_t, xy[a:b, 1])]
            labels.append(DisplacementLabel(float(s), float(e), float(p1[0] - p0[0]), float(p1[1] - p0[1])))
    return labels


def write_labels(labels, path):
    with open(path, "w") as f:
        f.write("t_start,t_end,dx,dy\n")
        for lb in labels:
            f.write(f"{float(lb.t_start)!r},{float(lb.t_end)!r},{float(lb.dx)!r},{float(lb.dy)!r}\n")


def read_labels(path):
    out = []
    with open(path) as f:
        next(f, None)
        for line in f:
            if line.strip():
                a, b, c, d = (float(v) for v in line.split(","))
                out.append(DisplacementLabel(a, b, c, d))
    return out
