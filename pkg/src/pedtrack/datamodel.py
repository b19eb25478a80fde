"""Core sensor data types, validation and the delimited-text file formats.

Runs are stored column-wise in numpy arrays; the per-sample views
(``ImuSample``) exist for callers that want records.

File formats (one header line, then one record per line)::

    # imu rate=250
    t,ax,ay,az,gx,gy,gz,mx,my,mz
    0.0,...

    # lidar
    t,points
    ref,x:y x:y ...        (reference frame F0, timestamp column holds "ref")
    0.025,x:y x:y ...

    t,x,y                  (trajectories / centroid tracks)
"""

from dataclasses import dataclass, field

import numpy as np

MAX_RANGE = 80.0
IMU_COLUMNS = ("t", "ax", "ay", "az", "gx", "gy", "gz", "mx", "my", "mz")


class ParseError(ValueError):
    def __init__(self, path, lineno, msg):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = path
        self.lineno = lineno


def _fmt(v):
    return repr(float(v))


def _frozen(a, shape_tail=None, dtype=np.float64):
    a = np.array(a, dtype=dtype, copy=True)
    if shape_tail is not None:
        a = a.reshape((-1,) + shape_tail)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ImuSample:
    t: float
    accel: tuple
    gyro: tuple
    mag: tuple


@dataclass(frozen=True, eq=False)
class ImuRun:
    """Uniformly sampled 9-channel IMU stream (accel m/s^2, gyro rad/s, mag uT)."""

    rate: float
    t: np.ndarray
    accel: np.ndarray
    gyro: np.ndarray
    mag: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", _frozen(self.t))
        for name in ("accel", "gyro", "mag"):
            object.__setattr__(self, name, _frozen(getattr(self, name), (3,)))
        n = len(self.t)
        if any(len(getattr(self, k)) != n for k in ("accel", "gyro", "mag")):
            raise ValueError("all IMU channels must have one row per timestamp")

    @classmethod
    def from_matrix(cls, rate, m):
        m = np.asarray(m, dtype=np.float64).reshape(-1, 10)
        return cls(rate, m[:, 0], m[:, 1:4], m[:, 4:7], m[:, 7:10])

    def matrix(self):
        return np.column_stack([self.t, self.accel, self.gyro, self.mag])

    def __len__(self):
        return len(self.t)

    def __getitem__(self, i):
        return ImuSample(float(self.t[i]), tuple(self.accel[i]), tuple(self.gyro[i]), tuple(self.mag[i]))

    def slice(self, start, stop):
        return ImuRun(self.rate, self.t[start:stop], self.accel[start:stop], self.gyro[start:stop], self.mag[start:stop])

    def __eq__(self, other):
        return (
            isinstance(other, ImuRun)
            and self.rate == other.rate
            and np.array_equal(self.matrix(), other.matrix(), equal_nan=True)
        )

    @property
    def duration(self):
        return float(self.t[-1] - self.t[0]) if len(self.t) else 0.0


@dataclass(frozen=True, eq=False)
class LidarScan:
    t: float
    points: np.ndarray  # (n, 2) Cartesian, metres, sensor frame

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen(self.points, (2,)))

    def __eq__(self, other):
        return (
            isinstance(other, LidarScan)
            and (self.t == other.t or (np.isnan(self.t) and np.isnan(other.t)))
            and np.array_equal(self.points, other.points)
        )


@dataclass(frozen=True, eq=False)
class LidarRun:
    reference: LidarScan
    scans: tuple

    def __post_init__(self):
        object.__setattr__(self, "scans", tuple(self.scans))

    @property
    def times(self):
        return np.array([s.t for s in self.scans])

    def __len__(self):
        return len(self.scans)

    def __eq__(self, other):
        return (
            isinstance(other, LidarRun)
            and self.reference == other.reference
            and len(self.scans) == len(other.scans)
            and all(a == b for a, b in zip(self.scans, other.scans))
        )


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Timestamped planar positions. ``heading`` is optional metadata (rad)."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray = None
    profile: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        for name in ("t", "x", "y"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.heading is not None:
            object.__setattr__(self, "heading", _frozen(self.heading))
        if not len(self.t) == len(self.x) == len(self.y):
            raise ValueError("t, x, y must have equal length")

    @classmethod
    def from_points(cls, points):
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return cls(p[:, 0], p[:, 1], p[:, 2])

    @property
    def xy(self):
        return np.column_stack([self.x, self.y])

    def __len__(self):
        return len(self.t)

    def __eq__(self, other):
        return (
            isinstance(other, Trajectory)
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
        )

    def position_at(self, times):
        times = np.asarray(times, dtype=np.float64)
        return np.column_stack([np.interp(times, self.t, self.x), np.interp(times, self.t, self.y)])


@dataclass(frozen=True)
class Violation:
    invariant: str
    index: int
    detail: str = ""


def _check_times(t, label, out):
    t = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(t)):
        out.append(Violation(f"{label}: finite timestamps", int(np.flatnonzero(~np.isfinite(t))[0])))
        return
    bad = np.flatnonzero(np.diff(t) <= 0)
    if bad.size:
        out.append(Violation(f"{label}: timestamps strictly increasing", int(bad[0] + 1)))


def validate_run(run):
    """Return a list of invariant violations (empty when the run is valid)."""
    out = []
    if isinstance(run, ImuRun):
        _check_times(run.t, "imu", out)
        chans = np.column_stack([run.accel, run.gyro, run.mag])
        bad_rows = np.flatnonzero(~np.all(np.isfinite(chans), axis=1))
        if bad_rows.size:
            out.append(Violation("imu: finite values", int(bad_rows[0])))
        if len(run.t) > 1 and not any("strictly" in v.invariant or "finite t" in v.invariant for v in out):
            dt = np.diff(run.t)
            jitter = np.flatnonzero(np.abs(dt - 1.0 / run.rate) > 0.1 / run.rate)
            if jitter.size:
                out.append(Violation("imu: uniform sampling within 10% jitter", int(jitter[0] + 1)))
    elif isinstance(run, LidarRun):
        _check_times([s.t for s in run.scans], "lidar", out)
        for k, scan in enumerate((run.reference, *run.scans)):
            pts = scan.points
            if pts.size and (not np.all(np.isfinite(pts)) or np.max(np.hypot(pts[:, 0], pts[:, 1])) > MAX_RANGE):
                out.append(Violation("lidar: points finite and within 80 m", k - 1 if k else -1))
                break
    elif isinstance(run, Trajectory):
        _check_times(run.t, "trajectory", out)
    else:
        raise TypeError(f"cannot validate {type(run).__name__}")
    return out


# ---------------------------------------------------------------- file I/O


def write_run(run, path):
    if isinstance(run, ImuRun):
        lines = [f"# imu rate={_fmt(run.rate)}", ",".join(IMU_COLUMNS)]
        lines += [",".join(_fmt(v) for v in row) for row in run.matrix()]
    elif isinstance(run, LidarRun):
        lines = ["# lidar", "t,points", "ref," + _points_text(run.reference.points)]
        lines += [f"{_fmt(s.t)}," + _points_text(s.points) for s in run.scans]
    elif isinstance(run, Trajectory):
        lines = ["t,x,y"] + [f"{_fmt(a)},{_fmt(b)},{_fmt(c)}" for a, b, c in zip(run.t, run.x, run.y)]
    else:
        raise TypeError(f"cannot write {type(run).__name__}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def _points_text(points):
    return " ".join(f"{_fmt(x)}:{_fmt(y)}" for x, y in points)


def _parse_points(text, path, lineno):
    text = text.strip()
    if not text:
        return np.zeros((0, 2))
    try:
        return np.array([[float(v) for v in pair.split(":")] for pair in text.split(" ")]).reshape(-1, 2)
    except ValueError as exc:
        raise ParseError(path, lineno, f"bad point list ({exc})") from None


def read_run(path, kind):
    """Read a run written by :func:`write_run`. ``kind`` is imu, lidar or trajectory."""
    if kind not in ("imu", "lidar", "trajectory"):
        raise ValueError(f"unknown run kind {kind!r} (expected imu, lidar or trajectory)")
    with open(path) as f:
        lines = f.read().splitlines()
    if kind == "imu":
        return _read_imu(lines, path)
    if kind == "lidar":
        return _read_lidar(lines, path)
    return _read_traj(lines, path)


def _data_lines(lines, header):
    """Yield (lineno, text) for data rows, skipping comments and the column header."""
    for i, line in enumerate(lines, start=1):
        s = line.strip()
        if not s or s.startswith("#") or s == header:
            continue
        yield i, s


def _read_imu(lines, path):
    rate = 250.0
    if lines and lines[0].startswith("# imu"):
        for tok in lines[0].split()[2:]:
            if tok.startswith("rate="):
                rate = float(tok[5:])
    rows = []
    for i, s in _data_lines(lines, ",".join(IMU_COLUMNS)):
        parts = s.split(",")
        if len(parts) != 10:
            raise ParseError(path, i, f"expected 10 columns, got {len(parts)}")
        try:
            rows.append([float(v) for v in parts])
        except ValueError as exc:
            raise ParseError(path, i, str(exc)) from None
    return ImuRun.from_matrix(rate, np.array(rows).reshape(-1, 10))


def _read_lidar(lines, path):
    reference = LidarScan(np.nan, np.zeros((0, 2)))
    scans = []
    for i, s in _data_lines(lines, "t,points"):
        head, _, rest = s.partition(",")
        pts = _parse_points(rest, path, i)
        if head == "ref":
            reference = LidarScan(np.nan, pts)
            continue
        try:
            scans.append(LidarScan(float(head), pts))
        except ValueError:
            raise ParseError(path, i, f"bad timestamp {head!r}") from None
    return LidarRun(reference, scans)


def _read_traj(lines, path):
    rows = []
    for i, s in _data_lines(lines, "t,x,y"):
        parts = s.split(",")
        if len(parts) != 3:
            raise ParseError(path, i, f"expected 3 columns, got {len(parts)}")
        try:
            rows.append([float(v) for v in parts])
        except ValueError as exc:
            raise ParseError(path, i, str(exc)) from None
    return Trajectory.from_points(np.array(rows).reshape(-1, 3))
