"""Synthetic walker, foot-mounted IMU and 2D LiDAR generator.

Geometry: the LiDAR sits at the origin looking along +x with a 190 degree field
of view. The room is an axis-aligned rectangle that contains the sensor; by
default its west wall is 0.5 m behind the sensor, so a walker kept away from
the walls is always in view.

Walker model: the body moves in strides of duration ``1 / step_cadence``, each
with constant speed and constant turn rate (circular arcs). The IMU foot
follows the body path with a time warp: during the swing half of every
cycle it travels along the path with a (1 - cos)^2 velocity profile and
during stance it is planted. Its acceleration and jerk are therefore
continuous, zero during stance and two-lobed during swing.

All outputs are deterministic functions of their inputs and seeds.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .datamodel import MAX_RANGE, ImuRun, LidarRun, LidarScan, Trajectory

TWO_PI = 2.0 * np.pi
WALKER_RADIUS = 0.2
MAG_FIELD = np.array([20.0, 0.0, -40.0])  # world frame, uT


@dataclass(frozen=True)
class Room:
    """Axis-aligned rectangle given by its centre and half extents (metres)."""

    cx: float
    cy: float
    hx: float
    hy: float

    @classmethod
    def in_front_of_sensor(cls, hx, hy, back_clearance=0.5):
        return cls(hx - back_clearance, 0.0, hx, hy)

    @property
    def bounds(self):
        return self.cx - self.hx, self.cx + self.hx, self.cy - self.hy, self.cy + self.hy

    def contains(self, xy, margin=0.0):
        xy = np.atleast_2d(xy)
        x0, x1, y0, y1 = self.bounds
        return (
            (xy[:, 0] >= x0 + margin)
            & (xy[:, 0] <= x1 - margin)
            & (xy[:, 1] >= y0 + margin)
            & (xy[:, 1] <= y1 - margin)
        )

    def max_corner_range(self):
        x0, x1, y0, y1 = self.bounds
        return max(math.hypot(x, y) for x in (x0, x1) for y in (y0, y1))


@dataclass(frozen=True)
class WalkConfig:
    duration: float = 60.0
    mean_speed: float = 1.3
    speed_jitter: float = 0.1
    turn_rate_std: float = 0.5
    step_cadence: float = 1.8
    room: tuple = (6.0, 5.0)
    seed: int = 0
    rate: float = 250.0
    start: tuple = None
    heading0: float = 0.0
    margin: float = 0.8

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("duration must be > 0")
        if self.mean_speed < 0 or self.speed_jitter < 0 or self.turn_rate_std < 0:
            raise ValueError("speeds and standard deviations must be >= 0")
        if self.step_cadence <= 0:
            raise ValueError("step_cadence must be > 0")
        if self.rate < 100:
            raise ValueError("trajectory rate must be >= 100 Hz")
        if self.room_geometry().max_corner_range() > MAX_RANGE:
            raise ValueError("room does not fit inside the 80 m LiDAR range")

    def room_geometry(self):
        return Room.in_front_of_sensor(*self.room)


@dataclass(frozen=True)
class SensorNoise:
    accel_std: float = 0.05
    gyro_std: float = 0.005
    mag_std: float = 0.5
    lidar_std: float = 0.03
    clock_offset: float = 0.00389
    accel_bias: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if min(self.accel_std, self.gyro_std, self.mag_std, self.lidar_std) < 0:
            raise ValueError("noise standard deviations must be >= 0")

    @classmethod
    def noiseless(cls, clock_offset=0.0):
        return cls(0.0, 0.0, 0.0, 0.0, clock_offset)


def _sinc(u):
    return np.sinc(u / np.pi)


def _wrap(a):
    """Wrap to (-pi, pi]."""
    return np.pi - np.mod(np.pi - a, TWO_PI)


@dataclass(frozen=True)
class StrideProfile:
    """Piecewise motion: segment k starts at ``t0[k]`` at ``p0[k]`` with heading
    ``psi0[k]`` and moves at constant ``speed[k]`` and turn rate ``omega[k]``."""

    t0: np.ndarray
    p0: np.ndarray
    psi0: np.ndarray
    speed: np.ndarray
    omega: np.ndarray
    t_end: float = field(default=np.inf)

    @classmethod
    def from_trajectory(cls, traj):
        """Straight constant-speed segments between consecutive samples."""
        t, xy = traj.t, traj.xy
        d = np.diff(xy, axis=0)
        dt = np.diff(t)
        speed = np.hypot(d[:, 0], d[:, 1]) / dt
        psi = np.arctan2(d[:, 1], d[:, 0])
        if traj.heading is not None:
            psi = np.where(speed > 0, psi, traj.heading[:-1])
        else:
            # hold the last moving heading through stationary samples
            last = 0.0
            for k in range(len(psi)):
                if speed[k] > 0:
                    last = psi[k]
                psi[k] = last
        return cls(t[:-1], xy[:-1], psi, speed, np.zeros_like(speed), float(t[-1]))

    def _segment(self, times):
        k = np.searchsorted(self.t0, times, side="right") - 1
        return np.clip(k, 0, len(self.t0) - 1)

    def state(self, times):
        """Position, velocity, acceleration, heading and turn rate at ``times``."""
        times = np.asarray(times, dtype=np.float64)
        k = self._segment(times)
        s = times - self.t0[k]
        v, w, psi0 = self.speed[k], self.omega[k], self.psi0[k]
        psi = psi0 + w * s
        half = psi0 + 0.5 * w * s
        chord = v * s * _sinc(0.5 * w * s)
        pos = self.p0[k] + np.column_stack([chord * np.cos(half), chord * np.sin(half)])
        u = np.column_stack([np.cos(psi), np.sin(psi)])
        vel = v[:, None] * u
        nrm = np.column_stack([-u[:, 1], u[:, 0]])
        acc = (v * w)[:, None] * nrm
        return pos, vel, acc, psi, w


def _stride_arc(p, psi, v, w, period, n=9):
    s = np.linspace(0.0, period, n)
    chord = v * s * _sinc(0.5 * w * s)
    half = psi + 0.5 * w * s
    return p + np.column_stack([chord * np.cos(half), chord * np.sin(half)])


def simulate_walk(config):
    """Ground-truth body trajectory of a walker confined to the room."""
    rng = np.random.default_rng(config.seed)
    room = config.room_geometry()
    period = 1.0 / config.step_cadence
    n_strides = int(math.ceil(config.duration / period - 1e-9))
    p = np.array(config.start if config.start is not None else (room.cx, room.cy), dtype=np.float64)
    if not room.contains(p, config.margin)[0]:
        raise ValueError("start position is not inside the room margin")
    psi = float(config.heading0)
    vmax = config.mean_speed + 4.0 * config.speed_jitter

    t0 = np.arange(n_strides) * period
    P0 = np.empty((n_strides, 2))
    PSI0 = np.empty(n_strides)
    V = np.empty(n_strides)
    W = np.empty(n_strides)
    for k in range(n_strides):
        v = float(np.clip(rng.normal(config.mean_speed, config.speed_jitter), 0.0, vmax))
        if config.mean_speed == 0:
            v = 0.0
        w = float(rng.normal(0.0, config.turn_rate_std)) if config.turn_rate_std > 0 else 0.0
        if not room.contains(_stride_arc(p, psi, v, w, period), config.margin).all():
            # steer toward the room centre; turn on the spot if even that leaves
            goal = math.atan2(room.cy - p[1], room.cx - p[0])
            w = float(_wrap(goal - psi)) / period
            if not room.contains(_stride_arc(p, psi, v, w, period), config.margin).all():
                v = 0.0
        P0[k], PSI0[k], V[k], W[k] = p, psi, v, w
        p = _stride_arc(p, psi, v, w, period, n=2)[-1]
        psi = psi + w * period

    profile = StrideProfile(t0, P0, PSI0, V, W, n_strides * period)
    n = int(round(config.duration * config.rate)) + 1
    t = np.arange(n) / config.rate
    pos, _, _, heading, _ = profile.state(t)
    return Trajectory(t, pos[:, 0], pos[:, 1], heading=heading, profile=profile)


# ------------------------------------------------------------------ foot / IMU


@dataclass(frozen=True)
class FootMotion:
    t: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    acc: np.ndarray
    heading: np.ndarray
    yaw_rate: np.ndarray


def _time_warp(t, t_origin, cadence, swing_fraction):
    """Warped body time seen by the foot, with first and second derivatives.

    During the swing the warp rate follows (1 - cos 2 pi u)^2 / 1.5, so the
    foot accel and jerk both vanish at lift-off and touch-down; a sampled,
    piecewise-linear accel then brings the foot back to rest.
    """
    period = 1.0 / cadence
    swing = swing_fraction * period
    rel = t - t_origin
    k = np.floor(rel / period)
    tau = rel - k * period
    u = np.clip(tau / swing, 0.0, 1.0)
    in_swing = tau < swing
    c = TWO_PI * u
    warp = u - 2.0 * np.sin(c) / (3.0 * np.pi) + np.sin(2.0 * c) / (12.0 * np.pi)
    phi = t_origin + k * period + period * warp
    dphi = np.where(in_swing, (period / swing) * (1.0 - np.cos(c)) ** 2 / 1.5, 0.0)
    ddphi = np.where(in_swing, (period / swing**2) * (8.0 * np.pi / 3.0) * (1.0 - np.cos(c)) * np.sin(c), 0.0)
    return phi, dphi, ddphi


def integrate_exact(t, acc, p0, v0):
    """Integrate an acceleration that is linear between samples, exactly.

    This is the generator's definition of the foot motion, so it is the
    oracle for any other integrator applied to the synthetic accel.
    """
    dt = np.diff(t)[:, None]
    a0, a1 = acc[:-1], acc[1:]
    dv = 0.5 * dt * (a0 + a1)
    vel = np.vstack([v0, v0 + np.cumsum(dv, axis=0)])
    dp = vel[:-1] * dt + dt**2 * (2.0 * a0 + a1) / 6.0
    pos = np.vstack([p0, p0 + np.cumsum(dp, axis=0)])
    return pos, vel


def foot_motion(traj, rate=250.0, cadence=1.8, swing_fraction=0.5):
    """Foot kinematics sampled at ``rate`` over the trajectory's time span."""
    if traj.t[-1] - traj.t[0] < 2.0 / cadence:
        raise ValueError("trajectory must span at least two gait cycles")
    profile = traj.profile if traj.profile is not None else StrideProfile.from_trajectory(traj)
    n = int(math.floor((traj.t[-1] - traj.t[0]) * rate + 1e-9)) + 1
    t = traj.t[0] + np.arange(n) / rate
    phi, dphi, ddphi = _time_warp(t, traj.t[0], cadence, swing_fraction)
    _, vel_b, acc_b, psi, w = profile.state(phi)
    acc = acc_b * (dphi**2)[:, None] + vel_b * ddphi[:, None]
    pos0, _, _, _, _ = profile.state(phi[:1])
    vel0 = vel_b[0] * dphi[0]
    pos, vel = integrate_exact(t, acc, pos0[0], vel0)
    return FootMotion(t, pos, vel, acc, psi, w * dphi)


def _mag_in_sensor(heading):
    c, s = np.cos(heading), np.sin(heading)
    mx = c * MAG_FIELD[0] + s * MAG_FIELD[1]
    my = -s * MAG_FIELD[0] + c * MAG_FIELD[1]
    return np.column_stack([mx, my, np.full_like(heading, MAG_FIELD[2])])


def synthesize_imu(traj, rate=250.0, noise=None, cadence=1.8, seed=0, swing_fraction=0.5):
    """Foot-mounted IMU stream for a walker trajectory.

    Accel is gravity-free and in the world frame; gyro carries the yaw rate on
    z; the magnetometer sees a fixed world field rotated into the yawed sensor
    frame.
    """
    noise = noise or SensorNoise()
    foot = foot_motion(traj, rate, cadence, swing_fraction)
    return _imu_from_kinematics(foot.t, foot.acc, foot.yaw_rate, foot.heading, rate, noise, seed)


def _imu_from_kinematics(t, acc_xy, yaw_rate, heading, rate, noise, seed):
    rng = np.random.default_rng(seed)
    n = len(t)
    accel = np.column_stack([acc_xy, np.zeros(n)]) + np.asarray(noise.accel_bias)
    gyro = np.column_stack([np.zeros(n), np.zeros(n), yaw_rate])
    mag = _mag_in_sensor(heading)
    accel = accel + rng.normal(0.0, noise.accel_std, accel.shape) if noise.accel_std else accel
    gyro = gyro + rng.normal(0.0, noise.gyro_std, gyro.shape) if noise.gyro_std else gyro
    mag = mag + rng.normal(0.0, noise.mag_std, mag.shape) if noise.mag_std else mag
    return ImuRun(rate, t, accel, gyro, mag)


# ------------------------------------------------------------------ LiDAR


def scan_angles(fov_deg=190.0, resolution_deg=0.25):
    n = int(round(fov_deg / resolution_deg)) + 1
    return np.deg2rad(-0.5 * fov_deg + resolution_deg * np.arange(n))


def wall_ranges(room, angles):
    c, s = np.cos(angles), np.sin(angles)
    x0, x1, y0, y1 = room.bounds
    with np.errstate(divide="ignore"):
        tx = np.where(c > 0, x1 / c, np.where(c < 0, x0 / c, np.inf))
        ty = np.where(s > 0, y1 / s, np.where(s < 0, y0 / s, np.inf))
    return np.minimum(tx, ty)


def disk_ranges(center, radius, angles):
    """Range to the first intersection with a disk, ``inf`` where the ray misses."""
    c, s = np.cos(angles), np.sin(angles)
    b = c * center[0] + s * center[1]
    disc = b * b - (center[0] ** 2 + center[1] ** 2 - radius**2)
    r = b - np.sqrt(np.maximum(disc, 0.0))
    return np.where((disc >= 0) & (r > 0), r, np.inf)


def _points(ranges, angles):
    return np.column_stack([ranges * np.cos(angles), ranges * np.sin(angles)])


def render_lidar(
    traj,
    room,
    scan_rate=40.0,
    noise=None,
    seed=0,
    fov_deg=190.0,
    resolution_deg=0.25,
    walker_radius=WALKER_RADIUS,
    reference_scans=10,
):
    """Ray-cast scans of the room with the walker modelled as a disk.

    ``F0`` is the average of ``reference_scans`` empty-room scans. Scan
    timestamps are the true sample time plus ``noise.clock_offset``.
    """
    noise = noise or SensorNoise()
    if isinstance(room, tuple):
        room = Room.in_front_of_sensor(*room)
    rng = np.random.default_rng(seed)
    angles = scan_angles(fov_deg, resolution_deg)
    walls = wall_ranges(room, angles)

    def noisy(r):
        if noise.lidar_std:
            r = r + rng.normal(0.0, noise.lidar_std, r.shape)
        return np.clip(r, 0.0, MAX_RANGE)

    ref = np.mean([noisy(walls) for _ in range(max(1, reference_scans))], axis=0)
    reference = LidarScan(np.nan, _points(ref, angles))

    n = int(math.floor((traj.t[-1] - traj.t[0]) * scan_rate + 1e-9)) + 1
    t_true = traj.t[0] + np.arange(n) / scan_rate
    centers = traj.position_at(t_true)
    scans = []
    for tt, c in zip(t_true, centers):
        r = np.minimum(walls, disk_ranges(c, walker_radius, angles))
        scans.append(LidarScan(tt + noise.clock_offset, _points(noisy(r), angles)))
    return LidarRun(reference, scans)


# ------------------------------------------------------------------ sync spikes


@dataclass(frozen=True)
class SpikeRecording:
    imu: ImuRun
    lidar: LidarRun
    truth: Trajectory
    spike_time: float


def spike_recording(
    noise=None,
    seed=0,
    duration=3.0,
    imu_rate=250.0,
    scan_rate=40.0,
    position=(3.0, 1.0),
    displacement=(0.0, 0.8),
    spike_duration=0.25,
    room=(6.0, 5.0),
):
    """A short recording in which the IMU (carried by the walker disk) is moved
    once: rest, one smooth bump of ``displacement``, rest."""
    noise = noise or SensorNoise()
    rng = np.random.default_rng(seed)
    start = float(rng.uniform(1.0, duration - 1.0 - spike_duration))
    D = np.asarray(displacement, dtype=np.float64)

    def kinematics(t):
        u = np.clip((t - start) / spike_duration, 0.0, 1.0)
        inside = (t > start) & (t < start + spike_duration)
        w = u - np.sin(TWO_PI * u) / TWO_PI
        dw = np.where(inside, (1.0 - np.cos(TWO_PI * u)) / spike_duration, 0.0)
        ddw = np.where(inside, TWO_PI * np.sin(TWO_PI * u) / spike_duration**2, 0.0)
        pos = np.asarray(position) + w[:, None] * D
        return pos, dw[:, None] * D, ddw[:, None] * D

    n_imu = int(round(duration * imu_rate)) + 1
    t_imu = np.arange(n_imu) / imu_rate
    _, _, acc = kinematics(t_imu)
    imu = _imu_from_kinematics(t_imu, acc, np.zeros(n_imu), np.zeros(n_imu), imu_rate, noise, seed + 1)

    pos, _, _ = kinematics(t_imu)
    truth = Trajectory(t_imu, pos[:, 0], pos[:, 1])
    lidar = render_lidar(truth, Room.in_front_of_sensor(*room), scan_rate, noise, seed=seed + 2)
    return SpikeRecording(imu, lidar, truth, start + 0.5 * spike_duration)
