"""End-to-end dataset assembly on synthetic recordings."""

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import lidartrack, segment, sync
from .synthworld import SensorNoise, WalkConfig, render_lidar, simulate_walk, spike_recording, synthesize_imu

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimRun:
    run_id: str
    truth: object  # Trajectory
    imu: object  # ImuRun
    lidar: object  # LidarRun


def simulate_run(walk, noise=None, imu_rate=250.0, scan_rate=40.0, run_id="run0"):
    noise = noise or SensorNoise()
    truth = simulate_walk(walk)
    imu = synthesize_imu(truth, imu_rate, noise, walk.step_cadence, seed=walk.seed + 1000)
    lidar = render_lidar(truth, walk.room_geometry(), scan_rate, noise, seed=walk.seed + 2000)
    return SimRun(run_id, truth, imu, lidar)


def measure_delay(n_recordings=10, noise=None, seed=0, method="peak"):
    """Spike recordings -> per-recording delays and their mean."""
    noise = noise or SensorNoise()
    pairs = []
    for k in range(n_recordings):
        rec = spike_recording(noise, seed=seed + 7919 * k)
        vi = sync.imu_velocity(rec.imu)
        vl = sync.lidar_velocity(lidartrack.track(rec.lidar))
        pairs.append((vi, vl))
    return sync.average_delay(pairs, method)


def run_windows(imu, lidar, delay, run_id="", stride=0.5, length=2.0, clip=3.0):
    """Raw (unnormalised) labelled windows for one recording."""
    aligned = sync.apply_delay(lidar, delay)
    ctrack = lidartrack.track(aligned)
    imu_c = segment.clip_run(imu, clip)
    labels = lidartrack.window_displacements(ctrack, period=length, stride=stride, origin=imu_c.t[0])
    chans = segment.augment_magnitudes(imu_c)
    tol = 0.5 * ctrack.scan_interval()
    return segment.window_examples(chans, imu_c.t, labels, imu.rate, length, stride, tol=tol, run_id=run_id)


@dataclass(frozen=True)
class BenchmarkConfig:
    n_runs: int = 6
    run_minutes: float = 5.0
    n_test_runs: int = 1
    stride: float = 2.0
    seed: int = 2024
    walk: WalkConfig = WalkConfig()
    noise: SensorNoise = SensorNoise()
    n_sync_recordings: int = 10


def build_dataset(cfg=None):
    """Simulate ``n_runs`` recordings, synchronise with the measured delay and
    return a normalised :class:`~pedtrack.segment.DatasetSplit` plus the delay."""
    cfg = cfg or BenchmarkConfig()
    delay = measure_delay(cfg.n_sync_recordings, cfg.noise, seed=cfg.seed)
    log.info("measured LiDAR delay %.3f ms", delay.mean * 1e3)
    windows, runs = [], []
    for k in range(cfg.n_runs):
        walk = replace(cfg.walk, duration=60.0 * cfg.run_minutes, seed=cfg.seed + 101 * k)
        run_id = f"run{k:02d}"
        sim = simulate_run(walk, cfg.noise, run_id=run_id)
        windows += run_windows(sim.imu, sim.lidar, delay.mean, run_id, stride=cfg.stride)
        runs.append(run_id)
        log.info("%s: %d windows so far", run_id, len(windows))
    test_runs = runs[len(runs) - cfg.n_test_runs :]
    split = segment.split_dataset(windows, 0.8, seed=cfg.seed, test_runs=test_runs)
    return segment.normalize_split(split), delay


def label_error(sim, delay, stride=2.0):
    """RMS difference between LiDAR labels and ground-truth body displacement."""
    ctrack = lidartrack.track(sync.apply_delay(sim.lidar, delay))
    labels = lidartrack.window_displacements(ctrack, period=2.0, stride=stride)
    s = np.array([lb.t_start for lb in labels])
    est = np.array([[lb.dx, lb.dy] for lb in labels])
    true = sim.truth.position_at(s + 2.0) - sim.truth.position_at(s)
    return float(np.sqrt(np.mean(np.sum((est - true) ** 2, axis=1))))
