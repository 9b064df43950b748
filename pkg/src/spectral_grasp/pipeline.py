"""End-to-end grasp generation: cloud -> BEGIs -> spectra -> correlation ->
contacts -> filters -> ranking."""

from __future__ import annotations

import logging
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
from scipy.spatial import cKDTree

from .begi import begi_signal, build_begi
from .cloud_io import PointCloud
from .contacts import (
    DEFAULT_CLEARANCE, DEFAULT_K_MAX, DEFAULT_MU, DEFAULT_N_APPROACH,
    GraspCandidate, GripperModel, antipodal_mask, contact_index_sets, first_free_pose,
    finger_begi, make_contact_set, scene_near, width_mask, wrist_poses,
)
from .errors import MissingNormals
from .locomo import LocomoParams, rank_grasps
from .sht import forward_sht
from .so3corr import correlate, extract_rotations, normalize

log = logging.getLogger(__name__)

WORKERS_ENV = "SPECTRAL_GRASP_WORKERS"

# stage names in pipeline order; each count is <= the one before
STAGES = ("contact_sets", "antipodal", "width", "collision_free")


@dataclass(frozen=True)
class PipelineConfig:
    bandwidth: int = 16
    t_corr: float = 0.1
    k_max: int = DEFAULT_K_MAX
    mu: float = DEFAULT_MU
    n_approach: int = DEFAULT_N_APPROACH
    clearance: float = DEFAULT_CLEARANCE
    top_k: int = 10
    local_max: bool = False
    locomo: LocomoParams = field(default_factory=LocomoParams)

    def __post_init__(self):
        if not 2 <= self.bandwidth <= 64:
            raise ValueError(f"bandwidth must lie in [2, 64], got {self.bandwidth}")
        if not 0.0 <= self.t_corr <= 1.0:
            raise ValueError(f"t_corr must lie in [0, 1], got {self.t_corr}")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.n_approach < 1:
            raise ValueError("n_approach must be >= 1")
        if self.clearance < 0:
            raise ValueError("clearance must be non-negative")


@dataclass
class GraspReport:
    candidates: List[GraspCandidate]
    counts: Dict[str, int]
    timings: Dict[str, float]
    rotations: int = 0
    bandwidth: int = 0
    top_k: int = 10

    @property
    def feasible(self) -> bool:
        """False is the 'no feasible grasp' outcome."""
        return bool(self.candidates)


def stage_counts_consistent(report: GraspReport) -> bool:
    counts = [report.counts.get(s, 0) for s in STAGES]
    if any(b > a for a, b in zip(counts, counts[1:])):
        return False
    return len(report.candidates) <= min(report.top_k, counts[-1])


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", WORKERS_ENV, raw)
    return os.cpu_count() or 1


class _Timer:
    def __init__(self):
        self.ms: Dict[str, float] = {}

    @contextmanager
    def __call__(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.ms[name] = self.ms.get(name, 0.0) + (time.perf_counter() - t0) * 1e3


def correlation_stage(obj_begi, hand_begi):
    """Spectra of both BEGIs and their normalized SO(3) correlation.

    Depends only on the bandwidth, not on how many points built the BEGIs.
    """
    fc = forward_sht(begi_signal(obj_begi))
    gc = forward_sht(begi_signal(hand_begi))
    return normalize(correlate(fc, gc), fc, gc)


def generate(obj: PointCloud, g: GripperModel, cfg: PipelineConfig = PipelineConfig(),
             workers: int = None) -> GraspReport:
    """Run the full grasp synthesis on one (possibly cluttered) scene cloud."""
    if obj.normals_missing:
        raise MissingNormals("object cloud has no normals; estimate them first")
    if g.n_fingers != 2:
        raise NotImplementedError("wrist synthesis supports two-finger grippers only")
    workers = default_workers() if workers is None else workers
    B = cfg.bandwidth
    timer = _Timer()

    with timer("begi"):
        obj_begi = build_begi(obj, B)
        hand_begi = finger_begi(g, B)
    with timer("correlation"):
        grid = correlation_stage(obj_begi, hand_begi)
    with timer("rotations"):
        rotations = extract_rotations(grid, cfg.t_corr, local_max=cfg.local_max)
    with timer("sampling"):
        idx, src = contact_index_sets(obj_begi, obj, g, rotations, cfg.k_max)
    counts = {"contact_sets": int(len(idx))}

    with timer("filtering"):
        p, n = obj.points, obj.normals
        anti = antipodal_mask(p[idx[:, 0]], n[idx[:, 0]], p[idx[:, 1]], n[idx[:, 1]], cfg.mu)
        counts["antipodal"] = int(anti.sum())
        keep = anti & width_mask(p[idx[:, 0]], p[idx[:, 1]], g.stroke)
        counts["width"] = int(keep.sum())
        tree = cKDTree(obj.points)
        candidates = []
        for row in np.flatnonzero(keep):
            rot, val = rotations[src[row]]
            cs = make_contact_set(obj, idx[row], rot, val)
            width = cs.width
            near = scene_near(cs.points.mean(axis=0), g, obj, width, cfg.clearance, tree)
            poses = wrist_poses(cs, g, cfg.n_approach)
            a = first_free_pose(poses, g, near, cfg.clearance, width)
            if a is not None:
                candidates.append(GraspCandidate(cs, poses[a], width, approach_index=a))
        counts["collision_free"] = len(candidates)

    with timer("ranking"):
        ranked = rank_grasps(candidates, obj, g, cfg.locomo, tree=tree, workers=workers)

    timings = dict(timer.ms)
    timings["total"] = sum(timer.ms.values())
    log.info("%d rotations, counts %s", len(rotations), counts)
    return GraspReport(ranked[:cfg.top_k], counts, timings, len(rotations), B, cfg.top_k)
