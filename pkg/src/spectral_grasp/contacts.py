"""Gripper model, contact sampling at high-correlation rotations, grasp filters.

Hand frame conventions: the origin sits at the palm centre, ``+x`` is the
closing axis (finger 1 on the ``-x`` side, finger 2 on ``+x``) and the
approach axis points from the palm towards the fingertips. At opening width
``w`` the pad centres are ``-/+ w/2`` along ``x`` and ``palm_standoff`` along
the approach axis.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .begi import Begi, build_begi, direction_index
from .cloud_io import PointCloud, load_cloud
from .errors import CoincidentContacts, ConfigError, MissingNormals
from .so3corr import RotationZYZ, euler_zyz_matrices

DEFAULT_K_MAX = 8
DEFAULT_MU = 0.5
DEFAULT_N_APPROACH = 8
DEFAULT_CLEARANCE = 0.005

# slack on the closing-volume slab so contacts exactly on the pad planes stay excluded
_SLAB_TOL = 1e-6


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``lo <= p <= hi`` (meters)."""

    lo: Tuple[float, float, float]
    hi: Tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3 or any(a > b for a, b in zip(lo, hi)):
            raise ConfigError(f"invalid box {lo} .. {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains(self, pts: np.ndarray, inflate: float = 0.0, offset=None) -> np.ndarray:
        lo = np.asarray(self.lo) - inflate
        hi = np.asarray(self.hi) + inflate
        if offset is not None:
            lo = lo + offset
            hi = hi + offset
        return np.all((pts >= lo) & (pts <= hi), axis=-1)

    def corners(self) -> np.ndarray:
        return np.array(list(itertools.product(*zip(self.lo, self.hi))))

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.lo) + np.asarray(self.hi)) / 2


@dataclass(frozen=True, eq=False)
class GripperModel:
    """Finger pads, stroke and collision boxes of an ``n_fingers`` hand.

    ``finger_boxes[i]`` is expressed relative to pad ``i``'s centre so it
    follows the finger as the opening width changes. ``q`` is the joint
    configuration (opening width) the pad clouds were captured at.
    """

    pads: Tuple[PointCloud, ...]
    stroke: Tuple[float, float]
    palm_box: Box
    finger_boxes: Tuple[Box, ...]
    palm_standoff: float
    approach_axis: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    q: Optional[float] = None

    def __post_init__(self):
        pads = tuple(self.pads)
        object.__setattr__(self, "pads", pads)
        object.__setattr__(self, "finger_boxes", tuple(self.finger_boxes))
        if len(pads) < 2:
            raise ConfigError("a gripper needs at least two fingers")
        if len(self.finger_boxes) != len(pads):
            raise ConfigError("need one finger box per pad")
        w_min, w_max = (float(v) for v in self.stroke)
        if not w_min < w_max:
            raise ConfigError(f"stroke must satisfy w_min < w_max, got {self.stroke}")
        object.__setattr__(self, "stroke", (w_min, w_max))
        for p in pads:
            if not p.has_normals or not np.any(p.valid):
                raise MissingNormals("every pad needs surface normals")
        a = np.asarray(self.approach_axis, dtype=np.float64)
        a = a / np.linalg.norm(a)
        if abs(a[0]) > 1e-6:
            raise ConfigError("approach axis must be orthogonal to the closing (x) axis")
        object.__setattr__(self, "approach_axis", tuple(a))
        if len(pads) == 2:
            n1, n2 = self.pad_normals
            if float(n1 @ n2) > -1.0 + 1e-6:
                raise ConfigError("parallel-jaw pad normals must be antiparallel")
        if self.q is None:
            object.__setattr__(self, "q", w_max)

    @property
    def n_fingers(self) -> int:
        return len(self.pads)

    @property
    def pad_normals(self) -> np.ndarray:
        """Mean pad normal per finger (unit), shape ``(n_fingers, 3)``."""
        out = []
        for p in self.pads:
            n = p.normals[p.valid].mean(axis=0)
            out.append(n / np.linalg.norm(n))
        return np.array(out)

    @property
    def approach(self) -> np.ndarray:
        return np.asarray(self.approach_axis)

    def hand_axes(self) -> np.ndarray:
        """Columns: closing axis, approach x closing, approach."""
        x = np.array([1.0, 0.0, 0.0])
        a = self.approach
        return np.column_stack([x, np.cross(a, x), a])

    def pad_sides(self) -> np.ndarray:
        """-1 for a pad on the -x side, +1 on the +x side."""
        return -np.sign(self.pad_normals[:, 0])

    def pad_centers(self, width: Optional[float] = None) -> np.ndarray:
        w = self.q if width is None else width
        x = np.array([1.0, 0.0, 0.0])
        return np.array([s * w / 2 * x + self.palm_standoff * self.approach for s in self.pad_sides()])

    def pad_extent(self) -> Tuple[np.ndarray, np.ndarray]:
        """Bounding range of the pads in the two non-closing hand axes."""
        axes = self.hand_axes()[:, 1:]
        lo, hi = [], []
        for p, c in zip(self.pads, self.pad_centers()):
            rel = (p.points - c) @ axes
            lo.append(rel.min(axis=0))
            hi.append(rel.max(axis=0))
        return np.min(lo, axis=0), np.max(hi, axis=0)

    @classmethod
    def from_json(cls, data: dict, base_dir: Optional[Path] = None) -> "GripperModel":
        known = {"n_fingers", "stroke", "approach_axis", "pads", "palm_box",
                 "finger_boxes", "palm_standoff", "q"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown gripper keys: {sorted(unknown)}")
        try:
            pads = []
            for entry in data["pads"]:
                if "file" in entry:
                    path = Path(entry["file"])
                    if base_dir is not None and not path.is_absolute():
                        path = base_dir / path
                    pads.append(load_cloud(path, entry.get("format"), frame_id="hand"))
                else:
                    pads.append(PointCloud(entry["points"], entry["normals"], frame_id="hand"))
            model = cls(
                pads=tuple(pads),
                stroke=tuple(data["stroke"]),
                palm_box=_box(data["palm_box"]),
                finger_boxes=tuple(_box(b) for b in data["finger_boxes"]),
                palm_standoff=float(data["palm_standoff"]),
                approach_axis=tuple(data.get("approach_axis", (0.0, 0.0, 1.0))),
                q=data.get("q"),
            )
        except (KeyError, TypeError, IndexError) as exc:
            raise ConfigError(f"malformed gripper description: {exc!r}") from exc
        if "n_fingers" in data and int(data["n_fingers"]) != model.n_fingers:
            raise ConfigError("n_fingers does not match the number of pads")
        return model

    def to_json(self) -> dict:
        return {
            "n_fingers": self.n_fingers,
            "stroke": list(self.stroke),
            "approach_axis": list(self.approach_axis),
            "palm_standoff": self.palm_standoff,
            "q": self.q,
            "palm_box": {"min": list(self.palm_box.lo), "max": list(self.palm_box.hi)},
            "finger_boxes": [{"min": list(b.lo), "max": list(b.hi)} for b in self.finger_boxes],
            "pads": [{"points": p.points.tolist(), "normals": p.normals.tolist()} for p in self.pads],
        }


def _box(d) -> Box:
    return Box(tuple(d["min"]), tuple(d["max"]))


def load_gripper(path) -> GripperModel:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return GripperModel.from_json(data, base_dir=path.parent)


def parallel_jaw(stroke=(0.0, 0.07), pad_size=0.02, pad_grid=7, finger_thickness=0.01,
                 finger_length=0.05, palm_width=0.06, palm_depth=0.04,
                 q: Optional[float] = None) -> GripperModel:
    """Flat two-finger jaw with square pads."""
    w = stroke[1] if q is None else q
    u = np.linspace(-pad_size / 2, pad_size / 2, pad_grid)
    yy, zz = np.meshgrid(u, u, indexing="ij")
    face = np.column_stack([np.zeros(yy.size), yy.ravel(), zz.ravel() + finger_length])
    pads = []
    for side in (-1.0, 1.0):
        pts = face + np.array([side * w / 2, 0.0, 0.0])
        nrm = np.tile([-side, 0.0, 0.0], (len(pts), 1))
        pads.append(PointCloud(pts, nrm, frame_id="hand"))
    h = pad_size / 2
    # relative to the pad centre; fingers extend outward and back to the palm
    finger_boxes = (
        Box((-finger_thickness, -h, -finger_length), (0.0, h, h)),
        Box((0.0, -h, -finger_length), (finger_thickness, h, h)),
    )
    half_span = stroke[1] / 2 + finger_thickness
    palm = Box((-half_span, -palm_width / 2, -palm_depth), (half_span, palm_width / 2, 0.0))
    return GripperModel(tuple(pads), tuple(stroke), palm, finger_boxes, finger_length,
                        (0.0, 0.0, 1.0), w)


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ContactSet:
    """One object point per finger plus the rotation that produced it."""

    indices: Tuple[int, ...]
    points: np.ndarray
    normals: np.ndarray
    rotation: Optional[RotationZYZ] = None
    correlation: float = float("nan")

    @property
    def width(self) -> float:
        return float(np.linalg.norm(self.points[1] - self.points[0]))


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform ``x -> rotation @ x + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, pts) -> np.ndarray:
        return np.asarray(pts) @ self.rotation.T + self.translation

    def inverse_apply(self, pts) -> np.ndarray:
        return (np.asarray(pts) - self.translation) @ self.rotation

    def compose(self, other: "Pose") -> "Pose":
        """``self`` after ``other``."""
        return Pose(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


@dataclass(eq=False)
class GraspCandidate:
    contacts: ContactSet
    pose: Pose
    width: float
    score: float = 0.0
    approach_index: int = 0

    @property
    def correlation(self) -> float:
        return self.contacts.correlation


def finger_begi(g: GripperModel, B: int) -> Begi:
    """BEGI of all pad normals together, in the hand frame."""
    return build_begi(PointCloud.concatenate(list(g.pads), frame_id="hand"), B)


def farthest_point_subsample(points: np.ndarray, members: np.ndarray, k: int) -> np.ndarray:
    """Greedy farthest-point selection of ``k`` members, seeded at the member
    nearest the set centroid. Returned indices are sorted."""
    if len(members) <= k:
        return members
    pts = points[members]
    first = int(np.argmin(np.linalg.norm(pts - pts.mean(axis=0), axis=1)))
    chosen = [first]
    dist = np.linalg.norm(pts - pts[first], axis=1)
    for _ in range(k - 1):
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(pts - pts[nxt], axis=1))
    return np.sort(members[chosen])


def _rotation_arrays(rotations):
    rots, vals = [], []
    for item in rotations:
        if isinstance(item, RotationZYZ):
            rots.append(item)
            vals.append(float("nan"))
        else:
            rots.append(item[0])
            vals.append(float(item[1]))
    return rots, np.array(vals)


def contact_index_sets(obj: Begi, cloud: PointCloud, g: GripperModel, rotations,
                       k_max: int = DEFAULT_K_MAX):
    """Array form of :func:`sample_contact_sets`.

    Returns ``(indices, source)``: an ``(n, n_fingers)`` array of object
    point indices and, per row, the position of the producing rotation in
    ``rotations``. A cell combination already produced by an earlier
    rotation is not repeated.
    """
    rots, _ = _rotation_arrays(rotations)
    nf = g.n_fingers
    if not rots:
        return np.empty((0, nf), dtype=np.int64), np.empty(0, dtype=np.int64)
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    mats = euler_zyz_matrices([r.alpha for r in rots], [r.beta for r in rots],
                              [r.gamma for r in rots])
    dirs = np.einsum("rij,fj->rfi", mats, g.pad_normals)
    j, k = direction_index(dirs, obj.bandwidth)
    hit = np.all(obj.occupancy[j, k], axis=1)
    cache = {}
    seen = set()
    rows, source = [], []
    for r in np.flatnonzero(hit):
        cells = tuple(zip(j[r].tolist(), k[r].tolist()))
        if cells in seen:
            continue
        seen.add(cells)
        picks = []
        for cell in cells:
            if cell not in cache:
                cache[cell] = farthest_point_subsample(cloud.points, obj.points_in(*cell), k_max)
            picks.append(cache[cell])
        grids = np.meshgrid(*picks, indexing="ij")
        combo = np.stack([gr.ravel() for gr in grids], axis=1)
        rows.append(combo)
        source.append(np.full(len(combo), r))
    if not rows:
        return np.empty((0, nf), dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(rows), np.concatenate(source)


def make_contact_set(cloud: PointCloud, idx, rotation=None, correlation=float("nan")) -> ContactSet:
    idx = tuple(int(i) for i in idx)
    return ContactSet(idx, cloud.points[list(idx)], cloud.normals[list(idx)], rotation, correlation)


def sample_contact_sets(obj: Begi, cloud: PointCloud, g: GripperModel, rotations,
                        k_max: int = DEFAULT_K_MAX) -> List[ContactSet]:
    """Contact sets for each rotation whose finger cells are all occupied.

    Each finger's mean pad normal is rotated and binned into the object BEGI;
    the occupied cells' point sets, cut to ``k_max`` points each, are
    combined as a cross product. Ordering follows the rotation order, then
    point indices.
    """
    if obj.bandwidth < 1:
        raise ValueError("bad bandwidth")
    rots, vals = _rotation_arrays(rotations)
    idx, src = contact_index_sets(obj, cloud, g, rotations, k_max)
    return [make_contact_set(cloud, row, rots[s], vals[s]) for row, s in zip(idx, src)]


# ---------------------------------------------------------------------------
# filters


def antipodal_mask(p1, n1, p2, n2, mu: float) -> np.ndarray:
    """Vectorized friction-cone test; coincident pairs fail."""
    if mu <= 0:
        raise ValueError("friction coefficient must be positive")
    d = np.asarray(p2, dtype=np.float64) - np.asarray(p1, dtype=np.float64)
    dist = np.linalg.norm(d, axis=-1)
    ok = dist > 1e-6
    u = d / np.where(ok, dist, 1.0)[..., None]
    cos_cone = 1.0 / np.sqrt(1.0 + mu * mu)
    c1 = np.sum(u * -np.asarray(n1), axis=-1)
    c2 = np.sum(-u * -np.asarray(n2), axis=-1)
    # angle <= atan(mu)  <=>  cos(angle) >= cos(atan(mu)), with slack for rounding
    return ok & (c1 >= cos_cone - 1e-12) & (c2 >= cos_cone - 1e-12)


def antipodal_filter(cs: ContactSet, mu: float = DEFAULT_MU) -> bool:
    """Both friction cones contain the line joining the two contacts."""
    if len(cs.points) != 2:
        raise ValueError("antipodal test needs exactly two contacts")
    if np.linalg.norm(cs.points[1] - cs.points[0]) <= 1e-6:
        raise CoincidentContacts("contacts coincide")
    return bool(antipodal_mask(cs.points[0], cs.normals[0], cs.points[1], cs.normals[1], mu))


def width_mask(p1, p2, stroke) -> np.ndarray:
    w = np.linalg.norm(np.asarray(p2) - np.asarray(p1), axis=-1)
    return (w >= stroke[0] - 1e-12) & (w <= stroke[1] + 1e-12)


def width_filter(cs: ContactSet, g: GripperModel) -> bool:
    return bool(width_mask(cs.points[0], cs.points[1], g.stroke))


# ---------------------------------------------------------------------------
# wrist poses and collision


def _perpendicular(axis: np.ndarray, preferred: np.ndarray) -> Optional[np.ndarray]:
    v = preferred - (preferred @ axis) * axis
    n = np.linalg.norm(v)
    return v / n if n > 1e-6 else None


def wrist_poses(cs: ContactSet, g: GripperModel, n_approach: int = DEFAULT_N_APPROACH) -> List[Pose]:
    """Wrist transforms placing pad centres on the two contacts.

    Approach directions are ``n_approach`` equal rolls about the closing
    axis. The first one pushes against the summed contact normals; when
    those cancel (a perfect antipodal pair) it falls back to approaching
    from above, then along -y, then -x.
    """
    if n_approach < 1:
        raise ValueError("n_approach must be >= 1")
    p1, p2 = cs.points[0], cs.points[1]
    width = float(np.linalg.norm(p2 - p1))
    if width <= 1e-9:
        raise CoincidentContacts("contacts coincide")
    # hand +x runs from the -x pad to the +x pad; orient it so pad i meets p_i
    x = g.pad_sides()[1] * (p2 - p1) / width
    mid = (p1 + p2) / 2
    a0 = _perpendicular(x, -(cs.normals[0] + cs.normals[1]))
    for fallback in ([0.0, 0.0, -1.0], [0.0, -1.0, 0.0], [-1.0, 0.0, 0.0]):
        if a0 is not None:
            break
        a0 = _perpendicular(x, np.array(fallback))
    b0 = np.cross(x, a0)
    hand = g.hand_axes()
    hand_mid = g.pad_centers(width).mean(axis=0)
    poses = []
    for i in range(n_approach):
        t = 2 * np.pi * i / n_approach
        a = np.cos(t) * a0 + np.sin(t) * b0
        world = np.column_stack([x, np.cross(a, x), a])
        R = world @ hand.T
        poses.append(Pose(R, mid - R @ hand_mid))
    return poses


def _gripper_radius(g: GripperModel, width: float, clearance: float) -> float:
    """Distance from the grasp centre to the farthest inflated box corner."""
    mid = g.pad_centers(width).mean(axis=0)
    corners = [g.palm_box.corners()]
    for box, c in zip(g.finger_boxes, g.pad_centers(width)):
        corners.append(box.corners() + c)
    return float(np.max(np.linalg.norm(np.concatenate(corners) - mid, axis=1))) + np.sqrt(3) * clearance


def _collides(local: np.ndarray, g: GripperModel, clearance: float, width: float) -> bool:
    if np.any(g.palm_box.contains(local, clearance)):
        return True
    # the finger bodies sit outside the pad planes; inside the slab only the
    # clearance margin reaches, and that is where the object is meant to be
    outside = np.abs(local @ np.array([1.0, 0.0, 0.0])) > width / 2 + _SLAB_TOL
    local = local[outside]
    for box, c in zip(g.finger_boxes, g.pad_centers(width)):
        if np.any(box.contains(local, clearance, offset=c)):
            return True
    return False


def scene_near(pose_or_mid, g: GripperModel, scene: PointCloud, width: float, clearance: float,
               tree: Optional[cKDTree] = None) -> np.ndarray:
    """Scene points that could touch the gripper around a grasp centre."""
    if tree is None:
        return scene.points
    near = tree.query_ball_point(pose_or_mid, _gripper_radius(g, width, clearance), return_sorted=True)
    return scene.points[np.asarray(near, dtype=np.int64)]


def collision_filter(pose: Pose, g: GripperModel, scene: PointCloud, clearance: float = DEFAULT_CLEARANCE,
                     width: Optional[float] = None, tree: Optional[cKDTree] = None,
                     points: Optional[np.ndarray] = None) -> bool:
    """True when no scene point enters the inflated palm or finger boxes.

    Points in the closing volume between the two pad planes are the intended
    contact region and never count against the fingers.
    """
    if clearance < 0:
        raise ValueError("clearance must be non-negative")
    w = g.q if width is None else width
    if points is None:
        mid = pose.apply(g.pad_centers(w).mean(axis=0))
        points = scene_near(mid, g, scene, w, clearance, tree)
    if len(points) == 0:
        return True
    return not _collides(pose.inverse_apply(points), g, clearance, w)


def _box_hits(local: np.ndarray, box: Box, inflate: float, offset=None) -> np.ndarray:
    c = box.center if offset is None else box.center + offset
    half = (np.asarray(box.hi) - np.asarray(box.lo)) / 2 + inflate
    return np.max(np.abs(local - c) / half, axis=-1) <= 1.0


def _axial_bounds(lo, hi, axis_pt, inflate):
    """x interval and radial interval about the hand x axis of an inflated box."""
    lo = np.asarray(lo, dtype=np.float64) - inflate - axis_pt
    hi = np.asarray(hi, dtype=np.float64) + inflate - axis_pt
    # nearest point of the y-z rectangle to the axis, and its farthest corner
    near = np.clip(0.0, lo[1:], hi[1:])
    far = np.maximum(np.abs(lo[1:]), np.abs(hi[1:]))
    return lo[0], hi[0], float(np.linalg.norm(near)), float(np.linalg.norm(far))


def _roll_cull(points: np.ndarray, pose: Pose, g: GripperModel, clearance: float,
               width: float) -> np.ndarray:
    """Drop points that no roll of the hand about its closing axis can reach.

    Every approach roll shares the closing axis, so a point's axial position
    and its distance from that axis are the same in all of them.
    """
    centers = g.pad_centers(width)
    axis_pt = centers.mean(axis=0)
    u = pose.inverse_apply(points) - axis_pt
    x = u[:, 0]
    r = np.hypot(u[:, 1], u[:, 2])
    slack = 1e-9
    keep = np.zeros(len(points), dtype=bool)
    boxes = [(g.palm_box, np.zeros(3), False)] + [(b, c, True) for b, c in zip(g.finger_boxes, centers)]
    for box, c, finger in boxes:
        x0, x1, r0, r1 = _axial_bounds(np.asarray(box.lo) + c, np.asarray(box.hi) + c, axis_pt, clearance)
        m = (x >= x0 - slack) & (x <= x1 + slack) & (r >= r0 - slack) & (r <= r1 + slack)
        if finger:
            m &= np.abs(x + axis_pt[0]) > width / 2 + _SLAB_TOL
        keep |= m
    return points[keep]


def first_free_pose(poses: Sequence[Pose], g: GripperModel, points: np.ndarray,
                    clearance: float, width: float) -> Optional[int]:
    """Index of the first collision-free pose, or None.

    Same test as :func:`collision_filter`; the first pose is tried alone and
    the rest in one batch.
    """
    if not poses:
        return None
    if len(points) == 0:
        return 0
    centers = g.pad_centers(width)
    points = _roll_cull(points, poses[0], g, clearance, width)
    if len(points) == 0:
        return 0
    for lo, hi in ((0, 1), (1, len(poses))):
        if lo >= hi:
            break
        R = np.stack([p.rotation for p in poses[lo:hi]])
        t = np.stack([p.translation for p in poses[lo:hi]])
        local = np.matmul(points[None] - t[:, None], R)
        hit = np.any(_box_hits(local, g.palm_box, clearance), axis=1)
        outside = np.abs(local[..., 0]) > width / 2 + _SLAB_TOL
        for box, c in zip(g.finger_boxes, centers):
            hit |= np.any(_box_hits(local, box, clearance, c) & outside, axis=1)
        free = np.flatnonzero(~hit)
        if len(free):
            return lo + int(free[0])
    return None
