"""Point cloud container, ASCII PLY / XYZ readers and writers, normal estimation."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyCloud, NonFiniteValue, ParseError, TooFewPoints

PathLike = Union[str, Path]

FORMATS = ("ply-ascii", "xyz")
DEFAULT_NORMAL_K = 16

_PLY_SCALARS = {
    "float", "float32", "double", "float64",
    "char", "uchar", "short", "ushort", "int", "uint",
    "int8", "uint8", "int16", "uint16", "int32", "uint32",
}


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Positions in meters with optional unit normals.

    ``normals`` is None when the source carried no normals. Rows of NaN mark
    points whose normal could not be estimated; those points are skipped by
    every downstream stage.
    """

    points: np.ndarray
    normals: Optional[np.ndarray] = None
    frame_id: str = "object"

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True).reshape(-1, 3)
        if len(pts) == 0:
            raise EmptyCloud("point cloud has no points")
        if not np.all(np.isfinite(pts)):
            raise NonFiniteValue("point coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            nrm = np.array(self.normals, dtype=np.float64, copy=True).reshape(-1, 3)
            if nrm.shape != pts.shape:
                raise ParseError(f"{len(nrm)} normals for {len(pts)} points")
            flagged = np.all(np.isnan(nrm), axis=1)
            if not np.all(np.isfinite(nrm[~flagged])):
                raise NonFiniteValue("normals must be finite")
            norms = np.linalg.norm(nrm[~flagged], axis=1)
            if np.any(norms <= 1e-12):
                raise NonFiniteValue("zero-length normal")
            nrm[~flagged] /= norms[:, None]
            nrm.setflags(write=False)
            object.__setattr__(self, "normals", nrm)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def has_normals(self) -> bool:
        return self.normals is not None

    @property
    def normals_missing(self) -> bool:
        return self.normals is None

    @property
    def valid(self) -> np.ndarray:
        """Boolean mask of points carrying a usable normal."""
        if self.normals is None:
            return np.zeros(len(self.points), dtype=bool)
        return ~np.isnan(self.normals[:, 0])

    def transformed(self, rotation: np.ndarray, translation=(0.0, 0.0, 0.0)) -> "PointCloud":
        rotation = np.asarray(rotation, dtype=np.float64)
        pts = self.points @ rotation.T + np.asarray(translation, dtype=np.float64)
        nrm = None if self.normals is None else self.normals @ rotation.T
        return PointCloud(pts, nrm, self.frame_id)

    def subset(self, index) -> "PointCloud":
        nrm = None if self.normals is None else self.normals[index]
        return PointCloud(self.points[index], nrm, self.frame_id)

    @staticmethod
    def concatenate(clouds: Sequence["PointCloud"], frame_id: str = "object") -> "PointCloud":
        pts = np.concatenate([c.points for c in clouds])
        if all(c.has_normals for c in clouds):
            nrm = np.concatenate([c.normals for c in clouds])
        else:
            nrm = None
        return PointCloud(pts, nrm, frame_id)


def infer_format(path: PathLike) -> str:
    suffix = Path(path).suffix.lower()
    if suffix == ".ply":
        return "ply-ascii"
    if suffix in (".xyz", ".txt", ".pts"):
        return "xyz"
    raise ParseError(f"cannot infer cloud format from suffix {suffix!r}")


def load_cloud(path: PathLike, format: Optional[str] = None, frame_id: str = "object") -> PointCloud:
    """Read an ASCII PLY or XYZ file.

    Normals are taken from ``nx ny nz`` (PLY) or from columns 4-6 (XYZ) when
    present and renormalized; otherwise the cloud comes back with
    ``normals_missing`` set.
    """
    fmt = format or infer_format(path)
    text = Path(path).read_text()
    if fmt == "ply-ascii":
        pts, nrm = _parse_ply(text)
    elif fmt == "xyz":
        pts, nrm = _parse_xyz(text)
    else:
        raise ParseError(f"unsupported format {fmt!r}; expected one of {FORMATS}")
    return PointCloud(pts, nrm, frame_id)


def _parse_ply(text: str):
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError("missing 'ply' magic line")
    elements = []  # [name, count, [property names]]
    fmt_seen = False
    body_start = None
    for i, raw in enumerate(lines[1:], start=1):
        tok = raw.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            if len(tok) < 3 or tok[1] != "ascii":
                raise ParseError(f"only ascii PLY is supported, got {raw.strip()!r}")
            if tok[2] != "1.0":
                raise ParseError(f"unsupported PLY version {tok[2]!r}")
            fmt_seen = True
        elif tok[0] == "element":
            if len(tok) != 3:
                raise ParseError(f"bad element line {raw.strip()!r}")
            try:
                count = int(tok[2])
            except ValueError as exc:
                raise ParseError(f"bad element count in {raw.strip()!r}") from exc
            if count < 0:
                raise ParseError("negative element count")
            elements.append([tok[1], count, []])
        elif tok[0] == "property":
            if not elements:
                raise ParseError("property before any element")
            if tok[1] == "list":
                if len(tok) != 5:
                    raise ParseError(f"bad list property {raw.strip()!r}")
                elements[-1][2].append(("list", tok[4]))
            else:
                if len(tok) != 3 or tok[1] not in _PLY_SCALARS:
                    raise ParseError(f"bad property line {raw.strip()!r}")
                elements[-1][2].append(("scalar", tok[2]))
        elif tok[0] == "end_header":
            body_start = i + 1
            break
        else:
            raise ParseError(f"unexpected header line {raw.strip()!r}")
    if body_start is None:
        raise ParseError("missing end_header")
    if not fmt_seen:
        raise ParseError("missing format line")

    body = [ln for ln in lines[body_start:] if ln.strip()]
    cursor = 0
    pts = nrm = None
    for name, count, props in elements:
        if cursor + count > len(body):
            raise ParseError(
                f"element {name!r} declares {count} records, only {len(body) - cursor} present"
            )
        records = body[cursor:cursor + count]
        cursor += count
        if name != "vertex":
            continue
        if any(kind == "list" for kind, _ in props):
            raise ParseError("list properties on vertices are not supported")
        names = [p for _, p in props]
        for axis in ("x", "y", "z"):
            if axis not in names:
                raise ParseError(f"vertex element lacks property {axis!r}")
        try:
            table = np.array([[float(v) for v in r.split()] for r in records], dtype=np.float64)
        except ValueError as exc:
            raise ParseError(f"non-numeric vertex record: {exc}") from exc
        if count and (table.ndim != 2 or table.shape[1] != len(names)):
            raise ParseError("vertex record has the wrong number of fields")
        table = table.reshape(count, len(names))
        pts = table[:, [names.index(a) for a in ("x", "y", "z")]]
        if all(a in names for a in ("nx", "ny", "nz")):
            nrm = table[:, [names.index(a) for a in ("nx", "ny", "nz")]]
    if pts is None:
        raise ParseError("no vertex element")
    if len(pts) == 0:
        raise EmptyCloud("PLY file has zero vertices")
    _check_finite(pts, nrm)
    return pts, nrm


def _parse_xyz(text: str):
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            vals = [float(v) for v in line.split()]
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
        if len(vals) not in (3, 6):
            raise ParseError(f"line {lineno}: expected 3 or 6 fields, got {len(vals)}")
        rows.append(vals)
    if not rows:
        raise EmptyCloud("XYZ file has no points")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ParseError("mixed 3- and 6-column records")
    table = np.array(rows, dtype=np.float64)
    pts = table[:, :3]
    nrm = table[:, 3:6] if table.shape[1] == 6 else None
    _check_finite(pts, nrm)
    return pts, nrm


def _check_finite(pts, nrm):
    if not np.all(np.isfinite(pts)):
        raise NonFiniteValue("non-finite coordinate in input")
    if nrm is not None and not np.all(np.isfinite(nrm)):
        raise NonFiniteValue("non-finite normal in input")


def save_cloud(cloud: PointCloud, path: PathLike, format: Optional[str] = None) -> None:
    """Write a cloud losslessly (17 significant digits)."""
    fmt = format or infer_format(path)
    has_n = cloud.has_normals
    table = cloud.points if not has_n else np.hstack([cloud.points, cloud.normals])
    body = "\n".join(" ".join(f"{v:.17g}" for v in row) for row in table)
    if fmt == "ply-ascii":
        header = ["ply", "format ascii 1.0", f"element vertex {len(cloud)}",
                  "property double x", "property double y", "property double z"]
        if has_n:
            header += ["property double nx", "property double ny", "property double nz"]
        header.append("end_header")
        Path(path).write_text("\n".join(header) + "\n" + body + "\n")
    elif fmt == "xyz":
        cols = "x y z nx ny nz" if has_n else "x y z"
        Path(path).write_text(f"# {cols}\n{body}\n")
    else:
        raise ParseError(f"unsupported format {fmt!r}")


def estimate_normals(cloud: PointCloud, k: int = DEFAULT_NORMAL_K,
                     viewpoint=(0.0, 0.0, 1.0)) -> PointCloud:
    """Least-variance direction of each k-nearest-neighbour patch.

    Normals are oriented towards ``viewpoint``. Points whose neighbourhood
    has rank below 2 get a NaN normal and drop out of later stages.
    """
    if k < 3:
        raise ValueError("k must be at least 3")
    pts = cloud.points
    if len(pts) < k:
        raise TooFewPoints(f"{len(pts)} points, k={k}")
    _, idx = cKDTree(pts).query(pts, k=k)
    patches = pts[idx]
    centered = patches - patches.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    evals, evecs = np.linalg.eigh(cov)
    normals = evecs[:, :, 0].copy()

    scale = np.maximum(evals[:, 2], np.finfo(float).tiny)
    degenerate = (evals[:, 2] <= 0) | (evals[:, 1] <= 1e-10 * scale)

    to_view = np.asarray(viewpoint, dtype=np.float64) - pts
    flip = np.einsum("ij,ij->i", normals, to_view) < 0
    normals[flip] *= -1.0
    normals[degenerate] = np.nan
    return PointCloud(pts, normals, cloud.frame_id)
