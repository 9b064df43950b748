"""Command-line front-end.

Subcommands::

    spectral-grasp generate  --cloud obj.ply --gripper jaw.json --output grasps.json
    spectral-grasp begi      --cloud obj.ply --bandwidth 8 --output begi.json
    spectral-grasp correlate --cloud obj.ply --gripper jaw.json --bandwidth 8 --output density.csv

Settings are layered: built-in defaults, then a ``--config`` file of
``key = value`` lines, then command-line flags. Exit codes: 0 success,
1 input error, 2 usage error or out-of-range setting, 3 no feasible grasp.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Any, Callable, Dict, Optional

import numpy as np

from .begi import begi_signal, build_begi
from .cloud_io import DEFAULT_NORMAL_K, FORMATS, PointCloud, estimate_normals, load_cloud
from .contacts import GripperModel, finger_begi, load_gripper
from .errors import ConfigError, GraspError
from .locomo import LocomoParams
from .pipeline import PipelineConfig, generate
from .sht import forward_sht
from .so3corr import correlate, normalize, write_density_csv

log = logging.getLogger("spectral_grasp")

SCHEMA_VERSION = "1.0"
DATA_DIR = Path(__file__).resolve().parent / "data"
DEFAULT_GRIPPER = DATA_DIR / "parallel_jaw.json"

EXIT_OK, EXIT_INPUT, EXIT_USAGE, EXIT_INFEASIBLE = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str):
    return tuple(float(x) for x in s.replace(",", " ").split())


def _vec3(s: str):
    v = _floats(s)
    if len(v) != 3:
        raise ValueError(f"expected 3 numbers, got {len(v)}")
    return v


# every key a config file may set, with its parser
CONFIG_KEYS: Dict[str, Callable[[str], Any]] = {
    "bandwidth": int,
    "t_corr": float,
    "k_max": int,
    "mu": float,
    "n_approach": int,
    "clearance": float,
    "top_k": int,
    "local_max": _bool,
    "kappa": int,
    "radii": _floats,
    "sigma": float,
    "omega": _floats,
    "rho": float,
    "min_patch_points": int,
    "gripper": str,
    "cloud": str,
    "format": str,
    "estimate_normals": _bool,
    "normal_k": int,
    "viewpoint": _vec3,
    "display_threshold": float,
}
_PATH_KEYS = ("gripper", "cloud")

_PIPELINE_KEYS = ("bandwidth", "t_corr", "k_max", "mu", "n_approach", "clearance", "top_k", "local_max")
_LOCOMO_KEYS = ("kappa", "radii", "sigma", "omega", "rho", "min_patch_points")


def _defaults() -> Dict[str, Any]:
    d: Dict[str, Any] = {k: v for k, v in asdict(PipelineConfig()).items() if k in _PIPELINE_KEYS}
    d.update({k: v for k, v in asdict(LocomoParams()).items() if k in _LOCOMO_KEYS})
    d.update(gripper=None, cloud=None, format=None, estimate_normals=False,
             normal_k=DEFAULT_NORMAL_K, viewpoint=(0.0, 0.0, 1.0), display_threshold=0.5)
    return d


def read_config(path) -> Dict[str, Any]:
    """Parse a ``key = value`` file; ``#`` starts a comment.

    Unknown keys and unparsable values raise :class:`ConfigError`. Relative
    paths are resolved against the file's directory.
    """
    path = Path(path)
    out: Dict[str, Any] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            parsed = CONFIG_KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
        if key in _PATH_KEYS and not Path(parsed).is_absolute():
            parsed = str(path.parent / parsed)
        out[key] = parsed
    return out


def resolve_settings(args: argparse.Namespace) -> Dict[str, Any]:
    """Defaults, overridden by the config file, overridden by flags."""
    settings = _defaults()
    if getattr(args, "config", None):
        settings.update(read_config(args.config))
    for key in CONFIG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            settings[key] = v
    return settings


def pipeline_config(s: Dict[str, Any]) -> PipelineConfig:
    try:
        locomo = LocomoParams(**{k: s[k] for k in _LOCOMO_KEYS})
        return PipelineConfig(locomo=locomo, **{k: s[k] for k in _PIPELINE_KEYS})
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


# ---------------------------------------------------------------------------
# output helpers


def _sig(x: Any) -> Any:
    """Round every float to 9 significant digits."""
    if isinstance(x, (float, np.floating)):
        return float(f"{float(x):.9g}")
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.ndarray):
        return _sig(x.tolist())
    if isinstance(x, (list, tuple)):
        return [_sig(v) for v in x]
    if isinstance(x, dict):
        return {k: _sig(v) for k, v in x.items()}
    return x


def write_json(obj: Any, path) -> None:
    Path(path).write_text(json.dumps(_sig(obj), indent=1) + "\n")


def report_to_json(report) -> Dict[str, Any]:
    candidates = []
    for c in report.candidates:
        corr = c.correlation
        candidates.append({
            "contacts": [{"p": p, "n": n} for p, n in zip(c.contacts.points, c.contacts.normals)],
            "wrist": {"rotation": np.asarray(c.pose.rotation).reshape(-1),
                      "translation": np.asarray(c.pose.translation)},
            "width": c.width,
            "correlation": corr if np.isfinite(corr) else 0.0,
            "score": c.score,
        })
    return {
        "schema_version": SCHEMA_VERSION,
        "bandwidth": report.bandwidth,
        "rotations": report.rotations,
        "top_k": report.top_k,
        "candidates": candidates,
        "counts": dict(report.counts),
        "timings": dict(report.timings),
    }


# ---------------------------------------------------------------------------
# inputs


def _require(s: Dict[str, Any], key: str, flag: str) -> Any:
    if s.get(key) is None:
        raise UsageError(f"{flag} is required" + (f" (or set {key!r} in the config file)" if key in CONFIG_KEYS else ""))
    return s[key]


def _load_object(s: Dict[str, Any]) -> PointCloud:
    path = _require(s, "cloud", "--cloud")
    fmt = s.get("format")
    if fmt is not None and fmt not in FORMATS:
        raise UsageError(f"--format must be one of {FORMATS}")
    cloud = load_cloud(path, fmt)
    if s["estimate_normals"]:
        log.info("estimating normals (k=%d)", s["normal_k"])
        cloud = estimate_normals(cloud, s["normal_k"], s["viewpoint"])
    return cloud


def _load_gripper(s: Dict[str, Any]) -> GripperModel:
    path = s.get("gripper")
    if path is None:
        log.info("no gripper given; using the built-in parallel jaw")
        path = DEFAULT_GRIPPER
    return load_gripper(path)


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args: argparse.Namespace) -> int:
    s = resolve_settings(args)
    cfg = pipeline_config(s)
    output = _require(vars(args), "output", "--output")
    cloud = _load_object(s)
    g = _load_gripper(s)
    report = generate(cloud, g, cfg, workers=args.workers)
    write_json(report_to_json(report), output)
    log.info("counts %s", report.counts)
    if not report.feasible:
        log.warning("no feasible grasp")
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_begi(args: argparse.Namespace) -> int:
    s = resolve_settings(args)
    cfg = pipeline_config(s)
    output = _require(vars(args), "output", "--output")
    b = build_begi(_load_object(s), cfg.bandwidth)
    write_json(b.to_json(include_point_sets=args.point_sets), output)
    log.info("%d occupied cells", len(b.occupied))
    return EXIT_OK


def cmd_correlate(args: argparse.Namespace) -> int:
    s = resolve_settings(args)
    cfg = pipeline_config(s)
    output = _require(vars(args), "output", "--output")
    cloud = _load_object(s)
    g = _load_gripper(s)
    B = cfg.bandwidth
    fc = forward_sht(begi_signal(build_begi(cloud, B)))
    gc = forward_sht(begi_signal(finger_begi(g, B)))
    grid = normalize(correlate(fc, gc), fc, gc)
    rows = write_density_csv(grid, output, s["display_threshold"])
    if args.coeffs:
        write_json({"bandwidth": B, "object": fc.to_records(), "gripper": gc.to_records()}, args.coeffs)
    log.info("%d nodes at or above %g", rows, s["display_threshold"])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spectral-grasp", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, gripper: bool):
        p.add_argument("--cloud", help="object cloud (.ply or .xyz)")
        p.add_argument("--format", choices=FORMATS, help="override the format inferred from the suffix")
        p.add_argument("--config", help="key = value settings file")
        p.add_argument("--bandwidth", type=int, help="grid bandwidth B")
        p.add_argument("--estimate-normals", dest="estimate_normals", action="store_const", const=True,
                       help="estimate normals by k-NN PCA instead of reading them")
        p.add_argument("--normal-k", dest="normal_k", type=int, help="neighbours for normal estimation")
        p.add_argument("--viewpoint", type=float, nargs=3, metavar=("X", "Y", "Z"),
                       help="normals are flipped to face this point")
        p.add_argument("--output", help="output file")
        if gripper:
            p.add_argument("--gripper", help="gripper JSON (default: built-in parallel jaw)")

    p = sub.add_parser("generate", help="rank grasp candidates for a cloud")
    common(p, gripper=True)
    p.add_argument("--tcorr", dest="t_corr", type=float, help="correlation threshold")
    p.add_argument("--top-k", dest="top_k", type=int, help="number of candidates kept")
    p.add_argument("--workers", type=int, default=None,
                   help="scoring threads (default: $SPECTRAL_GRASP_WORKERS or CPU count)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("begi", help="dump the binary normal image as JSON")
    common(p, gripper=False)
    p.add_argument("--point-sets", dest="point_sets", action="store_true",
                   help="include the point indices behind each cell")
    p.set_defaults(func=cmd_begi)

    p = sub.add_parser("correlate", help="dump the normalized correlation density as CSV")
    common(p, gripper=True)
    p.add_argument("--display-threshold", dest="display_threshold", type=float,
                   help="only nodes with value >= this are written (default 0.5)")
    p.add_argument("--coeffs", help="also dump both coefficient sets to this JSON file")
    p.set_defaults(func=cmd_correlate)
    return ap


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the message
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"spectral-grasp {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GraspError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"spectral-grasp {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
