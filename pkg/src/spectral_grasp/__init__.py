"""Grasp synthesis by spectral correlation of surface-normal images.

The object cloud and the gripper pads are reduced to binary extended
Gaussian images, expanded in spherical harmonics and correlated over SO(3).
Rotations with high correlation seed finger contacts, which are filtered
(antipodal, width, collision) and ranked by local contact moments.
"""

from .begi import Begi, build_begi
from .cloud_io import PointCloud, estimate_normals, load_cloud, save_cloud
from .contacts import GripperModel, load_gripper, parallel_jaw
from .locomo import LocomoParams, rank_grasps
from .pipeline import GraspReport, PipelineConfig, generate
from .sht import HarmonicCoeffs, forward_sht, inverse_sht
from .so3corr import RotationZYZ, correlate, normalize

__version__ = "0.1.0"

__all__ = [
    "Begi", "build_begi", "PointCloud", "estimate_normals", "load_cloud", "save_cloud",
    "GripperModel", "load_gripper", "parallel_jaw", "LocomoParams", "rank_grasps",
    "GraspReport", "PipelineConfig", "generate", "HarmonicCoeffs", "forward_sht",
    "inverse_sht", "RotationZYZ", "correlate", "normalize",
]
