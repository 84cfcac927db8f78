"""Scene trees of 4x4 transforms that keep the history of how 3D data were aligned."""

from .geom import compose, decompose_trs, from_trs, invert, is_rigid, Trs
from .pointset import PointSet, apply, centroid, concat, rms_distance
from .track import MotionTrack, sample
from .tree import Diagnostic, Group, Motion, Node, Object, Transform, Workspace

__all__ = [
    "Diagnostic", "Group", "Motion", "MotionTrack", "Node", "Object", "PointSet",
    "Transform", "Trs", "Workspace", "apply", "centroid", "compose", "concat",
    "decompose_trs", "from_trs", "invert", "is_rigid", "rms_distance", "sample",
]
