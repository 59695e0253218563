"""Greedy tree-structured human pose tracking.

The usual flow: fit a :class:`~posetrack.models.PoseModel` from annotated
clips with :func:`~posetrack.models.train`, then call
:func:`~posetrack.tracker.track_video` with the first frame's pose.
"""

from .errors import PoseTrackError
from .evaluation import localization_accuracy, pcp
from .imaging import AnnulusGeometry, build_integral, extract_descriptor, extract_descriptors
from .models import PoseModel, load_model, save_model, train
from .skeleton import Pose, SkeletonTopology, full_body_14, traversal_order
from .tracker import TrackerConfig, track_frame, track_video

__version__ = "0.1.0"

__all__ = [
    "AnnulusGeometry",
    "Pose",
    "PoseModel",
    "PoseTrackError",
    "SkeletonTopology",
    "TrackerConfig",
    "build_integral",
    "extract_descriptor",
    "extract_descriptors",
    "full_body_14",
    "load_model",
    "localization_accuracy",
    "pcp",
    "save_model",
    "track_frame",
    "track_video",
    "train",
    "traversal_order",
]
