"""Exception hierarchy.

Every error raised on purpose by the library derives from
:class:`PoseTrackError`, so the CLI can turn them into exit code 1.
"""


class PoseTrackError(Exception):
    """Base class for data and model errors."""


# skeleton
class TopologyError(PoseTrackError):
    pass


class CycleDetected(TopologyError):
    pass


class MultipleRoots(TopologyError):
    pass


class NoRoot(TopologyError):
    pass


class DuplicateName(TopologyError):
    pass


# imaging
class ZeroSizeImage(PoseTrackError):
    pass


class LengthMismatch(PoseTrackError):
    pass


# models
class NoSamples(PoseTrackError):
    pass


class PartNeverObserved(PoseTrackError):
    pass


class NoClusters(PoseTrackError):
    pass


class SchemaVersionMismatch(PoseTrackError):
    pass


class CorruptFile(PoseTrackError):
    pass


# tracker
class WindowFullyOutsideImage(PoseTrackError):
    pass


class MissingGroundTruthForReinit(PoseTrackError):
    pass


# evaluation
class NoEvaluableFrames(PoseTrackError):
    pass


# io
class MissingFrame(PoseTrackError):
    pass


class AnnotationMismatch(PoseTrackError):
    pass


class DecodeError(PoseTrackError):
    pass
