"""Exception hierarchy for the pose uncertainty toolkit"""


class PoseUncertaintyError(Exception):
    """Base class of every error raised by this project"""


# geom3d
class NonPositiveDepth(PoseUncertaintyError, ValueError):
    pass


class DegenerateConfiguration(PoseUncertaintyError, ValueError):
    pass


class SolverDiverged(PoseUncertaintyError, RuntimeError):
    pass


class RankDeficient(PoseUncertaintyError, ValueError):
    pass


class EmptyInput(PoseUncertaintyError, ValueError):
    pass


class OutOfRange(PoseUncertaintyError, ValueError):
    pass


# conformal
class ShapeMismatch(PoseUncertaintyError, ValueError):
    pass


class SingularCovariance(PoseUncertaintyError, ValueError):
    def __init__(self, keypoint: int, message: str = ""):
        self.keypoint = keypoint
        super().__init__(message or f"covariance of keypoint {keypoint} is singular")


class EpsilonOutOfRange(PoseUncertaintyError, ValueError):
    pass


class ZeroPeakProbability(PoseUncertaintyError, ValueError):
    pass


class TooFewCandidates(PoseUncertaintyError, ValueError):
    pass


class DegenerateInliers(PoseUncertaintyError, ValueError):
    def __init__(self, keypoint: int, message: str = ""):
        self.keypoint = keypoint
        super().__init__(message or f"inliers of keypoint {keypoint} are degenerate")


class CalibrationError(PoseUncertaintyError, ValueError):
    def __init__(self, sample_index: int, cause: Exception):
        self.sample_index = sample_index
        self.cause = cause
        super().__init__(f"calibration sample {sample_index}: {cause}")


# purse
class DimensionMismatch(PoseUncertaintyError, ValueError):
    pass


class NotPositiveDefinite(PoseUncertaintyError, ValueError):
    pass


class NoValidSamples(PoseUncertaintyError, RuntimeError):
    pass


# sdp / bounds
class NumericalFailure(PoseUncertaintyError, RuntimeError):
    pass


class CertificateUnavailable(PoseUncertaintyError, RuntimeError):
    pass


# pipeline
class OutOfFrustum(PoseUncertaintyError, RuntimeError):
    pass


class FormatError(PoseUncertaintyError, ValueError):
    pass


class ConfigError(PoseUncertaintyError, ValueError):
    pass
