"""Streaming fault detection and classification for multi-stream processes.

The toolkit watches many sensor streams at once with a nonparametric
CUSUM detector whose false-alarm behavior is set directly by the operator
(as a target in-control average run length), then classifies the detected
fault from the covariance structure of a window around the alarm, mapped
into the tangent space of the SPD manifold and fed to an RBF-SVM.

Typical entry points:

    standardize.fit_reference / apply     scale calibration
    detector.Monitor                      streaming detection
    calibrate.find_threshold              threshold for a target ARL0
    pipeline.offline_train                full training recipe
    pipeline.online_monitor               event-stream monitoring
    pipeline.evaluate                     scoring on labeled runs
    simulate.make_benchmark               synthetic labeled corpus
"""

from . import (
    bundle,
    calibrate,
    detector,
    errors,
    features,
    pipeline,
    simulate,
    spd,
    standardize,
    svm,
)

__all__ = [
    "bundle",
    "calibrate",
    "detector",
    "errors",
    "features",
    "pipeline",
    "simulate",
    "spd",
    "standardize",
    "svm",
]

__version__ = "0.1.0"
