"""Versioned single-file persistence for trained monitoring models.

A bundle carries everything online monitoring needs: standardization
statistics, sorted references, detector configuration with its calibrated
threshold, the tangent-space base point, the classifier, and the timing
parameters. The JSON payload is checksummed so silent truncation or
editing is caught at load time, and format-versioned so old files fail
loudly instead of misbehaving.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .detector import MonitorConfig
from .errors import CorruptBundleError, DomainError, VersionMismatchError
from .spd import METRIC_AFFINE, METRIC_LOG_EUCLIDEAN
from .standardize import ReferenceStats
from .svm import BinaryModel, MulticlassModel

__all__ = ["FORMAT_VERSION", "FEATURE_MODES", "ModelBundle", "save_bundle", "load_bundle"]

FORMAT_VERSION = 1
FEATURE_MODES = ("tangent", "raw")


@dataclass
class ModelBundle:
    """Everything needed to monitor and classify a live process.

    Attributes:
        stats: Standardization statistics fitted on in-control data.
        references: Sorted standardized in-control references, one per
            stream.
        config: Detector parameters including the calibrated threshold.
        target_arl0: The in-control ARL the threshold was calibrated for.
        patience: Samples to wait after an alarm before classifying.
        window: Trailing window length (in samples) for the covariance.
        karcher_base: Tangent-space base point (geometric mean of the
            training covariances); identity-like for raw feature mode.
        classifier: Trained one-vs-one SVM over fault ids.
        feature_mode: ``tangent`` (manifold features) or ``raw``
            (vectorized covariance as-is).
        trace_features: Whether V(t) summary features are appended.
        metric: Manifold metric the bundle was trained with.
        training_summary: Free-form JSON-safe diagnostics from training.
    """

    stats: ReferenceStats
    references: list[np.ndarray]
    config: MonitorConfig
    target_arl0: float
    patience: int
    window: int
    karcher_base: np.ndarray
    classifier: MulticlassModel
    feature_mode: str = "tangent"
    trace_features: bool = False
    metric: str = METRIC_AFFINE
    training_summary: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.feature_mode not in FEATURE_MODES:
            raise DomainError(
                f"feature_mode must be one of {FEATURE_MODES}, got {self.feature_mode!r}"
            )
        if self.metric not in (METRIC_AFFINE, METRIC_LOG_EUCLIDEAN):
            raise DomainError(f"unknown metric {self.metric!r}")
        if self.patience < 0:
            raise DomainError(f"patience must be >= 0, got {self.patience}")
        if self.window < 2:
            raise DomainError(f"window must be at least 2, got {self.window}")
        if len(self.references) != self.config.stream_count:
            raise CorruptBundleError(
                f"{len(self.references)} references for "
                f"{self.config.stream_count} streams"
            )


def _binary_to_dict(model: BinaryModel) -> dict:
    return {
        "support_vectors": np.asarray(model.support_vectors).tolist(),
        "dual_coefs": np.asarray(model.dual_coefs).tolist(),
        "bias": model.bias,
        "gamma": model.gamma,
        "c_penalty": model.c_penalty,
    }


def _binary_from_dict(data: dict) -> BinaryModel:
    return BinaryModel(
        support_vectors=np.asarray(data["support_vectors"], dtype=float),
        dual_coefs=np.asarray(data["dual_coefs"], dtype=float),
        bias=float(data["bias"]),
        gamma=float(data["gamma"]),
        c_penalty=float(data["c_penalty"]),
    )


def _payload(bundle: ModelBundle) -> dict:
    return {
        "stats": {
            "means": bundle.stats.means.tolist(),
            "stddevs": bundle.stats.stddevs.tolist(),
        },
        "references": [ref.tolist() for ref in bundle.references],
        "config": {
            "allowance": bundle.config.allowance,
            "top_r": bundle.config.top_r,
            "stream_count": bundle.config.stream_count,
            "threshold": bundle.config.threshold,
        },
        "target_arl0": bundle.target_arl0,
        "patience": bundle.patience,
        "window": bundle.window,
        "karcher_base": np.asarray(bundle.karcher_base).tolist(),
        "classifier": {
            "class_labels": bundle.classifier.class_labels.tolist(),
            "feature_means": bundle.classifier.feature_means.tolist(),
            "feature_stds": bundle.classifier.feature_stds.tolist(),
            "pairs": [
                {"label_a": a, "label_b": b, "model": _binary_to_dict(m)}
                for a, b, m in bundle.classifier.pairs
            ],
        },
        "feature_mode": bundle.feature_mode,
        "trace_features": bundle.trace_features,
        "metric": bundle.metric,
        "training_summary": bundle.training_summary,
    }


def _checksum(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def save_bundle(bundle: ModelBundle, path) -> None:
    """Write a bundle as checksummed, versioned JSON."""
    payload = _payload(bundle)
    document = {
        "format_version": FORMAT_VERSION,
        "checksum": _checksum(payload),
        "payload": payload,
    }
    Path(path).write_text(json.dumps(document, indent=1), encoding="utf-8")


def load_bundle(path) -> ModelBundle:
    """Read a bundle back; integrity and version are verified first.

    Raises:
        VersionMismatchError: Written by a different format version.
        CorruptBundleError: Unparseable JSON, failed checksum, or a
            payload that does not round-trip into a valid bundle.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptBundleError(f"bundle is not valid JSON: {exc}") from exc
    if not isinstance(document, dict) or "payload" not in document:
        raise CorruptBundleError("bundle is missing its payload")
    version = document.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"bundle format {version!r} is not supported (expected {FORMAT_VERSION})"
        )
    payload = document["payload"]
    if _checksum(payload) != document.get("checksum"):
        raise CorruptBundleError("bundle checksum does not match its payload")
    try:
        classifier = MulticlassModel(
            class_labels=np.asarray(payload["classifier"]["class_labels"], dtype=int),
            pairs=[
                (
                    int(p["label_a"]),
                    int(p["label_b"]),
                    _binary_from_dict(p["model"]),
                )
                for p in payload["classifier"]["pairs"]
            ],
            feature_means=np.asarray(
                payload["classifier"]["feature_means"], dtype=float
            ),
            feature_stds=np.asarray(
                payload["classifier"]["feature_stds"], dtype=float
            ),
        )
        return ModelBundle(
            stats=ReferenceStats(
                means=np.asarray(payload["stats"]["means"], dtype=float),
                stddevs=np.asarray(payload["stats"]["stddevs"], dtype=float),
            ),
            references=[np.asarray(r, dtype=float) for r in payload["references"]],
            config=MonitorConfig(
                allowance=float(payload["config"]["allowance"]),
                top_r=int(payload["config"]["top_r"]),
                stream_count=int(payload["config"]["stream_count"]),
                threshold=float(payload["config"]["threshold"]),
            ),
            target_arl0=float(payload["target_arl0"]),
            patience=int(payload["patience"]),
            window=int(payload["window"]),
            karcher_base=np.asarray(payload["karcher_base"], dtype=float),
            classifier=classifier,
            feature_mode=payload["feature_mode"],
            trace_features=bool(payload["trace_features"]),
            metric=payload["metric"],
            training_summary=payload.get("training_summary", {}),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptBundleError(f"bundle payload is malformed: {exc}") from exc
