"""End-to-end orchestration: offline training, online monitoring, evaluation.

Offline training fits standardization on in-control data, calibrates the
alarm threshold for the operator's target ARL0, replays the labeled fault
runs through the detector to learn the classification timing, extracts a
covariance per run from a trailing window at the classification point,
maps the covariances into the tangent space at their geometric mean, and
trains a one-vs-one SVM on the flattened features. Online monitoring
replays that recipe one sample at a time with episode resets.

Timing conventions (all indices 0-based):
    onset     first faulty sample of a run
    t_a       first alarm at or after the onset
    patience  extra samples observed after the alarm before classifying
    t_c       classification point, ``t_a + patience``
    window    trailing window ``[t_c - window + 1, t_c]`` for covariance

The window length is learned in training as ``mean(t_a - onset) +
patience`` rounded, floored at 2, so windows straddle the onset on a
typical run.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace
from typing import Iterable, Iterator

import numpy as np

from . import calibrate, detector, spd, standardize, svm
from .bundle import FEATURE_MODES, ModelBundle
from .errors import (
    BracketError,
    CalibrationFailedError,
    DomainError,
    EmptyInputError,
    LabelMismatchError,
    NoAlarmInTrainingError,
    NoConvergenceError,
)
from .features import trace_features
from .simulate import Run
from .spd import METRIC_AFFINE, METRIC_LOG_EUCLIDEAN

__all__ = [
    "TrainConfig",
    "MonitorEvent",
    "EvalReport",
    "SweepPoint",
    "offline_train",
    "online_monitor",
    "evaluate",
    "sweep_patience",
]

# Cap on runs advanced in lockstep per detector call, to bound memory.
_DETECT_CHUNK = 40


@dataclass(frozen=True)
class TrainConfig:
    """Operator-facing knobs for offline training.

    Attributes:
        allowance: CUSUM allowance k.
        top_r: Streams pooled into the global statistic.
        target_arl0: Desired in-control average run length.
        patience: Samples to wait after an alarm before classifying.
        feature_mode: ``tangent`` or ``raw`` covariance features.
        trace_features: Append V(t) summary features.
        metric: Manifold metric for tangent features.
        folds: Cross-validation folds for the hyper-parameter search.
        c_grid, gamma_grid: Optional explicit hyper-parameter grids.
        calibration_replications: Monte-Carlo budget for the threshold.
        calibration_tolerance: Relative ARL tolerance for the search.
        calibration_cap: Samples per calibration run before censoring.
        threshold_override: Skip calibration and install this threshold.
        reference_fraction: When no calibration source is supplied, the
            fraction of the in-control pool used for references; the rest
            feeds the bootstrap calibration source.
        seed: Seed for fold assignment and the bootstrap source.
    """

    allowance: float = 1.3
    top_r: int = 4
    target_arl0: float = 200.0
    patience: int = 300
    feature_mode: str = "tangent"
    trace_features: bool = False
    metric: str = METRIC_AFFINE
    folds: int = 5
    c_grid: tuple[float, ...] | None = None
    gamma_grid: tuple[float, ...] | None = None
    calibration_replications: int = 400
    calibration_tolerance: float = 0.02
    calibration_cap: int | None = None
    threshold_override: float | None = None
    reference_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.feature_mode not in FEATURE_MODES:
            raise DomainError(
                f"feature_mode must be one of {FEATURE_MODES}, got {self.feature_mode!r}"
            )
        if self.metric not in (METRIC_AFFINE, METRIC_LOG_EUCLIDEAN):
            raise DomainError(f"unknown metric {self.metric!r}")
        if self.patience < 0:
            raise DomainError(f"patience must be >= 0, got {self.patience}")
        if not 0.0 < self.reference_fraction < 1.0:
            raise DomainError(
                f"reference_fraction must be in (0, 1), got {self.reference_fraction}"
            )


@dataclass(frozen=True)
class MonitorEvent:
    """One event from the online monitoring stream.

    ``kind`` is ``sample`` (every consumed sample), ``alarm_raised``
    (first crossing of an episode), ``classification`` (patience elapsed;
    carries ``predicted_fault`` or an ``error`` reason), or
    ``episode_incomplete`` (input ended after an alarm but before its
    classification). ``time_index`` counts samples globally from 0.
    """

    kind: str
    time_index: int
    global_stat: float
    predicted_fault: int | None = None
    error: str | None = None


@dataclass
class _DetectedRun:
    run: Run
    v_trace: np.ndarray
    alarm_time: int | None

    @property
    def delay(self) -> int | None:
        if self.alarm_time is None or self.run.onset is None:
            return None
        return self.alarm_time - self.run.onset


def _detect_runs(runs, references, config, stats) -> list[_DetectedRun]:
    """V trace and first post-onset alarm for each run, batched."""
    detected: list[_DetectedRun] = []
    by_length: dict[int, list[int]] = {}
    for idx, run in enumerate(runs):
        by_length.setdefault(run.data.shape[0], []).append(idx)
    traces: dict[int, np.ndarray] = {}
    for indices in by_length.values():
        for lo in range(0, len(indices), _DETECT_CHUNK):
            chunk = indices[lo : lo + _DETECT_CHUNK]
            block = np.stack(
                [standardize.apply(runs[i].data, stats) for i in chunk]
            )
            v_block = detector.run_many(references, config, block)
            for row, i in enumerate(chunk):
                traces[i] = v_block[row]
    for idx, run in enumerate(runs):
        v = traces[idx]
        start = run.onset if run.onset is not None else 0
        hits = np.flatnonzero(v[start:] >= config.threshold)
        alarm_time = int(start + hits[0]) if hits.size else None
        detected.append(_DetectedRun(run=run, v_trace=v, alarm_time=alarm_time))
    return detected


def _window_length(delays, patience: int) -> int:
    return max(2, int(round(float(np.mean(delays)) + patience)))


def _episode_feature_vector(
    z: np.ndarray,
    v: np.ndarray,
    t_c: int,
    window: int,
    karcher_base: np.ndarray | None,
    feature_mode: str,
    use_trace: bool,
    metric: str,
):
    """Feature vector at classification point t_c, or (None, reason)."""
    if t_c >= z.shape[0]:
        return None, "run_ends_before_classification"
    start = t_c - window + 1
    if start < 0:
        return None, "window_before_run_start"
    cov = spd.covariance(z[start : t_c + 1])
    if feature_mode == "tangent":
        vec = spd.tangent_vectorize(spd.spd_log(karcher_base, cov, metric))
    else:
        vec = spd.tangent_vectorize(cov)
    if use_trace:
        vec = np.concatenate([vec, trace_features(v[: t_c + 1]).as_vector()])
    return vec, None


def _collect_covariances(detected, stats_applied, window: int, patience: int):
    """Windows and V traces for usable runs; returns covs, labels, drops."""
    covs = []
    labels = []
    kept = []
    dropped: dict[str, list[str]] = {}
    for item, z in zip(detected, stats_applied):
        run = item.run
        if item.alarm_time is None:
            dropped.setdefault("no_alarm", []).append(run.run_id)
            continue
        t_c = item.alarm_time + patience
        if t_c >= z.shape[0]:
            dropped.setdefault("run_ends_before_classification", []).append(run.run_id)
            continue
        start = t_c - window + 1
        if start < 0:
            dropped.setdefault("window_before_run_start", []).append(run.run_id)
            continue
        covs.append(spd.covariance(z[start : t_c + 1]))
        labels.append(run.fault_id)
        kept.append((item, z, t_c))
    return covs, np.asarray(labels, dtype=int), kept, dropped


def _check_class_coverage(labels, all_fault_ids, dropped):
    counts = {fid: int(np.sum(labels == fid)) for fid in all_fault_ids}
    flat_dropped = [rid for ids in dropped.values() for rid in ids]
    for fid, count in counts.items():
        if count < 2:
            raise NoAlarmInTrainingError(fid, flat_dropped)
    return counts


def offline_train(
    in_control,
    train_runs: list[Run],
    config: TrainConfig = TrainConfig(),
    *,
    calibration_source: calibrate.SampleSource | None = None,
) -> ModelBundle:
    """Train a complete monitoring model.

    Args:
        in_control: Raw-scale in-control matrix ``(n, p)``.
        train_runs: Labeled faulty runs (every run must carry a non-zero
            fault id).
        config: Training knobs.
        calibration_source: Optional raw-scale sample source for threshold
            calibration. Without one, part of the in-control pool is held
            out and resampled (bootstrap), which is safe but slightly
            optimistic about tail behavior.

    Raises:
        CalibrationFailedError: Threshold search failed.
        NoAlarmInTrainingError: Some fault class kept fewer than 2 runs.
        LabelMismatchError: A training run has no fault label.
    """
    pool = np.asarray(in_control, dtype=float)
    if not train_runs:
        raise EmptyInputError("no training runs")
    for run in train_runs:
        if run.fault_id == 0:
            raise LabelMismatchError(
                f"training run {run.run_id!r} carries no fault label"
            )

    if calibration_source is not None:
        stats = standardize.fit_reference(pool)
        z_pool = standardize.apply(pool, stats)
        references = [z_pool[:, i] for i in range(z_pool.shape[1])]
        cal_source = calibrate.standardized_source(calibration_source, stats)
    else:
        split = max(2, int(round(config.reference_fraction * pool.shape[0])))
        if pool.shape[0] - split < 1:
            raise EmptyInputError(
                "in-control pool too small to hold out a calibration part; "
                "supply a calibration_source instead"
            )
        stats = standardize.fit_reference(pool)
        z_pool = standardize.apply(pool, stats)
        references = [z_pool[:split, i] for i in range(z_pool.shape[1])]
        cal_source = calibrate.bootstrap_source(z_pool[split:], config.seed)

    base_config = detector.MonitorConfig(
        allowance=config.allowance,
        top_r=config.top_r,
        stream_count=stats.stream_count,
    )
    if config.threshold_override is not None:
        threshold = float(config.threshold_override)
        calibration_summary = {"threshold": threshold, "source": "override"}
    else:
        spec = calibrate.CalibrationSpec(
            target_arl0=config.target_arl0,
            replications=config.calibration_replications,
            max_run_length=config.calibration_cap,
            tolerance=config.calibration_tolerance,
        )
        try:
            result = calibrate.find_threshold(references, base_config, cal_source, spec)
        except (BracketError, NoConvergenceError) as exc:
            raise CalibrationFailedError(f"threshold calibration failed: {exc}") from exc
        threshold = result.threshold
        calibration_summary = result.to_dict()
    run_config = base_config.with_threshold(threshold)

    z_runs = [standardize.apply(run.data, stats) for run in train_runs]
    detected = _detect_runs(train_runs, references, run_config, stats)
    delays = [d.delay for d in detected if d.delay is not None]
    if not delays:
        raise NoAlarmInTrainingError(
            train_runs[0].fault_id, [r.run_id for r in train_runs]
        )
    window = _window_length(delays, config.patience)

    covs, labels, kept, dropped = _collect_covariances(
        detected, z_runs, window, config.patience
    )
    fault_ids = sorted({run.fault_id for run in train_runs})
    class_counts = _check_class_coverage(labels, fault_ids, dropped)

    if config.feature_mode == "tangent":
        karcher_base = spd.karcher_mean(covs, config.metric)
    else:
        karcher_base = np.eye(stats.stream_count)
    vectors = []
    for cov, (item, z, t_c) in zip(covs, kept):
        vec, reason = _episode_feature_vector(
            z,
            item.v_trace,
            t_c,
            window,
            karcher_base,
            config.feature_mode,
            config.trace_features,
            config.metric,
        )
        assert reason is None  # kept runs already passed the window checks
        vectors.append(vec)
    feature_matrix = np.vstack(vectors)

    folds = min(config.folds, min(class_counts.values()))
    search = svm.grid_search(
        feature_matrix,
        labels,
        config.c_grid,
        config.gamma_grid,
        folds=folds,
        seed=config.seed,
    )
    classifier = svm.train_multiclass(
        feature_matrix, labels, search.c_penalty, search.gamma
    )

    summary = {
        "calibration": calibration_summary,
        "window": window,
        "mean_detection_delay": float(np.mean(delays)),
        "dropped_runs": {reason: ids for reason, ids in dropped.items()},
        "usable_runs_per_class": class_counts,
        "cv_accuracy": search.cv_accuracy,
        "c_penalty": search.c_penalty,
        "gamma": search.gamma,
    }
    return ModelBundle(
        stats=stats,
        references=[np.sort(np.asarray(r, dtype=float)) for r in references],
        config=run_config,
        target_arl0=config.target_arl0,
        patience=config.patience,
        window=window,
        karcher_base=karcher_base,
        classifier=classifier,
        feature_mode=config.feature_mode,
        trace_features=config.trace_features,
        metric=config.metric,
        training_summary=summary,
    )


def online_monitor(bundle: ModelBundle, samples: Iterable) -> Iterator[MonitorEvent]:
    """Monitor a live sample stream, yielding events as they happen.

    Every sample yields a ``sample`` event. The first threshold crossing
    of an episode yields ``alarm_raised``; ``patience`` samples later a
    ``classification`` event carries the predicted fault id, after which
    the detector resets and a new episode begins. The standardized sample
    buffer survives resets so classification windows may span episodes,
    but the V(t) trace (used by trace features) restarts with each
    episode. If the stream ends between an alarm and its classification,
    a final ``episode_incomplete`` event is emitted.

    Args:
        bundle: Trained model bundle.
        samples: Iterable of raw-scale samples of shape ``(p,)`` (a
            ``(T, p)`` array works; it iterates by rows).

    Yields:
        :class:`MonitorEvent` in time order.
    """
    monitor = detector.Monitor(bundle.references, bundle.config)
    window_buffer: deque = deque(maxlen=bundle.window)
    v_episode: list[float] = []
    alarm_at: int | None = None
    time_index = -1
    last_stat = 0.0
    for time_index, sample in enumerate(samples):
        z = standardize.apply(np.asarray(sample, dtype=float), bundle.stats)
        out = monitor.step(z)
        window_buffer.append(z)
        v_episode.append(out.global_stat)
        last_stat = out.global_stat
        yield MonitorEvent("sample", time_index, out.global_stat)
        if alarm_at is None and out.alarm:
            alarm_at = time_index
            yield MonitorEvent("alarm_raised", time_index, out.global_stat)
        if alarm_at is not None and time_index == alarm_at + bundle.patience:
            predicted, error = _classify_buffer(bundle, window_buffer, v_episode)
            yield MonitorEvent(
                "classification",
                time_index,
                out.global_stat,
                predicted_fault=predicted,
                error=error,
            )
            monitor.reset()
            alarm_at = None
            v_episode = []
    if alarm_at is not None:
        yield MonitorEvent("episode_incomplete", time_index, last_stat)


def _classify_buffer(bundle: ModelBundle, window_buffer, v_episode):
    if len(window_buffer) < bundle.window:
        return None, "window_too_short"
    if bundle.trace_features and len(v_episode) < 3:
        return None, "trace_too_short"
    cov = spd.covariance(np.asarray(window_buffer))
    if bundle.feature_mode == "tangent":
        vec = spd.tangent_vectorize(
            spd.spd_log(bundle.karcher_base, cov, bundle.metric)
        )
    else:
        vec = spd.tangent_vectorize(cov)
    if bundle.trace_features:
        vec = np.concatenate(
            [vec, trace_features(np.asarray(v_episode)).as_vector()]
        )
    return int(bundle.classifier.predict(vec)), None


@dataclass
class EvalReport:
    """Detection and classification quality over a labeled corpus.

    ``fdr_per_fault`` counts alarm-state samples after onset (the
    non-resetting detector's per-sample state), pooled over that fault's
    runs. ``fds_per_fault`` is the mean delay from onset to first alarm
    over detected runs. ``far`` counts above-threshold samples among
    in-control samples (held-out in-control runs plus pre-onset
    segments). ``overall_accuracy`` is over classified runs only;
    denominators for everything are included.
    """

    class_labels: list[int]
    detection_rate: dict[int, float]
    fdr_per_fault: dict[int, float]
    fds_per_fault: dict[int, float]
    undetected: dict[int, int]
    total_runs: dict[int, int]
    far: float
    in_control_samples: int
    confusion_matrix: np.ndarray
    overall_accuracy: float
    classified: int
    unclassified: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "class_labels": list(self.class_labels),
            "detection_rate": {str(k): v for k, v in self.detection_rate.items()},
            "fdr_per_fault": {str(k): v for k, v in self.fdr_per_fault.items()},
            "fds_per_fault": {str(k): v for k, v in self.fds_per_fault.items()},
            "undetected": {str(k): v for k, v in self.undetected.items()},
            "total_runs": {str(k): v for k, v in self.total_runs.items()},
            "far": self.far,
            "in_control_samples": self.in_control_samples,
            "confusion_matrix": self.confusion_matrix.tolist(),
            "overall_accuracy": self.overall_accuracy,
            "classified": self.classified,
            "unclassified": dict(self.unclassified),
        }


def evaluate(bundle: ModelBundle, runs: list[Run]) -> EvalReport:
    """Replay labeled runs through a trained bundle and score it.

    Faulty runs are scored for detection (any alarm at or after onset),
    detection delay, and classification at ``t_a + patience`` using the
    bundle's learned window. In-control runs and pre-onset segments feed
    the false-alarm rate.
    """
    if not runs:
        raise EmptyInputError("no runs to evaluate")
    detected = _detect_runs(runs, bundle.references, bundle.config, bundle.stats)
    labels_present = sorted(
        {run.fault_id for run in runs if run.fault_id != 0}
    )
    class_labels = [int(c) for c in bundle.classifier.class_labels]
    label_index = {c: i for i, c in enumerate(class_labels)}
    confusion = np.zeros((len(class_labels), len(class_labels)), dtype=int)
    per_class_total = {fid: 0 for fid in labels_present}
    per_class_detected = {fid: 0 for fid in labels_present}
    per_class_delays = {fid: [] for fid in labels_present}
    per_class_tp = {fid: 0 for fid in labels_present}
    per_class_post = {fid: 0 for fid in labels_present}
    unclassified: dict[str, int] = {}
    false_alarm_samples = 0
    in_control_samples = 0
    correct = 0
    classified = 0
    for item in detected:
        run = item.run
        v = item.v_trace
        onset = run.onset
        if onset is None:
            false_alarm_samples += int(np.sum(v >= bundle.config.threshold))
            in_control_samples += v.size
            continue
        false_alarm_samples += int(np.sum(v[:onset] >= bundle.config.threshold))
        in_control_samples += onset
        per_class_total[run.fault_id] += 1
        per_class_tp[run.fault_id] += int(np.sum(v[onset:] >= bundle.config.threshold))
        per_class_post[run.fault_id] += v.size - onset
        if item.alarm_time is None:
            continue
        per_class_detected[run.fault_id] += 1
        per_class_delays[run.fault_id].append(item.delay)
        z = standardize.apply(run.data, bundle.stats)
        t_c = item.alarm_time + bundle.patience
        vec, reason = _episode_feature_vector(
            z,
            v,
            t_c,
            bundle.window,
            bundle.karcher_base,
            bundle.feature_mode,
            bundle.trace_features,
            bundle.metric,
        )
        if vec is None:
            unclassified[reason] = unclassified.get(reason, 0) + 1
            continue
        predicted = int(bundle.classifier.predict(vec))
        classified += 1
        if run.fault_id in label_index:
            confusion[label_index[run.fault_id], label_index[predicted]] += 1
        if predicted == run.fault_id:
            correct += 1
    detection_rate = {
        fid: per_class_detected[fid] / per_class_total[fid]
        for fid in labels_present
        if per_class_total[fid]
    }
    fdr_per_fault = {
        fid: per_class_tp[fid] / per_class_post[fid]
        for fid in labels_present
        if per_class_post[fid]
    }
    fds_per_fault = {
        fid: float(np.mean(per_class_delays[fid]))
        for fid in labels_present
        if per_class_delays[fid]
    }
    undetected = {
        fid: per_class_total[fid] - per_class_detected[fid] for fid in labels_present
    }
    return EvalReport(
        class_labels=class_labels,
        detection_rate=detection_rate,
        fdr_per_fault=fdr_per_fault,
        fds_per_fault=fds_per_fault,
        undetected=undetected,
        total_runs=per_class_total,
        far=(
            false_alarm_samples / in_control_samples if in_control_samples else 0.0
        ),
        in_control_samples=in_control_samples,
        confusion_matrix=confusion,
        overall_accuracy=correct / classified if classified else 0.0,
        classified=classified,
        unclassified=unclassified,
    )


@dataclass(frozen=True)
class SweepPoint:
    """One patience setting's outcome."""

    patience: int
    window: int
    test_accuracy: float
    classified: int
    truncated: int


def sweep_patience(
    in_control,
    train_runs: list[Run],
    test_runs: list[Run],
    patience_grid,
    config: TrainConfig = TrainConfig(),
    *,
    calibration_source: calibrate.SampleSource | None = None,
) -> list[SweepPoint]:
    """Accuracy as a function of the patience parameter.

    Detection and threshold calibration run once; for each patience value
    the window, features, classifier, and test accuracy are rebuilt. Use
    this to pick the smallest patience whose accuracy is acceptable: more
    patience usually helps until windows saturate or runs end before the
    classification point.
    """
    grid = sorted(int(tp) for tp in patience_grid)
    if not grid:
        raise EmptyInputError("patience_grid is empty")
    if grid[0] < 0:
        raise DomainError("patience values must be >= 0")
    points = []
    # The threshold does not depend on patience: calibrate once on the
    # first fit and reuse it as an override afterwards.
    threshold_override = config.threshold_override
    for patience in grid:
        cfg = replace(
            config, patience=patience, threshold_override=threshold_override
        )
        bundle = offline_train(
            in_control, train_runs, cfg, calibration_source=calibration_source
        )
        threshold_override = bundle.config.threshold
        report = evaluate(bundle, test_runs)
        truncated = sum(report.unclassified.values())
        points.append(
            SweepPoint(
                patience=patience,
                window=bundle.window,
                test_accuracy=report.overall_accuracy,
                classified=report.classified,
                truncated=truncated,
            )
        )
    return points
