"""Nonparametric CUSUM detection over standardized sensor streams.

Each stream keeps a sorted in-control reference sample. Every incoming
value is ranked against its reference and the rank is smoothed into an
empirical CDF estimate ``(c + 1) / (s + 2)``, where ``c`` counts reference
values strictly below the observation and ``s`` is the reference size. The
negative logs of that estimate and of its complement drive a pair of
one-sided CUSUM statistics per stream:

    W+ <- max(W+ - log(1 - mu) - k, 0)      (upward shifts)
    W- <- max(W- - log(mu) - k, 0)          (downward shifts)

where ``k`` is the allowance that drains the statistics while in control.
The monitor-wide statistic V is the sum of the r largest two-sided stream
statistics; an alarm is raised when V reaches the threshold.

All floating-point arithmetic here uses numpy scalars/ufuncs so that the
streaming path, the single-run batch path, and the many-runs lockstep path
produce bit-identical results.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadRError,
    DimensionMismatchError,
    DomainError,
    EmptyInputError,
    NonFiniteValueError,
)

__all__ = [
    "build_reference",
    "estimate_cdf",
    "LocalState",
    "update_local",
    "two_sided",
    "global_statistic",
    "MonitorConfig",
    "MonitorOutput",
    "MonitorTrace",
    "Monitor",
    "run_many",
]


def build_reference(history) -> np.ndarray:
    """Sort an in-control history into a reference sample.

    Duplicates are kept; ties simply weight the empirical CDF.

    Args:
        history: 1-D array of in-control values for one stream.

    Returns:
        Ascending float64 copy of ``history``.
    """
    arr = np.asarray(history, dtype=float)
    if arr.ndim != 1:
        raise DimensionMismatchError(
            f"reference history must be 1-D, got ndim={arr.ndim}"
        )
    if arr.size == 0:
        raise EmptyInputError("reference history is empty")
    if not np.isfinite(arr).all():
        raise NonFiniteValueError("reference history contains NaN or infinity")
    return np.sort(arr)


def estimate_cdf(reference: np.ndarray, value: float) -> float:
    """Smoothed empirical CDF of ``value`` under a sorted reference.

    Returns ``(c + 1) / (s + 2)`` with ``c`` the count of reference entries
    strictly below ``value``. The result is always inside (0, 1), so its
    logs below are finite even for values outside the reference range.
    """
    ref = np.asarray(reference, dtype=float)
    if not math.isfinite(value):
        raise NonFiniteValueError("value must be finite")
    count = np.searchsorted(ref, value, side="left")
    return float((count + 1.0) / (ref.size + 2.0))


@dataclass(frozen=True)
class LocalState:
    """One stream's pair of one-sided CUSUM statistics."""

    w_plus: float = 0.0
    w_minus: float = 0.0

    def __post_init__(self):
        if self.w_plus < 0.0 or self.w_minus < 0.0:
            raise DomainError("CUSUM statistics cannot be negative")


def update_local(state: LocalState, mu_hat: float, allowance: float) -> LocalState:
    """Advance one stream's statistics by a single CDF estimate.

    Args:
        state: Current statistics.
        mu_hat: Smoothed empirical CDF estimate, strictly inside (0, 1).
        allowance: Drift allowance k, strictly positive.

    Returns:
        Updated :class:`LocalState`, both components clamped at zero.
    """
    if not 0.0 < mu_hat < 1.0:
        raise DomainError(f"mu_hat must lie in (0, 1), got {mu_hat}")
    if not allowance > 0.0:
        raise DomainError(f"allowance must be positive, got {allowance}")
    w_plus = max(float(state.w_plus - np.log(1.0 - mu_hat) - allowance), 0.0)
    w_minus = max(float(state.w_minus - np.log(mu_hat) - allowance), 0.0)
    return LocalState(w_plus=w_plus, w_minus=w_minus)


def two_sided(state: LocalState) -> float:
    """Two-sided statistic for one stream: max of the one-sided pair."""
    return max(state.w_plus, state.w_minus)


def _top_r_sum(two_sided_stats: np.ndarray, top_r: int) -> np.ndarray:
    """Sum of the r largest entries along the last axis.

    The selected entries are summed in ascending order so that the result
    does not depend on which code path produced them.
    """
    p = two_sided_stats.shape[-1]
    selected = np.partition(two_sided_stats, p - top_r, axis=-1)[..., p - top_r:]
    return np.sort(selected, axis=-1).sum(axis=-1)


def global_statistic(local_stats, top_r: int) -> float:
    """Sum of the r largest two-sided stream statistics.

    Args:
        local_stats: Sequence of :class:`LocalState` or an array of
            two-sided statistics, length p.
        top_r: How many streams to pool, ``1 <= top_r <= p``.
    """
    if isinstance(local_stats, np.ndarray):
        stats = np.asarray(local_stats, dtype=float)
    else:
        items = list(local_stats)
        if items and isinstance(items[0], LocalState):
            stats = np.array([two_sided(s) for s in items], dtype=float)
        else:
            stats = np.asarray(items, dtype=float)
    if stats.ndim != 1 or stats.size == 0:
        raise EmptyInputError("local_stats must be a non-empty 1-D collection")
    if not 1 <= top_r <= stats.size:
        raise BadRError(
            f"top_r must be in 1..{stats.size}, got {top_r}"
        )
    return float(_top_r_sum(stats, top_r))


@dataclass(frozen=True)
class MonitorConfig:
    """Detection parameters shared by every code path.

    Attributes:
        allowance: CUSUM allowance k (> 0).
        top_r: Number of streams pooled into the global statistic.
        stream_count: Number of monitored streams p.
        threshold: Alarm threshold H; ``inf`` disables alarms until a
            calibrated value is installed.
    """

    allowance: float
    top_r: int
    stream_count: int
    threshold: float = math.inf

    def __post_init__(self):
        if not self.allowance > 0.0:
            raise DomainError(f"allowance must be positive, got {self.allowance}")
        if self.stream_count < 1:
            raise DimensionMismatchError("stream_count must be at least 1")
        if not 1 <= self.top_r <= self.stream_count:
            raise BadRError(
                f"top_r must be in 1..{self.stream_count}, got {self.top_r}"
            )
        if math.isnan(self.threshold) or self.threshold < 0.0:
            raise DomainError(f"threshold must be >= 0, got {self.threshold}")

    def with_threshold(self, threshold: float) -> "MonitorConfig":
        return dataclasses.replace(self, threshold=threshold)


@dataclass(frozen=True)
class MonitorOutput:
    """Result of consuming one sample."""

    time_index: int
    global_stat: float
    alarm: bool
    local_stats: np.ndarray


@dataclass(frozen=True)
class MonitorTrace:
    """Result of consuming a batch of samples."""

    global_stats: np.ndarray
    alarms: np.ndarray

    @property
    def first_alarm(self) -> int | None:
        hits = np.flatnonzero(self.alarms)
        return int(hits[0]) if hits.size else None


def _validate_references(references, stream_count: int) -> list[np.ndarray]:
    if len(references) != stream_count:
        raise DimensionMismatchError(
            f"got {len(references)} references for {stream_count} streams"
        )
    return [build_reference(ref) for ref in references]


def _cdf_estimates(references, sizes: np.ndarray, samples: np.ndarray) -> np.ndarray:
    """Smoothed empirical CDF values for samples of shape ``(..., p)``."""
    counts = np.empty(samples.shape, dtype=float)
    for i, ref in enumerate(references):
        column = samples[..., i]
        counts[..., i] = np.searchsorted(ref, column.ravel(), side="left").reshape(
            column.shape
        )
    return (counts + 1.0) / (sizes + 2.0)


def _run_recursion(
    mu: np.ndarray,
    allowance: float,
    top_r: int,
    w_plus: np.ndarray,
    w_minus: np.ndarray,
):
    """Drive the CUSUM recursion over the time axis.

    Args:
        mu: CDF estimates, shape ``(..., T, p)``.
        w_plus, w_minus: Entry state, shape ``(..., p)``; not modified.

    Returns:
        ``(v, w_plus, w_minus)`` with ``v`` of shape ``(..., T)`` and the
        exit states.
    """
    log_hi = np.log(1.0 - mu)
    log_lo = np.log(mu)
    steps = mu.shape[-2]
    v = np.empty(mu.shape[:-1], dtype=float)
    for t in range(steps):
        w_plus = np.maximum(w_plus - log_hi[..., t, :] - allowance, 0.0)
        w_minus = np.maximum(w_minus - log_lo[..., t, :] - allowance, 0.0)
        v[..., t] = _top_r_sum(np.maximum(w_plus, w_minus), top_r)
    return v, w_plus, w_minus


class Monitor:
    """Streaming detector over p standardized streams.

    A monitor owns sorted references, the per-stream CUSUM state, and a
    sample counter. ``step`` consumes one sample; ``run`` consumes a batch
    and is bit-identical to the equivalent sequence of ``step`` calls.

    Time indices are 0-based: the first sample consumed after construction
    (or :meth:`reset`) has ``time_index == 0``.
    """

    def __init__(self, references, config: MonitorConfig):
        self.config = config
        self._references = _validate_references(references, config.stream_count)
        self._sizes = np.array([ref.size for ref in self._references], dtype=float)
        self._w_plus = np.zeros(config.stream_count)
        self._w_minus = np.zeros(config.stream_count)
        self._time = 0

    @property
    def references(self) -> list[np.ndarray]:
        return [ref.copy() for ref in self._references]

    @property
    def time_index(self) -> int:
        """Index the next sample will get."""
        return self._time

    @property
    def local_stats(self) -> np.ndarray:
        """Current two-sided statistic per stream."""
        return np.maximum(self._w_plus, self._w_minus)

    def set_threshold(self, threshold: float) -> None:
        self.config = self.config.with_threshold(threshold)

    def reset(self) -> None:
        """Zero the CUSUM state and the sample counter."""
        self._w_plus = np.zeros(self.config.stream_count)
        self._w_minus = np.zeros(self.config.stream_count)
        self._time = 0

    def _check_batch(self, samples) -> np.ndarray:
        arr = np.asarray(samples, dtype=float)
        if arr.shape[-1] != self.config.stream_count:
            raise DimensionMismatchError(
                f"expected {self.config.stream_count} streams, got shape {arr.shape}"
            )
        if not np.isfinite(arr).all():
            raise NonFiniteValueError("samples contain NaN or infinity")
        return arr

    def step(self, sample) -> MonitorOutput:
        """Consume one standardized sample of shape ``(p,)``."""
        arr = self._check_batch(sample)
        if arr.ndim != 1:
            raise DimensionMismatchError(
                f"step expects a single sample of shape ({self.config.stream_count},)"
            )
        mu = _cdf_estimates(self._references, self._sizes, arr)
        k = self.config.allowance
        self._w_plus = np.maximum(self._w_plus - np.log(1.0 - mu) - k, 0.0)
        self._w_minus = np.maximum(self._w_minus - np.log(mu) - k, 0.0)
        two = np.maximum(self._w_plus, self._w_minus)
        v = float(_top_r_sum(two, self.config.top_r))
        out = MonitorOutput(
            time_index=self._time,
            global_stat=v,
            alarm=v >= self.config.threshold,
            local_stats=two,
        )
        self._time += 1
        return out

    def run(self, samples) -> MonitorTrace:
        """Consume a batch of shape ``(T, p)``; equivalent to T ``step`` calls."""
        arr = self._check_batch(samples)
        if arr.ndim != 2:
            raise DimensionMismatchError(
                f"run expects shape (T, {self.config.stream_count}), got {arr.shape}"
            )
        if arr.shape[0] == 0:
            raise EmptyInputError("empty sample batch")
        mu = _cdf_estimates(self._references, self._sizes, arr)
        v, self._w_plus, self._w_minus = _run_recursion(
            mu, self.config.allowance, self.config.top_r, self._w_plus, self._w_minus
        )
        self._time += arr.shape[0]
        return MonitorTrace(global_stats=v, alarms=v >= self.config.threshold)


def run_many(references, config: MonitorConfig, runs) -> np.ndarray:
    """Global-statistic traces for many runs advanced in lockstep.

    Args:
        references: In-control histories, one per stream.
        config: Detection parameters.
        runs: Array of shape ``(R, T, p)``; every run starts from zeroed
            state.

    Returns:
        V traces of shape ``(R, T)``, bit-identical to running each run
        through its own :class:`Monitor`.
    """
    refs = _validate_references(references, config.stream_count)
    sizes = np.array([ref.size for ref in refs], dtype=float)
    arr = np.asarray(runs, dtype=float)
    if arr.ndim != 3 or arr.shape[-1] != config.stream_count:
        raise DimensionMismatchError(
            f"run_many expects shape (R, T, {config.stream_count}), got {arr.shape}"
        )
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise EmptyInputError("empty run batch")
    if not np.isfinite(arr).all():
        raise NonFiniteValueError("samples contain NaN or infinity")
    mu = _cdf_estimates(refs, sizes, arr)
    w0 = np.zeros((arr.shape[0], config.stream_count))
    v, _, _ = _run_recursion(mu, config.allowance, config.top_r, w0, w0)
    return v
