import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faultmon import features
from faultmon.errors import NonFiniteValueError, TraceTooShortError


def test_constant_trace():
    f = features.trace_features([5.0, 5.0, 5.0])
    assert f.mean == 5.0
    assert f.stddev == 0.0
    assert f.median == 5.0
    assert f.variance == 0.0
    assert f.value_range == 0.0
    assert f.max_value == 5.0
    assert f.peak_count == 0
    assert f.auc == 10.0


def test_single_triangle():
    f = features.trace_features([0.0, 1.0, 0.0])
    assert f.peak_count == 1
    assert f.max_value == 1.0
    assert f.mean == pytest.approx(1.0 / 3.0)
    assert f.auc == pytest.approx(1.0)
    assert f.median == 0.0
    assert f.variance == pytest.approx(2.0 / 9.0)


def test_population_moments():
    rng = np.random.default_rng(30)
    trace = rng.normal(size=200)
    f = features.trace_features(trace)
    assert f.mean == pytest.approx(trace.mean())
    assert f.variance == pytest.approx(trace.var())
    assert f.stddev == pytest.approx(trace.std())
    assert f.median == pytest.approx(np.median(trace))
    assert f.value_range == pytest.approx(trace.max() - trace.min())
    assert f.auc == pytest.approx(np.trapezoid(trace))


def test_peaks_are_strict_interior_maxima():
    assert features.trace_features([0, 1, 1, 0]).peak_count == 0  # plateau
    assert features.trace_features([0, 2, 0, 3, 0]).peak_count == 2
    assert features.trace_features([3, 1, 2]).peak_count == 0  # endpoints excluded


def test_vector_order_matches_names():
    f = features.trace_features([0.0, 1.0, 0.0, 2.0])
    vec = f.as_vector()
    assert vec.shape == (len(features.FEATURE_NAMES),)
    for name, value in zip(features.FEATURE_NAMES, vec):
        assert getattr(f, name) == value


def test_too_short_and_non_finite():
    with pytest.raises(TraceTooShortError):
        features.trace_features([1.0, 2.0])
    with pytest.raises(NonFiniteValueError):
        features.trace_features([1.0, np.nan, 2.0])


# Integer-valued floats keep every sum exact, so equivariance holds with
# tight tolerances and the peak count cannot be perturbed by rounding.
@given(
    st.lists(st.integers(min_value=-10**6, max_value=10**6), min_size=3, max_size=50),
    st.integers(min_value=-10**6, max_value=10**6),
)
@settings(max_examples=100, deadline=None)
def test_shift_equivariance(int_values, int_shift):
    values = [float(v) for v in int_values]
    shift = float(int_shift)
    base = features.trace_features(values)
    shifted = features.trace_features([v + shift for v in values])
    assert shifted.mean == pytest.approx(base.mean + shift, rel=1e-12, abs=1e-9)
    assert shifted.median == base.median + shift
    assert shifted.max_value == base.max_value + shift
    assert shifted.auc == pytest.approx(
        base.auc + shift * (len(values) - 1), rel=1e-12, abs=1e-6
    )
    # Dispersion and shape features are shift-invariant.
    assert shifted.stddev == pytest.approx(base.stddev, rel=1e-6, abs=1e-6)
    assert shifted.variance == pytest.approx(base.variance, rel=1e-6, abs=1e-6)
    assert shifted.value_range == base.value_range
    assert shifted.peak_count == base.peak_count
