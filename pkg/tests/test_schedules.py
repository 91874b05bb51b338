import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose

from mollikit.schedules import (MollificationSchedule, ScheduleKind, alpha_sigma, blur_times,
                                gamma, raw_gamma, snr)

KINDS = [MollificationSchedule(kind=k) for k in ScheduleKind]
GRID = np.linspace(0.0, 1.0, 10_000)

# frozen from a 40-digit mpmath evaluation of the same formulas
SIGMOID_HALF = 0.18795092433133392546
COSINE_END = 6.1654196428435636529e-9


def test_sigmoid_endpoints_exact():
    s = MollificationSchedule()
    assert gamma(s, 0.0) == 1.0
    assert gamma(s, 1.0) == 0.0


def test_sigmoid_midpoint_regression():
    assert_allclose(gamma(MollificationSchedule(), 0.5), SIGMOID_HALF, rtol=1e-14)


def test_linear_values():
    s = MollificationSchedule(kind="linear")
    assert gamma(s, 0.25) == 0.75
    assert gamma(s, 0.0) == 1.0 and gamma(s, 1.0) == 0.0


def test_cosine_end_is_tiny_but_not_zero():
    s = MollificationSchedule(kind="cosine")
    assert_allclose(raw_gamma(s, 1.0), COSINE_END, rtol=1e-9)
    assert 0 < gamma(s, 1.0) < 1e-8


def test_clip_min_zeroes_residual_variance():
    s = MollificationSchedule(kind="cosine", clip_min=1e-8)
    assert gamma(s, 1.0) == 0.0
    assert alpha_sigma(s, 1.0) == (1.0, 0.0)


@pytest.mark.parametrize("r", [-1e-12, 1.0000001, math.nan])
def test_out_of_range_r_rejected(r):
    with pytest.raises(ValueError):
        gamma(MollificationSchedule(), r)


def test_invalid_parameters_rejected():
    with pytest.raises(ValueError):
        MollificationSchedule(tau=0.0)
    with pytest.raises(ValueError):
        MollificationSchedule(kind="quadratic")


@pytest.mark.parametrize("s", KINDS, ids=lambda s: s.kind.value)
def test_monotone_on_dense_grid(s):
    g = np.array([gamma(s, float(r)) for r in GRID])
    assert np.all(np.diff(g) <= 0.0)
    assert np.all((g >= 0) & (g <= 1))


@pytest.mark.parametrize("s", KINDS, ids=lambda s: s.kind.value)
def test_snr_monotone_on_dense_grid(s):
    v = np.array([snr(s, float(r)) for r in GRID])
    assert np.all(np.diff(v) >= 0.0)


@pytest.mark.parametrize("s", KINDS, ids=lambda s: s.kind.value)
def test_variance_preserving_on_dense_grid(s):
    for r in GRID[::7]:
        a, sg = alpha_sigma(s, float(r))
        assert a >= 0 and sg >= 0
        assert abs(a * a + sg * sg - 1.0) <= 4e-16


@given(st.floats(0.0, 1.0), st.floats(0.05, 5.0))
def test_variance_preserving_property(r, tau):
    a, s = alpha_sigma(MollificationSchedule(tau=tau), r)
    assert abs(a * a + s * s - 1.0) <= 4e-16


def test_alpha_sigma_endpoints():
    s = MollificationSchedule()
    assert alpha_sigma(s, 0.0) == (0.0, 1.0)
    assert alpha_sigma(s, 1.0) == (1.0, 0.0)


def test_snr_values():
    lin = MollificationSchedule(kind="linear")
    assert snr(lin, 0.5) == 1.0
    assert snr(lin, 1.0) == math.inf
    assert snr(lin, 0.0) == 0.0


def test_blur_times_endpoints():
    t = blur_times(16.0, 10)
    assert len(t) == 11
    assert t[0] == 128.0 and t[-1] == 0.125
    assert np.all(np.diff(t) < 0)
    assert list(blur_times(3.0, 1)) == [4.5, 0.125]


def test_blur_times_geometric():
    t = blur_times(8.0, 4)
    ratios = t[:-1] / t[1:]
    assert_allclose(ratios, ratios[0], rtol=1e-12)


def test_blur_times_errors():
    with pytest.raises(ValueError):
        blur_times(0.5, 3)
    with pytest.raises(ValueError):
        blur_times(4.0, 0)
