from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from volterra_markov.errors import DomainError
from volterra_markov.special_functions import (
    Hyp2F1Params,
    gamma_fn,
    hyp2f1,
    hyp2f1_series,
    hyp2f1_transformed,
)

# mpmath.hyp2f1 at 30 digits
MPMATH_HYP = [
    ((0.25, 1.0, 1.75, 0.9), 1.27434050800405855495349370855),
    ((-0.25, 1.0, 2.25, 0.95), 0.849313802592775267310500625267),
    ((0.3, 0.7, 1.5, 0.5), 1.0925400611220526667155641881),
]


def test_gamma_values():
    assert gamma_fn(1.0) == 1.0
    assert gamma_fn(5.0) == pytest.approx(24.0, rel=1e-15)
    assert gamma_fn(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-15)


@pytest.mark.parametrize("x", [0.0, -1.0, math.nan])
def test_gamma_rejects_bad_input(x):
    with pytest.raises(DomainError):
        gamma_fn(x)


def test_hyp2f1_at_zero_is_one():
    assert hyp2f1(0.25, 1.0, 1.75, 0.0) == 1.0


def test_hyp2f1_gauss_value_at_one():
    H = 0.25
    assert hyp2f1(0.5 - H, 1.0, H + 1.5, 1.0) == pytest.approx(1.5, abs=1e-14)


def test_hyp2f1_log_identity():
    # 2F1(1, 1; 2; x) = -log(1 - x) / x
    assert hyp2f1(1.0, 1.0, 2.0, 0.5) == pytest.approx(2.0 * math.log(2.0), abs=1e-14)
    assert hyp2f1(1.0, 1.0, 2.0, 0.97) == pytest.approx(-math.log(0.03) / 0.97, abs=1e-12)


@pytest.mark.parametrize("args, expected", MPMATH_HYP)
def test_hyp2f1_matches_high_precision_reference(args, expected):
    assert hyp2f1(*args) == pytest.approx(expected, abs=1e-12)


def test_hyp2f1_accepts_params_object():
    p = Hyp2F1Params(1.0, 1.0, 2.0, 0.5)
    assert hyp2f1(p) == hyp2f1(1.0, 1.0, 2.0, 0.5)


@pytest.mark.parametrize("args", [(1.0, 1.0, 0.0, 0.5), (1.0, 1.0, -2.0, 0.5), (1.0, 1.0, 2.0, 1.5), (1.0, 1.0, 2.0, -0.1)])
def test_hyp2f1_domain_errors(args):
    with pytest.raises(DomainError):
        hyp2f1(*args)


def test_hyp2f1_divergent_gauss_value_rejected():
    # c - a - b <= 0 has no finite value at x = 1
    with pytest.raises(DomainError):
        hyp2f1(1.0, 1.0, 2.0, 1.0)


@settings(max_examples=60, deadline=None)
@given(
    H=st.floats(0.05, 1.0),
    x=st.floats(0.6, 0.8),
)
def test_series_and_transform_agree(H, x):
    a, b, c = 0.5 - H, 1.0, H + 1.5
    assert hyp2f1_series(a, b, c, x) == pytest.approx(hyp2f1_transformed(a, b, c, x), abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(H=st.floats(0.05, 0.45), x1=st.floats(0.0, 1.0), x2=st.floats(0.0, 1.0))
def test_monotone_in_x_for_small_H(H, x1, x2):
    lo, hi = sorted((x1, x2))
    f = lambda x: hyp2f1(0.5 - H, 1.0, H + 1.5, x)  # noqa: E731
    assert f(lo) <= f(hi) + 1e-13


@settings(max_examples=40, deadline=None)
@given(a=st.floats(-2.0, 2.0), b=st.floats(-2.0, 2.0), c=st.floats(0.3, 3.0))
def test_two_term_expansion_near_zero(a, b, c):
    x = 1e-6
    assert hyp2f1(a, b, c, x) == pytest.approx(1.0 + a * b / c * x, abs=1e-10)
