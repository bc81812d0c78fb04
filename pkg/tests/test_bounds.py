import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sgcsim.bounds import BoundInputs, HypothesisError, gradient_bound_sq, thm3_bound, thm4_bound
from sgcsim.numerics import incoherence_mu, least_squares_optimum


def l2_inputs(**kw):
    base = dict(T=20, p=0.2, n=20, m=50, epsilon=0.1, d=2.0, mu=0.1, residual_norm_sq=3.0,
                spectral_norm=10.0, beta0_err_sq=4.0)
    base.update(kw)
    return BoundInputs(**base)


def test_consistent_system_reduces_to_initial_term():
    b = l2_inputs(residual_norm_sq=0.0)
    assert thm3_bound(b) == 0.1**2 * 4.0


def test_doubling_T_halves_noise_term():
    b1, b2 = l2_inputs(T=20), l2_inputs(T=40)
    lead = 0.1**2 * 4.0
    assert thm3_bound(b2) - lead == pytest.approx((thm3_bound(b1) - lead) / 2, rel=1e-14)


def test_hand_worked_two_by_one_instance():
    # X = [1, 2]^T, y = [1, 1]: X^T X = 5, mu = (5/2)/5, beta* = 3/5, r = (-2/5, 1/5)
    X = np.array([[1.0], [2.0]])
    y = np.array([1.0, 1.0])
    s = incoherence_mu(X)
    beta = least_squares_optimum(X, y)
    r = X @ beta - y
    b = BoundInputs(T=10, p=0.5, n=8, m=2, epsilon=math.exp(-1), d=8 * s.mu, mu=s.mu,
                    residual_norm_sq=float(r @ r), spectral_norm=s.spectral_norm, beta0_err_sq=float(beta @ beta))
    # eps^2 (3/5)^2 + 2/(10*4) * 2^2 * 1 * (1/2) * (1/5)/25, with ln(1/eps^2) = 2
    rational = Fraction(2, 40) * 4 * Fraction(1, 2) * Fraction(1, 5) / 25
    expected = math.exp(-2) * 0.36 + float(rational)
    assert thm3_bound(b) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize(
    "kw,needle",
    [(dict(T=3), "T >="), (dict(d=0.1, mu=0.9), "d >="), (dict(n=1), "n >=")],
)
def test_hypothesis_violations_name_inequality(kw, needle):
    with pytest.raises(HypothesisError, match=needle):
        thm3_bound(l2_inputs(**kw))
    thm3_bound(l2_inputs(**kw), check=False)


def test_missing_inputs():
    with pytest.raises(ValueError, match="missing"):
        thm3_bound(BoundInputs(T=1, p=0.1, n=2, m=2))


def sc_inputs(**kw):
    base = dict(T=100, p=0.3, n=10, m=40, lam=2.0, C_sq=5.0, d_min=2)
    base.update(kw)
    return BoundInputs(**base)


def test_strongly_convex_bound_p_zero():
    b = sc_inputs(p=0.0)
    assert thm4_bound(b) == pytest.approx(4 / (2.0**2 * 100) * 40**2 * 5.0)


def test_strongly_convex_bound_scaling_and_errors():
    assert thm4_bound(sc_inputs(T=200)) == pytest.approx(thm4_bound(sc_inputs()) / 2)
    with pytest.raises(ValueError):
        thm4_bound(sc_inputs(d_min=0))
    with pytest.raises(ValueError):
        thm4_bound(sc_inputs(lam=0.0))
    with pytest.raises(ValueError):
        thm4_bound(sc_inputs(T=0))


@given(d1=st.integers(1, 20), d2=st.integers(1, 20), p=st.floats(0.0, 0.95))
def test_strongly_convex_bound_non_increasing_in_d_min(d1, d2, p):
    lo, hi = sorted((d1, d2))
    assert thm4_bound(sc_inputs(d_min=hi, p=p)) <= thm4_bound(sc_inputs(d_min=lo, p=p))


def test_gradient_bound_dominates_sampled_points(rng):
    X, y = rng.standard_normal((15, 3)), rng.standard_normal(15)
    R = 2.5
    C_sq = gradient_bound_sq(X, y, R)
    v = rng.standard_normal((20000, 3))
    v *= R / np.linalg.norm(v, axis=1, keepdims=True)
    sampled = max(np.max(np.sum(((X @ b - y)[:, None] * X) ** 2, axis=1)) for b in v[:2000])
    assert sampled <= C_sq * (1 + 1e-12)
    # the maximizer is on the sphere, so the supremum is attained
    i = int(np.argmax(((R * np.linalg.norm(X, axis=1) + np.abs(y)) * np.linalg.norm(X, axis=1)) ** 2))
    b = -np.sign(y[i]) * R * X[i] / np.linalg.norm(X[i])
    assert np.sum(((X[i] @ b - y[i]) * X[i]) ** 2) == pytest.approx(C_sq, rel=1e-12)
