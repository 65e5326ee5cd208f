import numpy as np
import numpy.testing as npt
import pytest

from rgl.numerics import DimensionMismatchError
from rgl.rnn import (
    CanonicalRnnParams,
    ContinuousSystem,
    SingularMatrixError,
    StandardRnnParams,
    canonical_step,
    discretize,
    forward_segment,
    impulse_response,
    stability_report,
    standard_step,
)


def test_discretize_1d():
    sys = ContinuousSystem(a=[[-2.0]], b=[[1.0]], c=[[1.0]], phi=[0.0], delta_t=1.0)
    p = discretize(sys)
    npt.assert_allclose(p.w_s, [[1.0 / 3.0]])
    npt.assert_allclose(p.w_r, [[1.0 / 3.0]])
    npt.assert_allclose(p.w_x, [[1.0 / 3.0]])
    npt.assert_allclose(p.theta_s, [0.0])


def test_discretize_zero_a_gives_identity():
    sys = ContinuousSystem(a=np.zeros((2, 2)), b=np.eye(2), c=np.eye(2), phi=np.zeros(2), delta_t=1.0)
    npt.assert_allclose(discretize(sys).w_s, np.eye(2), atol=1e-14)


def test_discretize_diagonal_a():
    sys = ContinuousSystem(a=np.diag([-10.0, -10.0, -10.0]), b=np.eye(3), c=np.eye(3),
                           phi=np.zeros(3), delta_t=1.0)
    npt.assert_allclose(discretize(sys).w_s, np.eye(3) / 11.0, atol=1e-14)


def test_discretize_singular_raises():
    with pytest.raises(SingularMatrixError):
        ContinuousSystem(a=np.eye(2), b=np.eye(2), c=np.eye(2), phi=np.zeros(2), delta_t=1.0)


def test_pre_division_recurrence_residual():
    # (I - dt*A) s[n] must reproduce s[n-1] + dt*B r[n-1] + dt*C x[n] + dt*phi
    rng = np.random.default_rng(3)
    a = np.diag(-1.0 - rng.uniform(0, 2, 3)) + 0.1 * rng.standard_normal((3, 3))
    sys = ContinuousSystem(a=a, b=rng.standard_normal((3, 3)), c=rng.standard_normal((3, 2)),
                           phi=rng.standard_normal(3), delta_t=0.5)
    p = discretize(sys)
    lhs_op = np.eye(3) - sys.delta_t * sys.a
    s_prev, r_prev = np.zeros(3), np.zeros(3)
    for _ in range(10):
        x = rng.standard_normal(2)
        s, r = canonical_step(p, s_prev, r_prev, x)
        rhs = s_prev + sys.delta_t * (sys.b @ r_prev) + sys.delta_t * (sys.c @ x) \
            + sys.delta_t * sys.phi
        assert np.linalg.norm(lhs_op @ s - rhs) < 1e-10
        s_prev, r_prev = s, r


def test_canonical_reduces_to_standard_bitwise():
    rng = np.random.default_rng(1)
    w_r, w_x, theta = rng.standard_normal((3, 3)), rng.standard_normal((3, 2)), rng.standard_normal(3)
    canon = CanonicalRnnParams(np.zeros((3, 3)), w_r, w_x, theta)
    std = StandardRnnParams(w_r, w_x, theta)
    for _ in range(5):
        s_prev, r_prev, x = rng.standard_normal(3), rng.standard_normal(3), rng.standard_normal(2)
        s_c, r_c = canonical_step(canon, s_prev, r_prev, x)
        s_s, r_s = standard_step(std, r_prev, x)
        npt.assert_array_equal(s_c, s_s)
        npt.assert_array_equal(r_c, r_s)


def test_canonical_zero_params():
    p = CanonicalRnnParams(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 1)), np.zeros(2))
    s, r = canonical_step(p, np.ones(2), np.ones(2), np.ones(1))
    npt.assert_array_equal(s, np.zeros(2))
    npt.assert_array_equal(r, np.zeros(2))


def test_canonical_1d_hand_value():
    p = CanonicalRnnParams([[0.5]], [[0.0]], [[0.0]], [0.0])
    s, r = canonical_step(p, [1.0], [0.3], [0.7])
    assert s[0] == 0.5
    assert r[0] == np.tanh(0.5)


def test_step_dimension_mismatch():
    p = StandardRnnParams(np.eye(2), np.ones((2, 3)), np.zeros(2))
    with pytest.raises(DimensionMismatchError):
        standard_step(p, np.ones(3), np.ones(3))


def test_impulse_response_symbolic_expansion():
    rng = np.random.default_rng(7)
    p = StandardRnnParams(0.4 * rng.standard_normal((3, 3)), rng.standard_normal((3, 2)), np.zeros(3))
    resp = impulse_response(p, 4)
    one = np.ones(2)
    g = np.tanh
    npt.assert_allclose(resp[0], p.w_x @ one, atol=1e-14)
    npt.assert_allclose(resp[1], p.w_r @ g(p.w_x @ one), atol=1e-14)
    npt.assert_allclose(resp[2], p.w_r @ g(p.w_r @ g(p.w_x @ one)), atol=1e-14)
    npt.assert_allclose(resp[3], p.w_r @ g(p.w_r @ g(p.w_r @ g(p.w_x @ one))), atol=1e-14)


def test_impulse_response_dies_without_recurrence():
    p = StandardRnnParams(np.zeros((2, 2)), np.ones((2, 1)), np.zeros(2))
    resp = impulse_response(p, 5)
    for s in resp[1:]:
        npt.assert_array_equal(s, np.zeros(2))


def test_impulse_response_1d_recurrence():
    p = StandardRnnParams([[0.5]], [[1.0]], [0.0])
    resp = impulse_response(p, 4)
    # independent scalar recomputation
    s, expect = 0.0, []
    r = 0.0
    for n in range(4):
        s = 0.5 * r + (1.0 if n == 0 else 0.0)
        r = np.tanh(s)
        expect.append(s)
    npt.assert_allclose([v[0] for v in resp], expect, atol=0)
    assert resp[1][0] == pytest.approx(0.5 * np.tanh(1.0))


def test_impulse_magnitude_strictly_decreasing_1d():
    rng = np.random.default_rng(9)
    for _ in range(10):
        w_r = rng.uniform(0.05, 0.95)
        w_x = rng.uniform(0.2, 2.0)
        p = StandardRnnParams([[w_r]], [[w_x]], [0.0])
        mags = [abs(v[0]) for v in impulse_response(p, 8)]
        assert all(mags[n + 1] < mags[n] for n in range(1, 7))


def test_stability_report_cases():
    p = StandardRnnParams(np.diag([0.3, 0.7]), np.ones((2, 1)), np.zeros(2))
    rep = stability_report(p)
    assert rep.stable and not rep.has_complex

    p = StandardRnnParams(np.diag([1.5, 0.2]), np.ones((2, 1)), np.zeros(2))
    assert not stability_report(p).stable

    p = StandardRnnParams(0.9 * np.eye(3), np.ones((3, 1)), np.zeros(3))
    rep = stability_report(p)
    npt.assert_allclose(rep.eigenvalues.real, 0.9)
    assert rep.stable


def test_stability_report_flags_complex_spectrum():
    rot = np.array([[0.0, -0.5], [0.5, 0.0]])  # eigenvalues +-0.5j
    rep = stability_report(StandardRnnParams(rot, np.ones((2, 1)), np.zeros(2)))
    assert rep.has_complex and not rep.stable
    assert "complex" in str(rep)


def test_forward_segment_matches_manual_unroll():
    rng = np.random.default_rng(2)
    p = StandardRnnParams(0.3 * rng.standard_normal((2, 2)), rng.standard_normal((2, 2)), rng.standard_normal(2))
    xs = rng.standard_normal((6, 2))
    trace = forward_segment(p, xs)
    r_prev = np.zeros(2)
    for n in range(6):
        s, r = standard_step(p, r_prev, xs[n])
        npt.assert_array_equal(trace.s[n], s)
        npt.assert_array_equal(trace.r[n], r)
        r_prev = r
