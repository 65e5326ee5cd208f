import math

import numpy as np
import numpy.testing as npt
import pytest

from rgl.lstm_vanilla import (
    ConstantFeatureError,
    GateOverrides,
    TooFewSamplesError,
    VanillaLstmParams,
    fit_standardization,
    forward_segment,
    forward_step,
    standardize,
)
from rgl.numerics import DimensionMismatchError
from rgl.training import init_params


def scalar_step(p, x, s_prev, v_prev):
    """Brute-force re-evaluation of one step with plain Python loops.

    Deliberately avoids every library code path (no numpy arithmetic) so it
    can serve as an independent oracle.
    """
    d_s, d_x = p.d_s, p.d_x

    def mv(m, v):
        return [math.fsum(m[i][j] * v[j] for j in range(len(v))) for i in range(len(m))]

    def sig(z):
        return 1.0 / (1.0 + math.exp(-z))

    ent = {k: v.tolist() for k, v in p.entities().items()}
    x, s_prev, v_prev = list(x), list(s_prev), list(v_prev)
    a_cu = [mv(ent["w_xcu"], x)[i] + mv(ent["w_scu"], s_prev)[i] + mv(ent["w_vcu"], v_prev)[i]
            + ent["b_cu"][i] for i in range(d_s)]
    a_cs = [mv(ent["w_xcs"], x)[i] + mv(ent["w_scs"], s_prev)[i] + mv(ent["w_vcs"], v_prev)[i]
            + ent["b_cs"][i] for i in range(d_s)]
    a_du = [mv(ent["w_xdu"], x)[i] + mv(ent["w_vdu"], v_prev)[i] + ent["b_du"][i]
            for i in range(d_s)]
    u = [math.tanh(z) for z in a_du]
    g_cu = [sig(z) for z in a_cu]
    g_cs = [sig(z) for z in a_cs]
    s = [g_cs[i] * s_prev[i] + g_cu[i] * u[i] for i in range(d_s)]
    a_cr = [mv(ent["w_xcr"], x)[i] + mv(ent["w_scr"], s)[i] + mv(ent["w_vcr"], v_prev)[i]
            + ent["b_cr"][i] for i in range(d_s)]
    g_cr = [sig(z) for z in a_cr]
    r = [math.tanh(z) for z in s]
    v = [g_cr[i] * r[i] for i in range(d_s)]
    return {"a_cu": a_cu, "a_cs": a_cs, "a_cr": a_cr, "a_du": a_du,
            "g_cu": g_cu, "g_cs": g_cs, "g_cr": g_cr, "u": u, "s": s, "r": r, "v": v}


def test_zero_params_step():
    p = VanillaLstmParams.zeros(2, 3)
    s_prev = np.array([0.4, -0.2, 1.0])
    cache = forward_step(p, np.ones(2), s_prev, np.zeros(3))
    npt.assert_array_equal(cache.g_cu, 0.5 * np.ones(3))
    npt.assert_array_equal(cache.g_cs, 0.5 * np.ones(3))
    npt.assert_array_equal(cache.g_cr, 0.5 * np.ones(3))
    npt.assert_array_equal(cache.u, np.zeros(3))
    npt.assert_array_equal(cache.s, 0.5 * s_prev)
    npt.assert_array_equal(cache.r, np.tanh(cache.s))
    npt.assert_array_equal(cache.v, 0.5 * cache.r)


def test_cec_override_holds_state():
    p = init_params("vanilla-lstm", d_x=2, d_s=3, seed=5, scale=0.4)
    ov = GateOverrides.cec(3)
    s_prev = np.array([0.3, -1.1, 0.8])
    cache = forward_step(p, np.ones(2), s_prev, np.ones(3), overrides=ov)
    npt.assert_array_equal(cache.s, s_prev)
    npt.assert_array_equal(cache.v, np.zeros(3))

    caches = forward_segment(p, np.random.default_rng(0).standard_normal((100, 2)),
                             s_init=s_prev, overrides=ov)
    for c in caches:
        npt.assert_array_equal(c.s, s_prev)


def test_step_matches_scalar_oracle():
    rng = np.random.default_rng(31)
    for seed in range(5):
        p = init_params("vanilla-lstm", d_x=2, d_s=3, seed=seed, scale=0.7)
        x, s_prev, v_prev = rng.standard_normal(2), rng.standard_normal(3), rng.standard_normal(3)
        cache = forward_step(p, x, s_prev, v_prev)
        expect = scalar_step(p, x, s_prev, v_prev)
        for name, vals in expect.items():
            npt.assert_allclose(getattr(cache, name), vals, rtol=0, atol=1e-14, err_msg=name)


def test_segment_of_one_equals_step():
    p = init_params("vanilla-lstm", d_x=2, d_s=3, seed=9)
    x = np.array([[0.3, -0.7]])
    (cache,) = forward_segment(p, x)
    direct = forward_step(p, x[0], np.zeros(3), np.zeros(3))
    npt.assert_array_equal(cache.s, direct.s)
    npt.assert_array_equal(cache.v, direct.v)


def test_zero_input_zero_params_closed_form():
    p = VanillaLstmParams.zeros(1, 2)
    s_init = np.array([0.8, -0.5])
    caches = forward_segment(p, np.zeros((6, 1)), s_init=s_init)
    for n, c in enumerate(caches):
        npt.assert_allclose(c.v, 0.5 * np.tanh(0.5 ** (n + 1) * s_init), atol=1e-15)


def test_gate_and_data_ranges():
    rng = np.random.default_rng(12)
    p = init_params("vanilla-lstm", d_x=3, d_s=4, seed=2, scale=1.0)
    caches = forward_segment(p, rng.standard_normal((20, 3)))
    for c in caches:
        for g in (c.g_cu, c.g_cs, c.g_cr):
            assert np.all(g > 0.0) and np.all(g < 1.0)
        for d in (c.u, c.r):
            assert np.all(d > -1.0) and np.all(d < 1.0)


def test_state_bounds_under_saturating_gates():
    rng = np.random.default_rng(13)
    p = init_params("vanilla-lstm", d_x=2, d_s=3, seed=3, scale=1.0)
    s_init = rng.uniform(-1, 1, 3)
    caches = forward_segment(p, rng.standard_normal((30, 2)), s_init=s_init)
    for n, c in enumerate(caches):
        assert np.max(np.abs(c.s)) <= np.max(np.abs(s_init)) + n + 1

    gamma = 0.8
    ov = GateOverrides.constants(3, cs=gamma)
    caches = forward_segment(p, rng.standard_normal((30, 2)), s_init=s_init, overrides=ov)
    for n, c in enumerate(caches):
        bound = gamma ** n * np.max(np.abs(s_init)) + 1.0 / (1.0 - gamma)
        assert np.max(np.abs(c.s)) <= bound


def test_a_cr_reads_current_state():
    # sensitivity of a_cr to s_prev flows through s when W_scr != 0
    p = init_params("vanilla-lstm", d_x=1, d_s=2, seed=4, scale=0.5)
    x, v_prev = np.array([0.2]), np.zeros(2)
    s_prev = np.array([0.1, -0.3])
    h = 1e-6
    for i in range(2):
        dp = s_prev.copy()
        dp[i] += h
        dm = s_prev.copy()
        dm[i] -= h
        sens = (forward_step(p, x, dp, v_prev).a_cr - forward_step(p, x, dm, v_prev).a_cr) / (2 * h)
        assert np.linalg.norm(sens) > 1e-3


def test_dimension_mismatch():
    p = VanillaLstmParams.zeros(2, 3)
    with pytest.raises(DimensionMismatchError):
        forward_step(p, np.ones(3), np.zeros(3), np.zeros(3))
    with pytest.raises(DimensionMismatchError):
        VanillaLstmParams.zeros(2, 3).replace_entities(
            {**VanillaLstmParams.zeros(2, 3).entities(), "b_du": np.zeros(4)}
        )


# ---------------------------------------------------------------------------
# standardization
# ---------------------------------------------------------------------------

def test_standardization_1d_hand_case():
    stats = fit_standardization([[1.0], [2.0], [3.0]])
    assert stats.mu[0] == 2.0
    assert stats.sigma[0] == 1.0  # sample variance with N-1
    npt.assert_allclose(standardize(stats, [[1.0], [2.0], [3.0]]).ravel(), [-1.0, 0.0, 1.0])


def test_standardization_idempotent():
    rng = np.random.default_rng(21)
    x = rng.standard_normal((200, 3)) * np.array([2.0, 0.5, 7.0]) + np.array([1.0, -3.0, 0.2])
    z = standardize(fit_standardization(x), x)
    z2 = standardize(fit_standardization(z), z)
    npt.assert_allclose(z, z2, atol=1e-12)


def test_standardization_errors():
    with pytest.raises(ConstantFeatureError):
        fit_standardization([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]])
    with pytest.raises(TooFewSamplesError):
        fit_standardization([[1.0, 2.0]])


def test_standardization_moments():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((1000, 4)) * 3.1 + 0.7
    z = standardize(fit_standardization(x), x)
    assert np.max(np.abs(z.mean(axis=0))) < 1e-12
    assert np.max(np.abs(z.std(axis=0, ddof=1) - 1.0)) < 1e-12


def test_test_set_uses_training_stats():
    rng = np.random.default_rng(30)
    train = rng.standard_normal((100, 2)) + 5.0
    test = rng.standard_normal((50, 2)) + 5.0
    stats = fit_standardization(train)
    z = standardize(stats, test)
    npt.assert_allclose(z, (test - stats.mu) / stats.sigma)
    # test-set mean is near but not exactly zero: the transform came from train
    assert 0.0 < np.max(np.abs(z.mean(axis=0))) < 0.5
