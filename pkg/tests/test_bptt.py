import numpy as np
import numpy.testing as npt
import pytest

from rgl import bptt
from rgl.lstm_augmented import from_vanilla
from rgl.lstm_vanilla import GateOverrides, forward_segment
from rgl.rnn import StandardRnnParams, forward_segment as rnn_forward
from rgl.training import IdentityMseHead, init_params

HEAD = IdentityMseHead()


# ---------------------------------------------------------------------------
# standard RNN backward
# ---------------------------------------------------------------------------

def test_rnn_backward_single_step():
    p = init_params("standard-rnn", d_x=2, d_s=3, seed=0, scale=0.5)
    xs = np.array([[0.4, -0.2]])
    trace = rnn_forward(p, xs)
    dEdr = np.array([[1.0, -2.0, 0.5]])
    bundle = bptt.rnn_backward(p, trace, dEdr)
    npt.assert_allclose(bundle.border.psi[0], dEdr[0] * (1.0 - trace.r[0] ** 2), atol=1e-15)
    # r[-1] = gd(0) = 0, so the W_r gradient at K=1 vanishes
    npt.assert_array_equal(bundle.grads["w_r"], np.zeros((3, 3)))


def test_rnn_backward_zero_cotangent():
    p = init_params("standard-rnn", d_x=2, d_s=3, seed=1, scale=0.5)
    trace = rnn_forward(p, np.random.default_rng(0).standard_normal((5, 2)))
    bundle = bptt.rnn_backward(p, trace, np.zeros((5, 3)))
    for g in bundle.grads.values():
        npt.assert_array_equal(g, np.zeros_like(g))


def test_rnn_gradients_match_finite_differences():
    p, xs, targets = bptt.random_check_instance("standard-rnn", seed=1)
    report = bptt.grad_check("standard-rnn", p, xs, targets, HEAD)
    assert report.max_rel_err < 1e-6, report.to_text()


# ---------------------------------------------------------------------------
# Vanilla LSTM backward
# ---------------------------------------------------------------------------

def test_vanilla_backward_zero_head():
    p = init_params("vanilla-lstm", d_x=2, d_s=3, seed=2, scale=0.5)
    caches = forward_segment(p, np.random.default_rng(1).standard_normal((6, 2)))
    bundle = bptt.vanilla_backward(p, caches, np.zeros((6, 3)))
    for g in bundle.grads.values():
        npt.assert_array_equal(g, np.zeros_like(g))


def test_vanilla_cec_psi_recirculates():
    p = init_params("vanilla-lstm", d_x=2, d_s=3, seed=3, scale=0.5)
    ov = GateOverrides.cec(3)
    caches = forward_segment(p, np.random.default_rng(2).standard_normal((20, 2)),
                             s_init=np.array([0.3, -0.2, 0.9]), overrides=ov)
    seed_psi = np.array([0.7, -1.3, 0.2])
    bundle = bptt.vanilla_backward(p, caches, np.zeros((20, 3)), psi_final=seed_psi)
    for n in range(20):
        npt.assert_array_equal(bundle.border.psi[n], seed_psi)


def test_vanilla_gradients_match_finite_differences():
    p, xs, targets = bptt.random_check_instance("vanilla-lstm", seed=7)
    report = bptt.grad_check("vanilla-lstm", p, xs, targets, HEAD)
    assert report.max_rel_err < 1e-6, report.to_text()


def test_vanilla_backward_linear_in_cotangents():
    p = init_params("vanilla-lstm", d_x=2, d_s=3, seed=4, scale=0.5)
    rng = np.random.default_rng(3)
    caches = forward_segment(p, rng.standard_normal((5, 2)))
    head_grads = rng.standard_normal((5, 3))
    b1 = bptt.vanilla_backward(p, caches, head_grads)
    b2 = bptt.vanilla_backward(p, caches, 2.5 * head_grads)
    for k in b1.grads:
        npt.assert_allclose(2.5 * b1.grads[k], b2.grads[k], rtol=1e-12, atol=1e-12)
    npt.assert_allclose(2.5 * b1.border.psi, b2.border.psi, rtol=1e-12, atol=1e-12)


# ---------------------------------------------------------------------------
# Augmented LSTM backward
# ---------------------------------------------------------------------------

def test_augmented_gradients_match_finite_differences_all_modes():
    for seed, window in ((29, 3), (46, 2), (39, 1)):
        p, xs, targets = bptt.random_check_instance("augmented-lstm", seed=seed, window=window)
        report = bptt.grad_check("augmented-lstm", p, xs, targets, HEAD)
        assert report.max_rel_err < 1e-6, (window, report.to_text())


def test_augmented_input_mode_gradients():
    # seed chosen so no gradient element sits below the FD noise floor
    rng = np.random.default_rng(141)
    p = init_params("augmented-lstm", d_x=2, d_s=4, d_v=3, window=3,
                    input_gate="input", seed=101, scale=0.7)
    xs = rng.uniform(-1, 1, (5, 2))
    outputs, _ = bptt._model_outputs("augmented-lstm", p, xs)
    targets = outputs + 0.1 * rng.standard_normal(outputs.shape)
    report = bptt.grad_check("augmented-lstm", p, xs, targets, HEAD)
    assert report.max_rel_err < 1e-6, report.to_text()


def test_augmented_gate_off_gradients():
    rng = np.random.default_rng(41)
    p = init_params("augmented-lstm", d_x=2, d_s=3, d_v=2, window=2,
                    input_gate="off", seed=7, scale=0.7)
    xs = rng.uniform(-1, 1, (5, 2))
    outputs, _ = bptt._model_outputs("augmented-lstm", p, xs)
    targets = outputs + 0.1 * rng.standard_normal(outputs.shape)
    report = bptt.grad_check("augmented-lstm", p, xs, targets, HEAD)
    assert report.max_rel_err < 1e-6, report.to_text()
    # cx parameters cannot influence the loss with the gate off
    for name, g in report_grads(p, xs, targets).items():
        if "cx" in name:
            npt.assert_array_equal(g, np.zeros_like(g))


def report_grads(p, xs, targets):
    _, bundle = bptt.segment_backward("augmented-lstm", p, xs, targets, HEAD)
    return bundle.grads


def test_reduction_gradients_match_vanilla():
    rng = np.random.default_rng(42)
    vp = init_params("vanilla-lstm", d_x=3, d_s=3, seed=8, scale=0.6)
    ap = from_vanilla(vp, input_gate="off")
    xs = rng.uniform(-1, 1, (6, 3))
    targets = rng.standard_normal((6, 3))
    _, vb = bptt.segment_backward("vanilla-lstm", vp, xs, targets, HEAD)
    _, ab = bptt.segment_backward("augmented-lstm", ap, xs, targets, HEAD)
    pairs = {
        "w_xcu": "f_xcu[0]", "w_scu": "w_scu", "w_vcu": "w_vcu", "b_cu": "b_cu",
        "w_xcs": "f_xcs[0]", "w_scs": "w_scs", "w_vcs": "w_vcs", "b_cs": "b_cs",
        "w_xcr": "f_xcr[0]", "w_scr": "w_scr", "w_vcr": "w_vcr", "b_cr": "b_cr",
        "w_xdu": "f_xdu[0]", "w_vdu": "w_vdu", "b_du": "b_du",
    }
    for v_name, a_name in pairs.items():
        npt.assert_allclose(ab.grads[a_name], vb.grads[v_name], rtol=0, atol=1e-12,
                            err_msg=v_name)


def test_projection_gradient_is_chi_outer_q():
    rng = np.random.default_rng(43)
    p = init_params("augmented-lstm", d_x=3, d_s=3, d_v=2, window=1, seed=9, scale=0.6)
    xs = rng.uniform(-1, 1, (4, 3))
    from rgl.lstm_augmented import forward_segment_aug

    caches = forward_segment_aug(p, xs)
    head_grads = rng.standard_normal((4, 2))
    bundle = bptt.augmented_backward(p, caches, head_grads, xs=xs)
    expect = np.zeros((2, 3))
    for n in range(4):
        expect += np.outer(bundle.border.chi[n], caches[n].q)
    npt.assert_allclose(bundle.grads["w_qdr"], expect, atol=1e-12)


# ---------------------------------------------------------------------------
# clipping
# ---------------------------------------------------------------------------

def test_clip_examples():
    npt.assert_array_equal(
        bptt.clip_accumulation_derivatives(np.array([0.5, -2.0, 3.0])), [0.5, -1.0, 1.0]
    )
    a = np.array([0.1, -0.9])
    npt.assert_array_equal(bptt.clip_accumulation_derivatives(a), a)


def test_clip_disabled_is_passthrough():
    p, xs, targets = bptt.random_check_instance("vanilla-lstm", seed=5)
    loss_a, b_off = bptt.segment_backward("vanilla-lstm", p, xs, targets, HEAD, clip=False)
    loss_b, b_off2 = bptt.segment_backward("vanilla-lstm", p, xs, targets, HEAD, clip=False)
    assert loss_a == loss_b
    for k in b_off.grads:
        npt.assert_array_equal(b_off.grads[k], b_off2.grads[k])


def test_clip_engages_on_large_cotangents():
    p = init_params("vanilla-lstm", d_x=2, d_s=3, seed=10, scale=0.5)
    rng = np.random.default_rng(44)
    caches = forward_segment(p, rng.standard_normal((5, 2)))
    huge = 1e3 * rng.standard_normal((5, 3))
    clipped = bptt.vanilla_backward(p, caches, huge, clip=True)
    unclipped = bptt.vanilla_backward(p, caches, huge, clip=False)
    assert np.max(np.abs(unclipped.grads["b_cr"])) > np.max(np.abs(clipped.grads["b_cr"]))
    # each per-step clipped alpha is bounded, so K steps bound the bias gradient
    assert np.max(np.abs(clipped.grads["b_cr"])) <= 5.0 + 1e-12


# ---------------------------------------------------------------------------
# batch aggregation
# ---------------------------------------------------------------------------

def test_bundle_sum_is_permutation_invariant():
    rng = np.random.default_rng(45)
    p = init_params("vanilla-lstm", d_x=2, d_s=3, seed=11, scale=0.5)
    segs = [rng.standard_normal((4, 2)) for _ in range(4)]
    tgts = [rng.standard_normal((4, 3)) for _ in range(4)]

    def total(order):
        acc = None
        for i in order:
            _, b = bptt.segment_backward("vanilla-lstm", p, segs[i], tgts[i], HEAD)
            if acc is None:
                acc = b
            else:
                acc.add_(b)
        return acc

    a = total([0, 1, 2, 3])
    b = total([3, 1, 0, 2])
    for k in a.grads:
        npt.assert_allclose(a.grads[k], b.grads[k], rtol=0, atol=1e-12)


# ---------------------------------------------------------------------------
# grad_check plumbing
# ---------------------------------------------------------------------------

def test_grad_check_epsilon_bounds():
    p, xs, targets = bptt.random_check_instance("standard-rnn", seed=0)
    with pytest.raises(ValueError):
        bptt.grad_check("standard-rnn", p, xs, targets, HEAD, epsilon=1e-3)


def test_grad_check_corruption_detected():
    p, xs, targets = bptt.random_check_instance("standard-rnn", seed=0)
    report = bptt.grad_check("standard-rnn", p, xs, targets, HEAD, _corrupt=True)
    assert not report.passed(1e-6)


def test_grad_check_report_text():
    p, xs, targets = bptt.random_check_instance("standard-rnn", seed=0)
    report = bptt.grad_check("standard-rnn", p, xs, targets, HEAD)
    text = report.to_text()
    assert "w_r" in text and "rel err" in text and "max relative error" in text
