import numpy as np
import numpy.testing as npt
import pytest

from rgl import bptt, kernels
from rgl.lstm_vanilla import forward_segment
from rgl.rnn import forward_segment as rnn_forward
from rgl.training import IdentityMseHead, init_params

BACKENDS = kernels.available_backends()
HEAD = IdentityMseHead()


def test_numba_is_available_here():
    # the environment ships numba; the numpy fallback is for hosts without it
    assert "numpy" in BACKENDS
    assert kernels.HAVE_NUMBA


@pytest.mark.parametrize("backend", BACKENDS)
def test_vanilla_forward_matches_reference(backend):
    rng = np.random.default_rng(0)
    p = init_params("vanilla-lstm", d_x=2, d_s=4, seed=0, scale=0.6)
    xs = rng.standard_normal((9, 2))
    trace = kernels.vanilla_forward_arrays(p, xs, backend=backend)
    caches = forward_segment(p, xs)
    names = ("a_cu", "a_cs", "a_cr", "a_du", "g_cu", "g_cs", "g_cr", "u", "s", "r", "v")
    for arr, name in zip(trace, names):
        ref = np.vstack([getattr(c, name) for c in caches])
        npt.assert_allclose(arr, ref, rtol=0, atol=1e-14, err_msg=f"{backend}:{name}")


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("clip", [False, True])
def test_vanilla_segment_pass_matches_reference(backend, clip):
    rng = np.random.default_rng(1)
    p = init_params("vanilla-lstm", d_x=2, d_s=4, seed=1, scale=0.6)
    xs = rng.standard_normal((7, 2))
    targets = rng.standard_normal((7, 4))
    loss_k, bundle_k = kernels.vanilla_segment_pass(p, xs, targets, clip=clip, backend=backend)
    loss_r, bundle_r = bptt.segment_backward("vanilla-lstm", p, xs, targets, HEAD, clip=clip)
    assert loss_k == pytest.approx(loss_r, rel=1e-12)
    for name in bundle_r.grads:
        npt.assert_allclose(bundle_k.grads[name], bundle_r.grads[name], rtol=1e-10,
                            atol=1e-12, err_msg=f"{backend}:{name}")
    npt.assert_allclose(bundle_k.border.psi, bundle_r.border.psi, atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_rnn_paths_match_reference(backend):
    rng = np.random.default_rng(2)
    p = init_params("standard-rnn", d_x=3, d_s=4, seed=2, scale=0.6)
    xs = rng.standard_normal((8, 3))
    s, r = kernels.rnn_forward_arrays(p, xs, backend=backend)
    trace = rnn_forward(p, xs)
    npt.assert_allclose(s, trace.s, atol=1e-14)
    npt.assert_allclose(r, trace.r, atol=1e-14)

    targets = rng.standard_normal((8, 4))
    loss_k, bundle_k = kernels.rnn_segment_pass(p, xs, targets, backend=backend)
    loss_r, bundle_r = bptt.segment_backward("standard-rnn", p, xs, targets, HEAD)
    assert loss_k == pytest.approx(loss_r, rel=1e-12)
    for name in bundle_r.grads:
        npt.assert_allclose(bundle_k.grads[name], bundle_r.grads[name], rtol=1e-10,
                            atol=1e-12, err_msg=f"{backend}:{name}")


@pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba not installed")
def test_backends_agree_with_each_other():
    rng = np.random.default_rng(3)
    p = init_params("vanilla-lstm", d_x=1, d_s=16, seed=3, scale=0.2)
    xs = rng.standard_normal((20, 1))
    targets = rng.standard_normal((20, 16))
    loss_a, bundle_a = kernels.vanilla_segment_pass(p, xs, targets, backend="numpy")
    loss_b, bundle_b = kernels.vanilla_segment_pass(p, xs, targets, backend="numba")
    assert loss_a == pytest.approx(loss_b, rel=1e-13)
    for name in bundle_a.grads:
        npt.assert_allclose(bundle_a.grads[name], bundle_b.grads[name], rtol=1e-11, atol=1e-13)


def test_env_selection(monkeypatch):
    monkeypatch.setenv("RGL_BACKEND", "numpy")
    assert kernels.default_backend() == "numpy"
    monkeypatch.setenv("RGL_BACKEND", "bogus")
    with pytest.raises(ValueError):
        kernels.default_backend()
    monkeypatch.delenv("RGL_BACKEND")
    assert kernels.default_backend() in BACKENDS


def test_no_kernel_for_augmented():
    p = init_params("augmented-lstm", d_x=2, d_s=3, d_v=2, window=1,
                    input_gate="input", seed=4)
    with pytest.raises(ValueError):
        kernels.segment_pass("augmented-lstm", p, np.ones((3, 2)), np.ones((3, 2)))
