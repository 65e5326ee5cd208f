"""Hot segment kernels: numba-jitted loops with a pure-numpy fallback.

The training loop spends essentially all its time unrolling forward and
backward passes over segments, so those two loops exist in two equivalent
implementations:

 * a numba @njit path (default whenever numba imports), and
 * a pure-numpy path.

Select with the RGL_BACKEND environment variable ("numba" or "numpy"), or per
call via the backend= argument. RGL_THREADS caps numba's thread pool.
benchmarks/bench_kernels.py compares the two.

Only the standard RNN and the Vanilla LSTM have kernels (they carry the
training workload); the augmented cell always runs the reference path. Gate
overrides are a diagnostics feature and are likewise reference-only.
"""

from __future__ import annotations

import math
import os

import numpy as np

from . import bptt
from .lstm_vanilla import _VANILLA_ENTITY_ORDER, VanillaLstmParams
from .rnn import StandardRnnParams

__all__ = [
    "HAVE_NUMBA",
    "available_backends",
    "default_backend",
    "vanilla_segment_pass",
    "rnn_segment_pass",
    "segment_pass",
]

_BACKEND_ENV = "RGL_BACKEND"
_THREADS_ENV = "RGL_THREADS"

try:
    import numba
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

if HAVE_NUMBA:
    _threads = os.environ.get(_THREADS_ENV)
    if _threads:
        try:
            numba.set_num_threads(max(1, min(int(_threads), numba.config.NUMBA_NUM_THREADS)))
        except ValueError:
            pass


def available_backends() -> tuple[str, ...]:
    return ("numpy", "numba") if HAVE_NUMBA else ("numpy",)


def default_backend() -> str:
    choice = os.environ.get(_BACKEND_ENV, "").strip().lower()
    if choice:
        if choice not in ("numpy", "numba"):
            raise ValueError(f"{_BACKEND_ENV} must be 'numpy' or 'numba', got {choice!r}")
        if choice == "numba" and not HAVE_NUMBA:
            raise RuntimeError(f"{_BACKEND_ENV}=numba requested but numba is not importable")
        return choice
    return "numba" if HAVE_NUMBA else "numpy"


def _resolve(backend: str | None) -> str:
    b = default_backend() if backend is None else backend
    if b not in available_backends():
        raise ValueError(f"backend {b!r} not available (have {available_backends()})")
    return b


def _c(a) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(a, dtype=np.float64))


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------

def _sigmoid_np(z: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(z))
    return np.where(z >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))


def _vanilla_forward_np(w, xs, s0, v0):
    (w_xcu, w_scu, w_vcu, b_cu, w_xcs, w_scs, w_vcs, b_cs,
     w_xcr, w_scr, w_vcr, b_cr, w_xdu, w_vdu, b_du) = w
    k, ds = xs.shape[0], b_cu.shape[0]
    out = [np.empty((k, ds)) for _ in range(11)]
    a_cu, a_cs, a_cr, a_du, g_cu, g_cs, g_cr, u, s, r, v = out
    s_prev, v_prev = s0, v0
    for n in range(k):
        x = xs[n]
        a_cu[n] = w_xcu @ x + w_scu @ s_prev + w_vcu @ v_prev + b_cu
        a_cs[n] = w_xcs @ x + w_scs @ s_prev + w_vcs @ v_prev + b_cs
        a_du[n] = w_xdu @ x + w_vdu @ v_prev + b_du
        u[n] = np.tanh(a_du[n])
        g_cu[n] = _sigmoid_np(a_cu[n])
        g_cs[n] = _sigmoid_np(a_cs[n])
        s[n] = g_cs[n] * s_prev + g_cu[n] * u[n]
        a_cr[n] = w_xcr @ x + w_scr @ s[n] + w_vcr @ v_prev + b_cr
        g_cr[n] = _sigmoid_np(a_cr[n])
        r[n] = np.tanh(s[n])
        v[n] = g_cr[n] * r[n]
        s_prev, v_prev = s[n], v[n]
    return tuple(out)


def _vanilla_backward_np(w, xs, s0, v0, trace, head_grads, clip):
    (w_xcu, w_scu, w_vcu, b_cu, w_xcs, w_scs, w_vcs, b_cs,
     w_xcr, w_scr, w_vcr, b_cr, w_xdu, w_vdu, b_du) = w
    a_cu, a_cs, a_cr, a_du, g_cu, g_cs, g_cr, u, s, r, v = trace
    k, ds = xs.shape[0], b_cu.shape[0]
    g = [np.zeros_like(m) for m in w]
    (d_xcu, d_scu, d_vcu, d_bcu, d_xcs, d_scs, d_vcs, d_bcs,
     d_xcr, d_scr, d_vcr, d_bcr, d_xdu, d_vdu, d_bdu) = g
    chi = np.zeros((k, ds))
    psi = np.zeros((k, ds))
    f_chi = np.zeros(ds)
    f_psi = np.zeros(ds)
    for n in range(k - 1, -1, -1):
        s_prev = s[n - 1] if n > 0 else s0
        v_prev = v[n - 1] if n > 0 else v0
        chi[n] = head_grads[n] + f_chi
        rho = chi[n] * g_cr[n]
        alpha_cr = chi[n] * r[n] * (g_cr[n] * (1.0 - g_cr[n]))
        if clip:
            alpha_cr = np.clip(alpha_cr, -1.0, 1.0)
        psi[n] = rho * (1.0 - r[n] ** 2) + w_scr.T @ alpha_cr + f_psi
        alpha_cs = psi[n] * s_prev * (g_cs[n] * (1.0 - g_cs[n]))
        alpha_cu = psi[n] * u[n] * (g_cu[n] * (1.0 - g_cu[n]))
        alpha_du = psi[n] * g_cu[n] * (1.0 - u[n] ** 2)
        if clip:
            alpha_cs = np.clip(alpha_cs, -1.0, 1.0)
            alpha_cu = np.clip(alpha_cu, -1.0, 1.0)
            alpha_du = np.clip(alpha_du, -1.0, 1.0)
        x = xs[n]
        d_xcu += np.outer(alpha_cu, x)
        d_scu += np.outer(alpha_cu, s_prev)
        d_vcu += np.outer(alpha_cu, v_prev)
        d_bcu += alpha_cu
        d_xcs += np.outer(alpha_cs, x)
        d_scs += np.outer(alpha_cs, s_prev)
        d_vcs += np.outer(alpha_cs, v_prev)
        d_bcs += alpha_cs
        d_xcr += np.outer(alpha_cr, x)
        d_scr += np.outer(alpha_cr, s[n])
        d_vcr += np.outer(alpha_cr, v_prev)
        d_bcr += alpha_cr
        d_xdu += np.outer(alpha_du, x)
        d_vdu += np.outer(alpha_du, v_prev)
        d_bdu += alpha_du
        f_chi = w_vcu.T @ alpha_cu + w_vcs.T @ alpha_cs + w_vcr.T @ alpha_cr + w_vdu.T @ alpha_du
        f_psi = w_scu.T @ alpha_cu + w_scs.T @ alpha_cs + g_cs[n] * psi[n]
    return tuple(g), chi, psi


def _rnn_forward_np(w_r, w_x, theta, xs, s0):
    k, ds = xs.shape[0], theta.shape[0]
    s = np.empty((k, ds))
    r = np.empty((k, ds))
    r_prev = np.tanh(s0)
    for n in range(k):
        s[n] = w_r @ r_prev + w_x @ xs[n] + theta
        r[n] = np.tanh(s[n])
        r_prev = r[n]
    return s, r


def _rnn_backward_np(w_r, w_x, theta, xs, s0, s, r, dEdr, clip):
    k, ds = xs.shape[0], theta.shape[0]
    d_wr = np.zeros_like(w_r)
    d_wx = np.zeros_like(w_x)
    d_th = np.zeros_like(theta)
    chi = np.zeros((k, ds))
    psi = np.zeros((k, ds))
    psi_next = np.zeros(ds)
    r_init = np.tanh(s0)
    for n in range(k - 1, -1, -1):
        chi[n] = dEdr[n] + w_r.T @ psi_next
        psi[n] = chi[n] * (1.0 - r[n] ** 2)
        if clip:
            psi[n] = np.clip(psi[n], -1.0, 1.0)
        r_prev = r[n - 1] if n > 0 else r_init
        d_wr += np.outer(psi[n], r_prev)
        d_wx += np.outer(psi[n], xs[n])
        d_th += psi[n]
        psi_next = psi[n]
    return (d_wr, d_wx, d_th), chi, psi


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _sigmoid_vec(z):
        out = np.empty_like(z)
        for i in range(z.shape[0]):
            zi = z[i]
            if zi >= 0.0:
                out[i] = 1.0 / (1.0 + math.exp(-zi))
            else:
                e = math.exp(zi)
                out[i] = e / (1.0 + e)
        return out

    @njit(cache=True)
    def _clip1(a):
        for i in range(a.shape[0]):
            if a[i] > 1.0:
                a[i] = 1.0
            elif a[i] < -1.0:
                a[i] = -1.0
        return a

    @njit(cache=True)
    def _add_outer(acc, a, b):
        for i in range(a.shape[0]):
            ai = a[i]
            for j in range(b.shape[0]):
                acc[i, j] += ai * b[j]

    @njit(cache=True)
    def _vanilla_forward_nb(w_xcu, w_scu, w_vcu, b_cu, w_xcs, w_scs, w_vcs, b_cs,
                            w_xcr, w_scr, w_vcr, b_cr, w_xdu, w_vdu, b_du,
                            xs, s0, v0):
        k = xs.shape[0]
        ds = b_cu.shape[0]
        a_cu = np.empty((k, ds))
        a_cs = np.empty((k, ds))
        a_cr = np.empty((k, ds))
        a_du = np.empty((k, ds))
        g_cu = np.empty((k, ds))
        g_cs = np.empty((k, ds))
        g_cr = np.empty((k, ds))
        u = np.empty((k, ds))
        s = np.empty((k, ds))
        r = np.empty((k, ds))
        v = np.empty((k, ds))
        s_prev = s0.copy()
        v_prev = v0.copy()
        for n in range(k):
            x = xs[n]
            a_cu[n] = w_xcu @ x + w_scu @ s_prev + w_vcu @ v_prev + b_cu
            a_cs[n] = w_xcs @ x + w_scs @ s_prev + w_vcs @ v_prev + b_cs
            a_du[n] = w_xdu @ x + w_vdu @ v_prev + b_du
            u[n] = np.tanh(a_du[n])
            g_cu[n] = _sigmoid_vec(a_cu[n])
            g_cs[n] = _sigmoid_vec(a_cs[n])
            s[n] = g_cs[n] * s_prev + g_cu[n] * u[n]
            a_cr[n] = w_xcr @ x + w_scr @ s[n] + w_vcr @ v_prev + b_cr
            g_cr[n] = _sigmoid_vec(a_cr[n])
            r[n] = np.tanh(s[n])
            v[n] = g_cr[n] * r[n]
            s_prev = s[n]
            v_prev = v[n]
        return a_cu, a_cs, a_cr, a_du, g_cu, g_cs, g_cr, u, s, r, v

    @njit(cache=True)
    def _vanilla_backward_nb(w_xcu, w_scu, w_vcu, b_cu, w_xcs, w_scs, w_vcs, b_cs,
                             w_xcr, w_scr, w_vcr, b_cr, w_xdu, w_vdu, b_du,
                             xs, s0, v0,
                             a_cu, a_cs, a_cr, a_du, g_cu, g_cs, g_cr, u, s, r, v,
                             head_grads, clip):
        k = xs.shape[0]
        ds = b_cu.shape[0]
        d_xcu = np.zeros_like(w_xcu)
        d_scu = np.zeros_like(w_scu)
        d_vcu = np.zeros_like(w_vcu)
        d_bcu = np.zeros_like(b_cu)
        d_xcs = np.zeros_like(w_xcs)
        d_scs = np.zeros_like(w_scs)
        d_vcs = np.zeros_like(w_vcs)
        d_bcs = np.zeros_like(b_cs)
        d_xcr = np.zeros_like(w_xcr)
        d_scr = np.zeros_like(w_scr)
        d_vcr = np.zeros_like(w_vcr)
        d_bcr = np.zeros_like(b_cr)
        d_xdu = np.zeros_like(w_xdu)
        d_vdu = np.zeros_like(w_vdu)
        d_bdu = np.zeros_like(b_du)
        chi = np.zeros((k, ds))
        psi = np.zeros((k, ds))
        f_chi = np.zeros(ds)
        f_psi = np.zeros(ds)
        for n in range(k - 1, -1, -1):
            s_prev = s[n - 1] if n > 0 else s0
            v_prev = v[n - 1] if n > 0 else v0
            chi[n] = head_grads[n] + f_chi
            rho = chi[n] * g_cr[n]
            alpha_cr = chi[n] * r[n] * (g_cr[n] * (1.0 - g_cr[n]))
            if clip:
                alpha_cr = _clip1(alpha_cr)
            psi[n] = rho * (1.0 - r[n] ** 2) + w_scr.T @ alpha_cr + f_psi
            alpha_cs = psi[n] * s_prev * (g_cs[n] * (1.0 - g_cs[n]))
            alpha_cu = psi[n] * u[n] * (g_cu[n] * (1.0 - g_cu[n]))
            alpha_du = psi[n] * g_cu[n] * (1.0 - u[n] ** 2)
            if clip:
                alpha_cs = _clip1(alpha_cs)
                alpha_cu = _clip1(alpha_cu)
                alpha_du = _clip1(alpha_du)
            x = xs[n]
            _add_outer(d_xcu, alpha_cu, x)
            _add_outer(d_scu, alpha_cu, s_prev)
            _add_outer(d_vcu, alpha_cu, v_prev)
            d_bcu += alpha_cu
            _add_outer(d_xcs, alpha_cs, x)
            _add_outer(d_scs, alpha_cs, s_prev)
            _add_outer(d_vcs, alpha_cs, v_prev)
            d_bcs += alpha_cs
            _add_outer(d_xcr, alpha_cr, x)
            _add_outer(d_scr, alpha_cr, s[n])
            _add_outer(d_vcr, alpha_cr, v_prev)
            d_bcr += alpha_cr
            _add_outer(d_xdu, alpha_du, x)
            _add_outer(d_vdu, alpha_du, v_prev)
            d_bdu += alpha_du
            f_chi = w_vcu.T @ alpha_cu + w_vcs.T @ alpha_cs + w_vcr.T @ alpha_cr + w_vdu.T @ alpha_du
            f_psi = w_scu.T @ alpha_cu + w_scs.T @ alpha_cs + g_cs[n] * psi[n]
        return (d_xcu, d_scu, d_vcu, d_bcu, d_xcs, d_scs, d_vcs, d_bcs,
                d_xcr, d_scr, d_vcr, d_bcr, d_xdu, d_vdu, d_bdu), chi, psi

    @njit(cache=True)
    def _rnn_forward_nb(w_r, w_x, theta, xs, s0):
        k = xs.shape[0]
        ds = theta.shape[0]
        s = np.empty((k, ds))
        r = np.empty((k, ds))
        r_prev = np.tanh(s0)
        for n in range(k):
            s[n] = w_r @ r_prev + w_x @ xs[n] + theta
            r[n] = np.tanh(s[n])
            r_prev = r[n]
        return s, r

    @njit(cache=True)
    def _rnn_backward_nb(w_r, w_x, theta, xs, s0, s, r, dEdr, clip):
        k = xs.shape[0]
        ds = theta.shape[0]
        d_wr = np.zeros_like(w_r)
        d_wx = np.zeros_like(w_x)
        d_th = np.zeros_like(theta)
        chi = np.zeros((k, ds))
        psi = np.zeros((k, ds))
        psi_next = np.zeros(ds)
        r_init = np.tanh(s0)
        for n in range(k - 1, -1, -1):
            chi[n] = dEdr[n] + w_r.T @ psi_next
            psi[n] = chi[n] * (1.0 - r[n] ** 2)
            if clip:
                psi[n] = _clip1(psi[n])
            r_prev = r[n - 1] if n > 0 else r_init
            _add_outer(d_wr, psi[n], r_prev)
            _add_outer(d_wx, psi[n], xs[n])
            d_th += psi[n]
            psi_next = psi[n]
        return (d_wr, d_wx, d_th), chi, psi


# ---------------------------------------------------------------------------
# public dispatchers
# ---------------------------------------------------------------------------

def vanilla_forward_arrays(p: VanillaLstmParams, xs, s_init=None, v_init=None,
                           backend: str | None = None):
    """Stacked forward trace (a_cu, a_cs, a_cr, a_du, g_cu, g_cs, g_cr, u, s, r, v)."""
    xs = _c(np.atleast_2d(xs))
    s0 = _c(np.zeros(p.d_s) if s_init is None else s_init)
    v0 = _c(np.zeros(p.d_s) if v_init is None else v_init)
    w = tuple(_c(a) for a in p.entities().values())
    if _resolve(backend) == "numba":
        return _vanilla_forward_nb(*w, xs, s0, v0)
    return _vanilla_forward_np(w, xs, s0, v0)


def vanilla_backward_arrays(p: VanillaLstmParams, xs, trace, head_grads,
                            s_init=None, v_init=None, clip: bool = False,
                            backend: str | None = None):
    """Gradients from a stacked trace; returns (grads dict, chi, psi)."""
    xs = _c(np.atleast_2d(xs))
    s0 = _c(np.zeros(p.d_s) if s_init is None else s_init)
    v0 = _c(np.zeros(p.d_s) if v_init is None else v_init)
    head_grads = _c(np.atleast_2d(head_grads))
    w = tuple(_c(a) for a in p.entities().values())
    if _resolve(backend) == "numba":
        grads, chi, psi = _vanilla_backward_nb(*w, xs, s0, v0, *trace, head_grads, clip)
    else:
        grads, chi, psi = _vanilla_backward_np(w, xs, s0, v0, trace, head_grads, clip)
    return dict(zip(_VANILLA_ENTITY_ORDER, grads)), chi, psi


def rnn_forward_arrays(p: StandardRnnParams, xs, s_init=None, backend: str | None = None):
    xs = _c(np.atleast_2d(xs))
    s0 = _c(np.zeros(p.d_s) if s_init is None else s_init)
    if _resolve(backend) == "numba":
        return _rnn_forward_nb(_c(p.w_r), _c(p.w_x), _c(p.theta_s), xs, s0)
    return _rnn_forward_np(_c(p.w_r), _c(p.w_x), _c(p.theta_s), xs, s0)


def rnn_backward_arrays(p: StandardRnnParams, xs, s, r, dEdr, s_init=None,
                        clip: bool = False, backend: str | None = None):
    xs = _c(np.atleast_2d(xs))
    s0 = _c(np.zeros(p.d_s) if s_init is None else s_init)
    args = (_c(p.w_r), _c(p.w_x), _c(p.theta_s), xs, s0, _c(s), _c(r), _c(np.atleast_2d(dEdr)), clip)
    if _resolve(backend) == "numba":
        grads, chi, psi = _rnn_backward_nb(*args)
    else:
        grads, chi, psi = _rnn_backward_np(*args)
    return dict(zip(("w_r", "w_x", "theta_s"), grads)), chi, psi


def vanilla_segment_pass(p: VanillaLstmParams, xs, targets, clip: bool = False,
                         backend: str | None = None):
    """Identity-MSE forward+backward over one segment via the array kernels."""
    xs = _c(np.atleast_2d(xs))
    targets = _c(np.atleast_2d(targets))
    trace = vanilla_forward_arrays(p, xs, backend=backend)
    v = trace[-1]
    if targets.shape != v.shape:
        raise ValueError(f"targets shape {targets.shape} != outputs shape {v.shape}")
    diff = v - targets
    loss = 0.5 * float(np.sum(diff * diff))
    grads, chi, psi = vanilla_backward_arrays(p, xs, trace, diff, clip=clip, backend=backend)
    return loss, bptt.GradientBundle(grads, bptt.BorderGradients(chi, psi))


def rnn_segment_pass(p: StandardRnnParams, xs, targets, clip: bool = False,
                     backend: str | None = None):
    xs = _c(np.atleast_2d(xs))
    targets = _c(np.atleast_2d(targets))
    s, r = rnn_forward_arrays(p, xs, backend=backend)
    if targets.shape != r.shape:
        raise ValueError(f"targets shape {targets.shape} != outputs shape {r.shape}")
    diff = r - targets
    loss = 0.5 * float(np.sum(diff * diff))
    grads, chi, psi = rnn_backward_arrays(p, xs, s, r, diff, clip=clip, backend=backend)
    return loss, bptt.GradientBundle(grads, bptt.BorderGradients(chi, psi))


def segment_pass(kind: str, params, xs, targets, clip: bool = False,
                 backend: str | None = None):
    if kind == "vanilla-lstm":
        return vanilla_segment_pass(params, xs, targets, clip=clip, backend=backend)
    if kind == "standard-rnn":
        return rnn_segment_pass(params, xs, targets, clip=clip, backend=backend)
    raise ValueError(f"no kernel path for model kind {kind!r}")
