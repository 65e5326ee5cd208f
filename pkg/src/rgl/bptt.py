"""Explicit Back Propagation Through Time for all three cell kinds.

The chain rule is anchored at the cell border: chi[n] = dE/dv[n] and
psi[n] = dE/ds[n] recurse backward from chi[K] = psi[K] = 0, and every
parameter gradient is an outer product of an accumulation derivative (alpha)
with the signal feeding that accumulation, summed over steps.

Cotangent pullbacks use the TRANSPOSE of each weight matrix (backing a
cotangent through y = W x contributes W^T dy). The finite-difference checker
grad_check settles this discipline numerically for every parameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lstm_augmented as aug
from . import lstm_vanilla as van
from . import rnn as rnn_mod
from .numerics import gc_prime

__all__ = [
    "MODEL_KINDS",
    "BorderGradients",
    "GradientBundle",
    "rnn_backward",
    "vanilla_backward",
    "augmented_backward",
    "clip_accumulation_derivatives",
    "segment_loss",
    "segment_backward",
    "GradCheckReport",
    "grad_check",
]

MODEL_KINDS = ("standard-rnn", "vanilla-lstm", "augmented-lstm")


@dataclass
class BorderGradients:
    """chi[n] = dE/dv[n] and psi[n] = dE/ds[n] per step (stacked over n)."""

    chi: np.ndarray  # (K, d_v)
    psi: np.ndarray  # (K, d_s)


@dataclass
class GradientBundle:
    """dE/dTheta keyed by entity name, plus the border gradient sequences."""

    grads: dict[str, np.ndarray]
    border: BorderGradients

    def scaled(self, lam: float) -> "GradientBundle":
        return GradientBundle(
            {k: lam * v for k, v in self.grads.items()},
            BorderGradients(lam * self.border.chi, lam * self.border.psi),
        )

    def add_(self, other: "GradientBundle") -> None:
        for k in self.grads:
            self.grads[k] += other.grads[k]


def clip_accumulation_derivatives(alpha: np.ndarray) -> np.ndarray:
    """Clamp an accumulation derivative elementwise to [-1, 1]."""
    return np.clip(alpha, -1.0, 1.0)


def _maybe_clip(alpha: np.ndarray, clip: bool) -> np.ndarray:
    return clip_accumulation_derivatives(alpha) if clip else alpha


def _zero_grads(params) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.entities().items()}


# ---------------------------------------------------------------------------
# standard RNN
# ---------------------------------------------------------------------------

def rnn_backward(
    p: rnn_mod.StandardRnnParams,
    trace: rnn_mod.RnnTrace,
    dEdr_local,
    clip: bool = False,
    psi_final=None,
) -> GradientBundle:
    """BPTT for the standard cell.

    dEdr_local[n] is the loss head's gradient at the readout of step n. The
    recursion is chi[n] = dEdr_local[n] + W_r^T psi[n+1], psi[n] = chi[n] *
    gd'(s[n]), seeded with psi[K] = 0 (or psi_final when probing the
    recursion directly).
    """
    dEdr_local = np.atleast_2d(np.asarray(dEdr_local, dtype=np.float64))
    k = trace.steps
    if dEdr_local.shape != (k, p.d_s):
        raise ValueError(f"dEdr_local shape {dEdr_local.shape} != trace shape ({k}, {p.d_s})")
    grads = _zero_grads(p)
    chi = np.zeros((k, p.d_s))
    psi = np.zeros((k, p.d_s))
    psi_next = np.zeros(p.d_s) if psi_final is None else np.asarray(psi_final, dtype=np.float64)
    r_init = np.tanh(trace.s_init)  # r[-1] = gd(s[-1]); zero under zero initial state
    for n in range(k - 1, -1, -1):
        chi[n] = dEdr_local[n] + p.w_r.T @ psi_next
        psi[n] = _maybe_clip(chi[n] * (1.0 - trace.r[n] ** 2), clip)
        r_prev = trace.r[n - 1] if n > 0 else r_init
        grads["w_r"] += np.outer(psi[n], r_prev)
        grads["w_x"] += np.outer(psi[n], trace.xs[n])
        grads["theta_s"] += psi[n]
        psi_next = psi[n]
    return GradientBundle(grads, BorderGradients(chi=chi.copy(), psi=psi))


# ---------------------------------------------------------------------------
# Vanilla LSTM
# ---------------------------------------------------------------------------

def vanilla_backward(
    p: van.VanillaLstmParams,
    caches: list[van.StepCache],
    head_grads,
    clip: bool = False,
    psi_final=None,
    chi_final=None,
) -> GradientBundle:
    """BPTT for the Vanilla cell over a forward trace.

    head_grads[n] is (dy/dv)^T (dE/dy) at step n. An overridden gate is a
    constant, so its accumulation derivative is zero.
    """
    head_grads = np.atleast_2d(np.asarray(head_grads, dtype=np.float64))
    k = len(caches)
    if head_grads.shape != (k, p.d_s):
        raise ValueError(f"head_grads shape {head_grads.shape} != ({k}, {p.d_s})")
    grads = _zero_grads(p)
    chi = np.zeros((k, p.d_s))
    psi = np.zeros((k, p.d_s))
    f_chi = np.zeros(p.d_s) if chi_final is None else np.asarray(chi_final, dtype=np.float64)
    f_psi = np.zeros(p.d_s) if psi_final is None else np.asarray(psi_final, dtype=np.float64)
    for n in range(k - 1, -1, -1):
        c = caches[n]
        ov = c.overrides or van.GateOverrides()
        chi[n] = head_grads[n] + f_chi
        rho = chi[n] * c.g_cr
        if ov.cr is None:
            alpha_cr = chi[n] * c.r * gc_prime(c.a_cr)
        else:
            alpha_cr = np.zeros(p.d_s)
        alpha_cr = _maybe_clip(alpha_cr, clip)
        psi[n] = rho * (1.0 - c.r ** 2) + p.w_scr.T @ alpha_cr + f_psi
        alpha_cs = psi[n] * c.s_prev * gc_prime(c.a_cs) if ov.cs is None else np.zeros(p.d_s)
        alpha_cu = psi[n] * c.u * gc_prime(c.a_cu) if ov.cu is None else np.zeros(p.d_s)
        alpha_du = psi[n] * c.g_cu * (1.0 - c.u ** 2)
        alpha_cs = _maybe_clip(alpha_cs, clip)
        alpha_cu = _maybe_clip(alpha_cu, clip)
        alpha_du = _maybe_clip(alpha_du, clip)

        grads["w_xcu"] += np.outer(alpha_cu, c.x)
        grads["w_scu"] += np.outer(alpha_cu, c.s_prev)
        grads["w_vcu"] += np.outer(alpha_cu, c.v_prev)
        grads["b_cu"] += alpha_cu
        grads["w_xcs"] += np.outer(alpha_cs, c.x)
        grads["w_scs"] += np.outer(alpha_cs, c.s_prev)
        grads["w_vcs"] += np.outer(alpha_cs, c.v_prev)
        grads["b_cs"] += alpha_cs
        grads["w_xcr"] += np.outer(alpha_cr, c.x)
        grads["w_scr"] += np.outer(alpha_cr, c.s)  # control readout reads the CURRENT state
        grads["w_vcr"] += np.outer(alpha_cr, c.v_prev)
        grads["b_cr"] += alpha_cr
        grads["w_xdu"] += np.outer(alpha_du, c.x)
        grads["w_vdu"] += np.outer(alpha_du, c.v_prev)
        grads["b_du"] += alpha_du

        f_chi = (
            p.w_vcu.T @ alpha_cu + p.w_vcs.T @ alpha_cs
            + p.w_vcr.T @ alpha_cr + p.w_vdu.T @ alpha_du
        )
        f_psi = p.w_scu.T @ alpha_cu + p.w_scs.T @ alpha_cs + c.g_cs * psi[n]
    return GradientBundle(grads, BorderGradients(chi=chi, psi=psi))


# ---------------------------------------------------------------------------
# Augmented LSTM
# ---------------------------------------------------------------------------

def augmented_backward(
    p: aug.AugmentedLstmParams,
    caches: list[aug.AugStepCache],
    head_grads,
    xs=None,
    clip: bool = False,
    psi_final=None,
    chi_final=None,
) -> GradientBundle:
    """BPTT for the augmented cell.

    xs is the full segment input (needed by the tap gradients, which pair
    alpha[n] with x[n+l]); it defaults to the per-step x's stacked, which is
    exact because caches store the segment rows. Tap gradients treat x beyond
    the segment end as zero, matching the forward padding.

    Resolved against finite differences rather than the printed equations:
    the projection gradient is chi[n] q^T[n] (not v^T), the input-gate
    accumulation derivative evaluates gc' at a_cx[n], and the data-update tap
    gradient carries the g_cx throttle factor.
    """
    head_grads = np.atleast_2d(np.asarray(head_grads, dtype=np.float64))
    k = len(caches)
    if head_grads.shape != (k, p.d_v):
        raise ValueError(f"head_grads shape {head_grads.shape} != ({k}, {p.d_v})")
    if xs is None:
        xs = np.vstack([c.x for c in caches])
    else:
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    grads = _zero_grads(p)
    chi = np.zeros((k, p.d_v))
    psi = np.zeros((k, p.d_s))
    f_chi = np.zeros(p.d_v) if chi_final is None else np.asarray(chi_final, dtype=np.float64)
    f_psi = np.zeros(p.d_s) if psi_final is None else np.asarray(psi_final, dtype=np.float64)
    window = p.window
    for n in range(k - 1, -1, -1):
        c = caches[n]
        ov = c.overrides or van.GateOverrides()
        chi[n] = head_grads[n] + f_chi
        beta = p.w_qdr.T @ chi[n]
        rho = beta * c.g_cr
        alpha_cr = beta * c.r * gc_prime(c.a_cr) if ov.cr is None else np.zeros(p.d_s)
        alpha_cr = _maybe_clip(alpha_cr, clip)
        psi[n] = rho * (1.0 - c.r ** 2) + p.w_scr.T @ alpha_cr + f_psi
        alpha_cs = psi[n] * c.s_prev * gc_prime(c.a_cs) if ov.cs is None else np.zeros(p.d_s)
        alpha_cu = psi[n] * c.u * gc_prime(c.a_cu) if ov.cu is None else np.zeros(p.d_s)
        alpha_du = psi[n] * c.g_cu * (1.0 - c.u ** 2)
        alpha_cs = _maybe_clip(alpha_cs, clip)
        alpha_cu = _maybe_clip(alpha_cu, clip)
        alpha_du = _maybe_clip(alpha_du, clip)

        # input-gate path: gamma_cx = dE/dg_cx depends on the gating mode
        gate_active = p.input_gate != "off" and ov.cx is None
        if p.input_gate == "elementwise":
            gamma_cx = alpha_du * c.xi_du
            dxi_du = alpha_du * c.g_cx
        elif p.input_gate == "input":
            gamma_cx = np.zeros(p.d_x)
            for l, tap in enumerate(p.f_xdu.taps):
                if n + l >= k:
                    break
                gamma_cx += (tap.T @ alpha_du) * xs[n + l]
            dxi_du = None  # tap gradients handled directly below
        else:
            gamma_cx = np.zeros(p.d_x)
            dxi_du = alpha_du
        alpha_cx = gamma_cx * gc_prime(c.a_cx) if gate_active else np.zeros(p.d_x)
        alpha_cx = _maybe_clip(alpha_cx, clip)

        for l in range(window):
            if n + l >= k:
                break
            x_nl = xs[n + l]
            grads[f"f_xcu[{l}]"] += np.outer(alpha_cu, x_nl)
            grads[f"f_xcs[{l}]"] += np.outer(alpha_cs, x_nl)
            grads[f"f_xcr[{l}]"] += np.outer(alpha_cr, x_nl)
            grads[f"f_xcx[{l}]"] += np.outer(alpha_cx, x_nl)
            if p.input_gate == "input":
                grads[f"f_xdu[{l}]"] += np.outer(alpha_du, c.g_cx * x_nl)
            else:
                grads[f"f_xdu[{l}]"] += np.outer(dxi_du, x_nl)

        grads["w_scu"] += np.outer(alpha_cu, c.s_prev)
        grads["w_vcu"] += np.outer(alpha_cu, c.v_prev)
        grads["b_cu"] += alpha_cu
        grads["w_scs"] += np.outer(alpha_cs, c.s_prev)
        grads["w_vcs"] += np.outer(alpha_cs, c.v_prev)
        grads["b_cs"] += alpha_cs
        grads["w_scr"] += np.outer(alpha_cr, c.s)
        grads["w_vcr"] += np.outer(alpha_cr, c.v_prev)
        grads["b_cr"] += alpha_cr
        grads["w_scx"] += np.outer(alpha_cx, c.s_prev)
        grads["w_vcx"] += np.outer(alpha_cx, c.v_prev)
        grads["b_cx"] += alpha_cx
        grads["w_vdu"] += np.outer(alpha_du, c.v_prev)
        grads["b_du"] += alpha_du
        grads["w_qdr"] += np.outer(chi[n], c.q)

        f_chi = (
            p.w_vcu.T @ alpha_cu + p.w_vcs.T @ alpha_cs + p.w_vcr.T @ alpha_cr
            + p.w_vcx.T @ alpha_cx + p.w_vdu.T @ alpha_du
        )
        f_psi = (
            p.w_scu.T @ alpha_cu + p.w_scs.T @ alpha_cs + p.w_scx.T @ alpha_cx
            + c.g_cs * psi[n]
        )
    return GradientBundle(grads, BorderGradients(chi=chi, psi=psi))


# ---------------------------------------------------------------------------
# model-generic segment loss and the finite-difference oracle
# ---------------------------------------------------------------------------

def _model_outputs(kind: str, params, xs, overrides=None):
    """Forward a segment and return (per-step observable outputs, trace)."""
    if kind == "standard-rnn":
        trace = rnn_mod.forward_segment(params, xs)
        return trace.r, trace
    if kind == "vanilla-lstm":
        caches = van.forward_segment(params, xs, overrides=overrides)
        return np.vstack([c.v for c in caches]), caches
    if kind == "augmented-lstm":
        caches = aug.forward_segment_aug(params, xs, overrides=overrides)
        return np.vstack([c.v for c in caches]), caches
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def segment_loss(kind: str, params, xs, targets, head) -> float:
    """Total objective over a segment: sum of per-step head losses.

    Summed with math.fsum so the finite-difference oracle is not polluted by
    summation rounding.
    """
    import math

    outputs, _ = _model_outputs(kind, params, xs)
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    return math.fsum(
        head.backward(outputs[n], targets[n])[0] for n in range(outputs.shape[0])
    )


def segment_backward(kind: str, params, xs, targets, head, clip: bool = False):
    """Forward + backward over one segment; returns (loss, GradientBundle)."""
    outputs, trace = _model_outputs(kind, params, xs)
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    k = outputs.shape[0]
    head_grads = np.zeros_like(outputs)
    total = 0.0
    for n in range(k):
        loss, grad = head.backward(outputs[n], targets[n])
        total += loss
        head_grads[n] = grad
    if kind == "standard-rnn":
        bundle = rnn_backward(params, trace, head_grads, clip=clip)
    elif kind == "vanilla-lstm":
        bundle = vanilla_backward(params, trace, head_grads, clip=clip)
    else:
        bundle = augmented_backward(params, trace, head_grads, xs=xs, clip=clip)
    return total, bundle


def random_check_instance(kind: str, seed: int, window: int = 1):
    """Standard random instance for gradient checking: (params, xs, targets).

    Targets sit a small residual away from the model's own outputs. That
    keeps the loss small, which shrinks the finite-difference cancellation
    noise (proportional to ulp(E)/epsilon) far below the gradient magnitudes
    while leaving the gradients fully generic.
    """
    from . import training  # local import; training depends on this module

    rng = np.random.default_rng(0xC0FFEE + 7919 * seed)
    if kind == "standard-rnn":
        params = training.init_params(kind, d_x=3, d_s=4, seed=seed + 1, scale=0.8)
        xs = rng.uniform(-1.0, 1.0, size=(7, 3))
    elif kind == "vanilla-lstm":
        params = training.init_params(kind, d_x=2, d_s=3, seed=seed + 1, scale=0.8)
        xs = rng.uniform(-1.0, 1.0, size=(8, 2))
    elif kind == "augmented-lstm":
        params = training.init_params(kind, d_x=3, d_s=3, d_v=2, window=window,
                                      seed=seed + 1, scale=0.8)
        xs = rng.uniform(-1.0, 1.0, size=(6, 3))
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    outputs, _ = _model_outputs(kind, params, xs)
    targets = outputs + 0.1 * rng.standard_normal(outputs.shape)
    return params, xs, targets


@dataclass
class GradCheckRow:
    name: str
    analytic: float
    numeric: float
    rel_err: float


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_parameter: str
    rows: list[GradCheckRow]

    def passed(self, tol: float = 1e-6) -> bool:
        return self.max_rel_err < tol

    def to_text(self) -> str:
        """Plain-text table: one row per entity at its worst-offending element."""
        lines = [f"{'parameter':<14} {'analytic':>15} {'numeric':>15} {'rel err':>12}"]
        for row in self.rows:
            lines.append(
                f"{row.name:<14} {row.analytic:>15.8e} {row.numeric:>15.8e} {row.rel_err:>12.3e}"
            )
        lines.append(f"max relative error: {self.max_rel_err:.3e} ({self.worst_parameter})")
        return "\n".join(lines)


def _relative_error(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-12)


def grad_check(
    kind: str,
    params,
    xs,
    targets,
    head,
    epsilon: float = 1e-5,
    _corrupt: bool = False,
) -> GradCheckReport:
    """Compare every analytic dE/dtheta_i against central finite differences.

    Clipping stays disabled here: a clipped derivative is deliberately not the
    exact gradient. _corrupt perturbs one analytic entry and exists as a
    negative control for the exit-code path of the CLI.
    """
    if not 1e-7 <= epsilon <= 1e-4:
        raise ValueError(f"epsilon {epsilon} outside [1e-7, 1e-4]")
    _, bundle = segment_backward(kind, params, xs, targets, head, clip=False)
    analytic = bundle.grads
    if _corrupt:
        first = next(iter(analytic))
        analytic[first] = analytic[first] + 1.0

    entities = params.entities()
    rows: list[GradCheckRow] = []
    max_rel, worst = 0.0, ""
    for name, arr in entities.items():
        worst_row = GradCheckRow(name, 0.0, 0.0, -1.0)
        flat_an = np.asarray(analytic[name], dtype=np.float64).ravel()
        for i in range(arr.size):
            perturbed = {k: v.copy() for k, v in entities.items()}
            flat = perturbed[name].ravel()
            orig = flat[i]
            flat[i] = orig + epsilon
            loss_plus = segment_loss(kind, params.replace_entities(perturbed), xs, targets, head)
            flat[i] = orig - epsilon
            loss_minus = segment_loss(kind, params.replace_entities(perturbed), xs, targets, head)
            numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
            rel = _relative_error(flat_an[i], numeric)
            if rel > worst_row.rel_err:
                worst_row = GradCheckRow(name, float(flat_an[i]), float(numeric), rel)
        rows.append(worst_row)
        if worst_row.rel_err > max_rel:
            max_rel, worst = worst_row.rel_err, name
    return GradCheckReport(max_rel_err=max_rel, worst_parameter=worst, rows=rows)
