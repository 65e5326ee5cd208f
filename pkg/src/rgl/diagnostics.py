"""Gradient-flow analysis: Jacobian products, the Q/diag split, decay curves.

For the standard RNN the one-step backward Jacobian is
diag(gd'(s[k])) W_r^T, so the long-range factor dpsi[n]/dpsi[l] is a product
of l-n such matrices and its norm behaves like ||W_r||^(l-n): vanishing or
exploding. For the LSTM the one-step Jacobian splits into
Q(k-1,k) + diag(g_cs[k]); when the Q-carrying weights are small the surviving
term is the product of state-gate diagonals, which the cell can hold at 1
(the Constant Error Carousel).

All analytic Jacobians here follow the same transpose discipline as the
backward passes and are validated against the backward recursion itself, not
against printed symbol order. "Norm" means the spectral norm, computed by
power iteration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import bptt
from .lstm_vanilla import GateOverrides, StepCache, VanillaLstmParams, forward_segment
from .numerics import gc_prime, spectral_norm
from .rnn import RnnTrace, StandardRnnParams, forward_segment as rnn_forward_segment

__all__ = [
    "rnn_flow",
    "rnn_one_step_flow",
    "lstm_one_step_flow",
    "long_range_flow",
    "FlowReport",
    "flow_report",
    "decay_curve",
    "decay_curve_csv",
    "QRegimesAudit",
    "q_regimes_audit",
]


def rnn_one_step_flow(p: StandardRnnParams, trace: RnnTrace, k: int) -> np.ndarray:
    """dpsi[k]/dpsi[k+1] = diag(gd'(s[k])) W_r^T from the backward recursion."""
    if not 0 <= k < trace.steps:
        raise IndexError(f"step {k} outside trace of {trace.steps} steps")
    return (1.0 - trace.r[k] ** 2)[:, None] * p.w_r.T


def rnn_flow(p: StandardRnnParams, trace: RnnTrace, n: int, l: int) -> np.ndarray:
    """dpsi[n]/dpsi[l]: ordered product of one-step Jacobians (identity at l == n)."""
    if not 0 <= n <= l <= trace.steps - 1:
        raise IndexError(f"need 0 <= n <= l <= K-1, got n={n} l={l} K={trace.steps}")
    out = np.eye(p.d_s)
    for k in range(n, l):
        out = out @ rnn_one_step_flow(p, trace, k)
    return out


def lstm_one_step_flow(
    p: VanillaLstmParams, caches: list[StepCache], k: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """dpsi[k-1]/dpsi[k] for the Vanilla cell, split as (jacobian, Q, diag(g_cs[k])).

    Assembled from the trace signals at steps k-1 and k. Overridden gates are
    constants, so their derivative factors drop out, exactly as in the
    backward pass.
    """
    if not 1 <= k < len(caches):
        raise IndexError(f"need 1 <= k <= K-1, got k={k} K={len(caches)}")
    prev, cur = caches[k - 1], caches[k]
    ov_prev = prev.overrides or GateOverrides()
    ov_cur = cur.overrides or GateOverrides()
    d_s = p.d_s

    d_cu = np.zeros(d_s) if ov_cur.cu is not None else cur.u * gc_prime(cur.a_cu)
    d_cs = np.zeros(d_s) if ov_cur.cs is not None else cur.s_prev * gc_prime(cur.a_cs)
    d_du = cur.g_cu * (1.0 - cur.u ** 2)

    # pullback of chi[k-1] into psi[k-1] at step k-1
    pull = np.diag(prev.g_cr * (1.0 - prev.r ** 2))
    if ov_prev.cr is None:
        pull = pull + p.w_scr.T @ np.diag(prev.r * gc_prime(prev.a_cr))

    chi_path = p.w_vcu.T * d_cu + p.w_vcs.T * d_cs + p.w_vdu.T * d_du  # columnwise diag scaling
    psi_path = p.w_scu.T * d_cu + p.w_scs.T * d_cs
    diag_part = np.diag(cur.g_cs)
    q_part = pull @ chi_path + psi_path
    return q_part + diag_part, q_part, diag_part


def long_range_flow(one_step_flows, n: int = 0, l: int | None = None) -> tuple[np.ndarray, float]:
    """Ordered product of one-step flows covering k = n+1..l, plus its norm."""
    flows = list(one_step_flows)
    if not flows:
        raise ValueError("need at least one one-step flow")
    l = len(flows) if l is None else l
    span = flows[n:l]
    out = np.eye(flows[0].shape[0])
    for f in span:
        out = out @ f
    return out, spectral_norm(out)


@dataclass
class FlowReport:
    one_step_norms: list[float]
    long_range: dict[tuple[int, int], float]
    classification: str

    def to_text(self) -> str:
        lines = ["one-step Jacobian norms:"]
        lines += [f"  k={k + 1}: {v:.6e}" for k, v in enumerate(self.one_step_norms)]
        lines.append("long-range ||dpsi[n]/dpsi[l]||:")
        lines += [f"  n={n} l={l}: {v:.6e}" for (n, l), v in sorted(self.long_range.items())]
        lines.append(f"classification: {self.classification}")
        return "\n".join(lines)


def _classify(step_ratio: float) -> str:
    # geometric per-step retention of the gradient norm
    if step_ratio < 0.99:
        return "vanishing"
    if step_ratio > 1.01:
        return "exploding"
    return "sustained"


def flow_report(kind: str, params, xs, pairs=None, overrides=None) -> FlowReport:
    """One-step norms plus requested long-range ratios over a forward run."""
    if kind == "standard-rnn":
        trace = rnn_forward_segment(params, xs)
        k_steps = trace.steps
        flows = [rnn_one_step_flow(params, trace, k) for k in range(k_steps - 1)]
    elif kind == "vanilla-lstm":
        caches = forward_segment(params, xs, overrides=overrides)
        k_steps = len(caches)
        flows = [lstm_one_step_flow(params, caches, k)[0] for k in range(1, k_steps)]
    else:
        raise ValueError(f"flow analysis covers standard-rnn and vanilla-lstm, not {kind!r}")
    norms = [spectral_norm(f) for f in flows]
    pairs = [(0, k_steps - 1)] if pairs is None else list(pairs)
    long_range = {}
    for n, l in pairs:
        _, nrm = long_range_flow(flows, n, l)
        long_range[(n, l)] = nrm
    total = long_range.get((0, k_steps - 1))
    if total is None:
        total = long_range_flow(flows)[1]
    ratio = total ** (1.0 / max(1, k_steps - 1))
    return FlowReport(one_step_norms=norms, long_range=long_range, classification=_classify(ratio))


def decay_curve(
    kind: str,
    params,
    xs,
    head=None,
    target=None,
    terminal_psi_seed=None,
    overrides=None,
    clip: bool = False,
) -> np.ndarray:
    """||psi[n]|| versus n for a loss acting only at the terminal step.

    The terminal gradient comes from the head and target when given;
    otherwise psi[K] is seeded directly (ones by default), which also covers
    configurations whose readout path is gated shut (e.g. the CEC override).
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    k = xs.shape[0]
    if kind == "standard-rnn":
        trace = rnn_forward_segment(params, xs)
        dEdr = np.zeros((k, params.d_s))
        if head is not None and target is not None:
            _, dEdr[k - 1] = head.backward(trace.r[k - 1], target)
            bundle = bptt.rnn_backward(params, trace, dEdr, clip=clip)
        else:
            seed = np.ones(params.d_s) if terminal_psi_seed is None else terminal_psi_seed
            bundle = bptt.rnn_backward(params, trace, dEdr, clip=clip, psi_final=seed)
    elif kind == "vanilla-lstm":
        caches = forward_segment(params, xs, overrides=overrides)
        head_grads = np.zeros((k, params.d_s))
        if head is not None and target is not None:
            _, head_grads[k - 1] = head.backward(caches[k - 1].v, target)
            bundle = bptt.vanilla_backward(params, caches, head_grads, clip=clip)
        else:
            seed = np.ones(params.d_s) if terminal_psi_seed is None else terminal_psi_seed
            bundle = bptt.vanilla_backward(params, caches, head_grads, clip=clip, psi_final=seed)
    else:
        raise ValueError(f"decay curves cover standard-rnn and vanilla-lstm, not {kind!r}")
    return np.linalg.norm(bundle.border.psi, axis=1)


def decay_curve_csv(norms: np.ndarray) -> str:
    """Two-column CSV (step index, gradient norm)."""
    lines = ["step,psi_norm"]
    lines += [f"{n},{norms[n]:.17g}" for n in range(len(norms))]
    return "\n".join(lines) + "\n"


@dataclass
class QRegimesAudit:
    norms: dict[str, float]
    conditions: dict[str, bool]
    alternatives: dict[str, bool]

    def to_text(self) -> str:
        lines = ["Q-term weight norms (spectral):"]
        lines += [f"  ||{k}|| = {v:.6f}" for k, v in self.norms.items()]
        lines.append("norm conditions:")
        lines += [f"  {k}: {'holds' if v else 'FAILS'}" for k, v in self.conditions.items()]
        lines.append("alternatives (norm parts):")
        lines += [f"  {k}: {'holds' if v else 'FAILS'}" for k, v in self.alternatives.items()]
        return "\n".join(lines)


def q_regimes_audit(p: VanillaLstmParams) -> QRegimesAudit:
    """Check the small-norm sufficient conditions that keep ||Q|| < 1.

    All data signals feeding Q have dynamic range 2, so each weight matrix in
    the Q term needs norm < 1/2 (W_vdu only multiplies a range-2 signal once,
    so < 1 suffices in the first alternative).
    """
    names = ("w_scu", "w_vcu", "w_scs", "w_vcs", "w_scr", "w_vdu")
    norms = {n: spectral_norm(getattr(p, n)) for n in names}
    half = {n: norms[n] < 0.5 for n in names}
    conditions = {f"||{n}|| < 1/2": half[n] for n in names}
    conditions["||w_vdu|| < 1"] = norms["w_vdu"] < 1.0
    alternatives = {
        "small-q-weights": half["w_scu"] and half["w_vcu"] and half["w_scs"]
        and half["w_vcs"] and norms["w_vdu"] < 1.0,
        "saturated-readout": half["w_scr"] and half["w_scu"] and half["w_scs"],
        "saturated-readout-and-gate": half["w_scu"] and half["w_scs"],
        "readout-gate-off": half["w_scu"] and half["w_scs"],
    }
    return QRegimesAudit(norms=norms, conditions=conditions, alternatives=alternatives)
