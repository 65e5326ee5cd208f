"""Augmented LSTM cell: input context windows, input gate, projection layer.

Three extensions over the Vanilla cell:

 * every input term W_x x[n] becomes a non-causal matrix-tap convolution
   xi[n] = sum_{l=0}^{L-1} W_x[l] x[n+l], with x zero beyond the segment end;
 * the composite data-update input is throttled by a new control-input gate
   g_cx, so a_du = g_cx * xi_xdu + W_vdu v_prev + b_du;
 * the value signal is projected, q = g_cr * r and v = W_qdr q with
   v in R^{d_v}, d_v <= d_s.

The printed definition gives g_cx dimension d_x while xi_xdu has dimension
d_s, so the elementwise product is well-formed only when d_x == d_s. This
module enforces that when input_gate="elementwise" (the literal reading) and
offers input_gate="input", where g_cx in R^{d_x} gates the raw window samples
x[n+l] instead, which is well-formed for any d_x. input_gate="off" drops the
gate entirely (g_cx = 1), recovering the plain convolution.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .lstm_vanilla import GateOverrides, VanillaLstmParams
from .numerics import DimensionMismatchError, as_matrix, as_vector, gc, gd

__all__ = [
    "ContextFilter",
    "AugmentedLstmParams",
    "AugStepCache",
    "context_conv",
    "forward_step_aug",
    "forward_segment_aug",
    "step_fn_aug",
    "from_vanilla",
]

INPUT_GATE_MODES = ("elementwise", "input", "off")


@dataclass(frozen=True)
class ContextFilter:
    """Non-causal window filter: taps W[0..L-1], each (rows x d_x)."""

    taps: tuple[np.ndarray, ...]

    def __post_init__(self):
        taps = tuple(as_matrix(t, f"tap[{i}]") for i, t in enumerate(self.taps))
        if not taps:
            raise ValueError("context filter needs at least one tap (L >= 1)")
        shape = taps[0].shape
        if any(t.shape != shape for t in taps):
            raise DimensionMismatchError(
                f"all taps must share one shape, got {[t.shape for t in taps]}"
            )
        object.__setattr__(self, "taps", taps)

    @property
    def length(self) -> int:
        return len(self.taps)

    @property
    def rows(self) -> int:
        return self.taps[0].shape[0]

    @property
    def cols(self) -> int:
        return self.taps[0].shape[1]

    @classmethod
    def zeros(cls, length: int, rows: int, cols: int) -> "ContextFilter":
        return cls(tuple(np.zeros((rows, cols)) for _ in range(length)))


def context_conv(f: ContextFilter, xs: np.ndarray, n: int) -> np.ndarray:
    """sum_l W[l] x[n+l] over the segment xs, zero-padded past the end."""
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    k = xs.shape[0]
    if not 0 <= n < k:
        raise IndexError(f"step {n} outside segment of {k} steps")
    out = np.zeros(f.rows)
    for l, tap in enumerate(f.taps):
        if n + l >= k:
            break
        out += tap @ xs[n + l]
    return out


# Entity layout for gradients/serialization. Tap entities are expanded as
# f_xcu[0], f_xcu[1], ... at runtime.
_AUG_GROUPS = (
    ("f_xcu", "w_scu", "w_vcu", "b_cu"),
    ("f_xcs", "w_scs", "w_vcs", "b_cs"),
    ("f_xcr", "w_scr", "w_vcr", "b_cr"),
    ("f_xcx", "w_scx", "w_vcx", "b_cx"),
    ("f_xdu", "w_vdu", "b_du"),
    ("w_qdr",),
)


@dataclass(frozen=True)
class AugmentedLstmParams:
    f_xcu: ContextFilter
    w_scu: np.ndarray
    w_vcu: np.ndarray
    b_cu: np.ndarray
    f_xcs: ContextFilter
    w_scs: np.ndarray
    w_vcs: np.ndarray
    b_cs: np.ndarray
    f_xcr: ContextFilter
    w_scr: np.ndarray
    w_vcr: np.ndarray
    b_cr: np.ndarray
    f_xcx: ContextFilter
    w_scx: np.ndarray
    w_vcx: np.ndarray
    b_cx: np.ndarray
    f_xdu: ContextFilter
    w_vdu: np.ndarray
    b_du: np.ndarray
    w_qdr: np.ndarray
    input_gate: str = "elementwise"

    def __post_init__(self):
        d_s, d_x = self.f_xcu.rows, self.f_xcu.cols
        d_v = self.w_qdr.shape[0] if np.ndim(self.w_qdr) == 2 else -1
        l = self.f_xcu.length
        if self.input_gate not in INPUT_GATE_MODES:
            raise ValueError(f"input_gate must be one of {INPUT_GATE_MODES}, got {self.input_gate!r}")
        mats = {
            "w_scu": (d_s, d_s), "w_scs": (d_s, d_s), "w_scr": (d_s, d_s),
            "w_scx": (d_x, d_s),
            "w_vcu": (d_s, d_v), "w_vcs": (d_s, d_v), "w_vcr": (d_s, d_v),
            "w_vcx": (d_x, d_v), "w_vdu": (d_s, d_v),
            "w_qdr": (d_v, d_s),
        }
        for name, shape in mats.items():
            arr = as_matrix(getattr(self, name), name)
            if arr.shape != shape:
                raise DimensionMismatchError(f"{name}: expected shape {shape}, got {arr.shape}")
            object.__setattr__(self, name, arr)
        vecs = {"b_cu": d_s, "b_cs": d_s, "b_cr": d_s, "b_cx": d_x, "b_du": d_s}
        for name, dim in vecs.items():
            arr = as_vector(getattr(self, name), name)
            if arr.shape != (dim,):
                raise DimensionMismatchError(f"{name}: expected shape ({dim},), got {arr.shape}")
            object.__setattr__(self, name, arr)
        filt = {"f_xcu": (d_s, d_x), "f_xcs": (d_s, d_x), "f_xcr": (d_s, d_x),
                "f_xcx": (d_x, d_x), "f_xdu": (d_s, d_x)}
        for name, (rows, cols) in filt.items():
            f = getattr(self, name)
            if not isinstance(f, ContextFilter):
                f = ContextFilter(tuple(f))
                object.__setattr__(self, name, f)
            if (f.rows, f.cols) != (rows, cols) or f.length != l:
                raise DimensionMismatchError(
                    f"{name}: expected L={l} taps of shape ({rows}, {cols}), "
                    f"got L={f.length} of shape ({f.rows}, {f.cols})"
                )
        if d_v > d_s:
            raise DimensionMismatchError(f"projection may not increase dimension: d_v={d_v} > d_s={d_s}")
        if self.input_gate == "elementwise" and d_x != d_s:
            raise DimensionMismatchError(
                f"elementwise input gate needs d_x == d_s (g_cx in R^{d_x} vs xi_xdu in R^{d_s}); "
                f"use input_gate='input' or 'off' when d_x != d_s"
            )

    @property
    def d_s(self) -> int:
        return self.f_xcu.rows

    @property
    def d_x(self) -> int:
        return self.f_xcu.cols

    @property
    def d_v(self) -> int:
        return self.w_qdr.shape[0]

    @property
    def window(self) -> int:
        return self.f_xcu.length

    def entities(self) -> dict[str, np.ndarray]:
        """Flat name -> array view, taps expanded as name[l]."""
        out: dict[str, np.ndarray] = {}
        for group in _AUG_GROUPS:
            for name in group:
                val = getattr(self, name)
                if isinstance(val, ContextFilter):
                    for l, tap in enumerate(val.taps):
                        out[f"{name}[{l}]"] = tap
                else:
                    out[name] = val
        return out

    def replace_entities(self, ent: dict[str, np.ndarray]) -> "AugmentedLstmParams":
        kwargs = {"input_gate": self.input_gate}
        for group in _AUG_GROUPS:
            for name in group:
                if isinstance(getattr(self, name), ContextFilter):
                    kwargs[name] = ContextFilter(
                        tuple(ent[f"{name}[{l}]"] for l in range(self.window))
                    )
                else:
                    kwargs[name] = ent[name]
        return AugmentedLstmParams(**kwargs)

    @classmethod
    def zeros(cls, d_x: int, d_s: int, d_v: int, window: int,
              input_gate: str = "elementwise") -> "AugmentedLstmParams":
        return cls(
            f_xcu=ContextFilter.zeros(window, d_s, d_x),
            w_scu=np.zeros((d_s, d_s)), w_vcu=np.zeros((d_s, d_v)), b_cu=np.zeros(d_s),
            f_xcs=ContextFilter.zeros(window, d_s, d_x),
            w_scs=np.zeros((d_s, d_s)), w_vcs=np.zeros((d_s, d_v)), b_cs=np.zeros(d_s),
            f_xcr=ContextFilter.zeros(window, d_s, d_x),
            w_scr=np.zeros((d_s, d_s)), w_vcr=np.zeros((d_s, d_v)), b_cr=np.zeros(d_s),
            f_xcx=ContextFilter.zeros(window, d_x, d_x),
            w_scx=np.zeros((d_x, d_s)), w_vcx=np.zeros((d_x, d_v)), b_cx=np.zeros(d_x),
            f_xdu=ContextFilter.zeros(window, d_s, d_x),
            w_vdu=np.zeros((d_s, d_v)), b_du=np.zeros(d_s),
            w_qdr=np.zeros((d_v, d_s)),
            input_gate=input_gate,
        )


def from_vanilla(p: VanillaLstmParams, input_gate: str = "off") -> AugmentedLstmParams:
    """Embed Vanilla parameters as the L=1, identity-projection reduction."""
    d_s, d_x = p.d_s, p.d_x
    base = AugmentedLstmParams.zeros(d_x, d_s, d_s, 1, input_gate=input_gate)
    return replace(
        base,
        f_xcu=ContextFilter((p.w_xcu.copy(),)),
        w_scu=p.w_scu.copy(), w_vcu=p.w_vcu.copy(), b_cu=p.b_cu.copy(),
        f_xcs=ContextFilter((p.w_xcs.copy(),)),
        w_scs=p.w_scs.copy(), w_vcs=p.w_vcs.copy(), b_cs=p.b_cs.copy(),
        f_xcr=ContextFilter((p.w_xcr.copy(),)),
        w_scr=p.w_scr.copy(), w_vcr=p.w_vcr.copy(), b_cr=p.b_cr.copy(),
        f_xdu=ContextFilter((p.w_xdu.copy(),)),
        w_vdu=p.w_vdu.copy(), b_du=p.b_du.copy(),
        w_qdr=np.eye(d_s),
    )


@dataclass
class AugStepCache:
    """Forward cache of one augmented step (composite inputs included)."""

    x: np.ndarray
    s_prev: np.ndarray
    v_prev: np.ndarray
    xi_cu: np.ndarray
    xi_cs: np.ndarray
    xi_cr: np.ndarray
    xi_cx: np.ndarray
    xi_du: np.ndarray
    a_cu: np.ndarray
    a_cs: np.ndarray
    a_cr: np.ndarray
    a_cx: np.ndarray
    a_du: np.ndarray
    g_cu: np.ndarray
    g_cs: np.ndarray
    g_cr: np.ndarray
    g_cx: np.ndarray
    u: np.ndarray
    s: np.ndarray
    r: np.ndarray
    q: np.ndarray
    v: np.ndarray
    overrides: GateOverrides | None = None


def _gate(a: np.ndarray, override: np.ndarray | None) -> np.ndarray:
    return gc(a) if override is None else override


def forward_step_aug(
    p: AugmentedLstmParams,
    xs,
    n: int,
    s_prev,
    v_prev,
    overrides: GateOverrides | None = None,
) -> AugStepCache:
    """One augmented step at index n of the segment xs (the window reads ahead)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    s_prev = as_vector(s_prev, "s_prev")
    v_prev = as_vector(v_prev, "v_prev")
    if xs.shape[1] != p.d_x or s_prev.shape != (p.d_s,) or v_prev.shape != (p.d_v,):
        raise DimensionMismatchError(
            f"forward_step_aug: got xs{xs.shape} s{s_prev.shape} v{v_prev.shape}, "
            f"params expect d_x={p.d_x} d_s={p.d_s} d_v={p.d_v}"
        )
    ov = overrides or GateOverrides()

    xi_cu = context_conv(p.f_xcu, xs, n)
    xi_cs = context_conv(p.f_xcs, xs, n)
    xi_cr = context_conv(p.f_xcr, xs, n)
    xi_cx = context_conv(p.f_xcx, xs, n)
    xi_du = context_conv(p.f_xdu, xs, n)

    a_cu = xi_cu + p.w_scu @ s_prev + p.w_vcu @ v_prev + p.b_cu
    a_cs = xi_cs + p.w_scs @ s_prev + p.w_vcs @ v_prev + p.b_cs
    g_cu = _gate(a_cu, ov.cu)
    g_cs = _gate(a_cs, ov.cs)

    a_cx = xi_cx + p.w_scx @ s_prev + p.w_vcx @ v_prev + p.b_cx
    if p.input_gate == "off":
        g_cx = np.ones(p.d_s)
        a_du = xi_du + p.w_vdu @ v_prev + p.b_du
    else:
        g_cx = _gate(a_cx, ov.cx)
        if p.input_gate == "elementwise":
            a_du = g_cx * xi_du + p.w_vdu @ v_prev + p.b_du
        else:  # "input": gate the raw window samples before the taps
            k = xs.shape[0]
            gated = np.zeros(p.d_s)
            for l, tap in enumerate(p.f_xdu.taps):
                if n + l >= k:
                    break
                gated += tap @ (g_cx * xs[n + l])
            a_du = gated + p.w_vdu @ v_prev + p.b_du

    u = gd(a_du)
    s = g_cs * s_prev + g_cu * u
    a_cr = xi_cr + p.w_scr @ s + p.w_vcr @ v_prev + p.b_cr
    g_cr = _gate(a_cr, ov.cr)
    r = gd(s)
    q = g_cr * r
    v = p.w_qdr @ q
    return AugStepCache(
        x=xs[n].copy(), s_prev=s_prev, v_prev=v_prev,
        xi_cu=xi_cu, xi_cs=xi_cs, xi_cr=xi_cr, xi_cx=xi_cx, xi_du=xi_du,
        a_cu=a_cu, a_cs=a_cs, a_cr=a_cr, a_cx=a_cx, a_du=a_du,
        g_cu=g_cu, g_cs=g_cs, g_cr=g_cr, g_cx=g_cx,
        u=u, s=s, r=r, q=q, v=v, overrides=overrides,
    )


def forward_segment_aug(
    p: AugmentedLstmParams,
    xs,
    s_init=None,
    v_init=None,
    overrides: GateOverrides | None = None,
) -> list[AugStepCache]:
    """Unroll over a segment; the whole xs stays visible to every step's window."""
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    if xs.shape[0] < 1:
        raise ValueError("segment must contain at least one step")
    s_prev = np.zeros(p.d_s) if s_init is None else as_vector(s_init, "s_init")
    v_prev = np.zeros(p.d_v) if v_init is None else as_vector(v_init, "v_init")
    caches = []
    for n in range(xs.shape[0]):
        cache = forward_step_aug(p, xs, n, s_prev, v_prev, overrides)
        caches.append(cache)
        s_prev, v_prev = cache.s, cache.v
    return caches


def step_fn_aug(p: AugmentedLstmParams, carry, x):
    """Degenerate L=1 step adapter for the segmentation harness."""
    if p.window != 1:
        raise ValueError("step adapter only supports L=1 (wider windows need the whole segment)")
    if carry is None:
        carry = (np.zeros(p.d_s), np.zeros(p.d_v))
    cache = forward_step_aug(p, np.atleast_2d(x), 0, carry[0], carry[1])
    return (cache.s, cache.v), cache
