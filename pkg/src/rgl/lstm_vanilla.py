"""Vanilla LSTM cell: forward pass, gate overrides, and data standardization.

All signals live in R^{d_s} except the input x in R^{d_x}. One step computes

    a_cu = W_xcu x + W_scu s_prev + W_vcu v_prev + b_cu      g_cu = gc(a_cu)
    a_cs = W_xcs x + W_scs s_prev + W_vcs v_prev + b_cs      g_cs = gc(a_cs)
    a_du = W_xdu x + W_vdu v_prev + b_du                     u    = gd(a_du)
    s    = g_cs * s_prev + g_cu * u
    a_cr = W_xcr x + W_scr s + W_vcr v_prev + b_cr           g_cr = gc(a_cr)
    r    = gd(s)
    v    = g_cr * r

Note a_cr reads the CURRENT state s; the evaluation order above is the only
causally consistent one. Gate overrides exist so diagnostics can pin gates at
exact constants (e.g. the Constant Error Carousel mode g_cs=1, g_cu=g_cr=0,
which finite logistic arguments can never produce).
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .numerics import DimensionMismatchError, as_matrix, as_vector, gc, gd

__all__ = [
    "ConstantFeatureError",
    "TooFewSamplesError",
    "VanillaLstmParams",
    "GateOverrides",
    "StepCache",
    "forward_step",
    "forward_segment",
    "step_fn",
    "StandardizationStats",
    "fit_standardization",
    "standardize",
]


class ConstantFeatureError(ValueError):
    """Raised when a data element has zero variance and cannot be standardized."""


class TooFewSamplesError(ValueError):
    """Raised when fewer than two samples are available for standardization."""


# Parameter entities in declaration order; this order also fixes the
# checkpoint layout and the gradient-bundle keys.
_VANILLA_ENTITY_ORDER = (
    "w_xcu", "w_scu", "w_vcu", "b_cu",
    "w_xcs", "w_scs", "w_vcs", "b_cs",
    "w_xcr", "w_scr", "w_vcr", "b_cr",
    "w_xdu", "w_vdu", "b_du",
)


@dataclass(frozen=True)
class VanillaLstmParams:
    """The fifteen trainable entities of the Vanilla cell."""

    w_xcu: np.ndarray
    w_scu: np.ndarray
    w_vcu: np.ndarray
    b_cu: np.ndarray
    w_xcs: np.ndarray
    w_scs: np.ndarray
    w_vcs: np.ndarray
    b_cs: np.ndarray
    w_xcr: np.ndarray
    w_scr: np.ndarray
    w_vcr: np.ndarray
    b_cr: np.ndarray
    w_xdu: np.ndarray
    w_vdu: np.ndarray
    b_du: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            arr = np.asarray(getattr(self, f.name), dtype=np.float64)
            arr = as_vector(arr, f.name) if f.name.startswith("b_") else as_matrix(arr, f.name)
            object.__setattr__(self, f.name, arr)
        d_s, d_x = self.w_xcu.shape
        expected = {
            "w_xcu": (d_s, d_x), "w_xcs": (d_s, d_x), "w_xcr": (d_s, d_x), "w_xdu": (d_s, d_x),
            "w_scu": (d_s, d_s), "w_scs": (d_s, d_s), "w_scr": (d_s, d_s),
            "w_vcu": (d_s, d_s), "w_vcs": (d_s, d_s), "w_vcr": (d_s, d_s), "w_vdu": (d_s, d_s),
            "b_cu": (d_s,), "b_cs": (d_s,), "b_cr": (d_s,), "b_du": (d_s,),
        }
        for name, shape in expected.items():
            got = getattr(self, name).shape
            if got != shape:
                raise DimensionMismatchError(f"{name}: expected shape {shape}, got {got}")

    @property
    def d_s(self) -> int:
        return self.w_xcu.shape[0]

    @property
    def d_x(self) -> int:
        return self.w_xcu.shape[1]

    @property
    def d_v(self) -> int:
        return self.d_s  # value signal shares the state dimension

    def entities(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in _VANILLA_ENTITY_ORDER}

    def replace_entities(self, ent: dict[str, np.ndarray]) -> "VanillaLstmParams":
        return VanillaLstmParams(**{name: ent[name] for name in _VANILLA_ENTITY_ORDER})

    @classmethod
    def zeros(cls, d_x: int, d_s: int) -> "VanillaLstmParams":
        def mk(name):
            if name.startswith("b_"):
                return np.zeros(d_s)
            return np.zeros((d_s, d_x)) if name.startswith("w_x") else np.zeros((d_s, d_s))
        return cls(**{name: mk(name) for name in _VANILLA_ENTITY_ORDER})


@dataclass(frozen=True)
class GateOverrides:
    """Optional constant vectors pinning gate outputs (diagnostics/tests only).

    An overridden gate contributes no accumulation derivative in the backward
    pass, matching the fact that it no longer depends on its accumulation.
    The cx slot only applies to the augmented cell.
    """

    cu: np.ndarray | None = None
    cs: np.ndarray | None = None
    cr: np.ndarray | None = None
    cx: np.ndarray | None = None

    @classmethod
    def cec(cls, d_s: int) -> "GateOverrides":
        """Constant Error Carousel: state gate pinned at 1, update/readout at 0."""
        return cls(cu=np.zeros(d_s), cs=np.ones(d_s), cr=np.zeros(d_s))

    @classmethod
    def constants(cls, d_s: int, cu=None, cs=None, cr=None, cx=None, d_x: int | None = None) -> "GateOverrides":
        def full(val, dim):
            return None if val is None else np.full(dim, float(val))
        return cls(cu=full(cu, d_s), cs=full(cs, d_s), cr=full(cr, d_s),
                   cx=full(cx, d_s if d_x is None else d_x))


@dataclass
class StepCache:
    """Every intermediate signal of one forward step, as the backward pass needs it."""

    x: np.ndarray
    s_prev: np.ndarray
    v_prev: np.ndarray
    a_cu: np.ndarray
    a_cs: np.ndarray
    a_cr: np.ndarray
    a_du: np.ndarray
    g_cu: np.ndarray
    g_cs: np.ndarray
    g_cr: np.ndarray
    u: np.ndarray
    s: np.ndarray
    r: np.ndarray
    v: np.ndarray
    overrides: GateOverrides | None = None


def _gate(a: np.ndarray, override: np.ndarray | None) -> np.ndarray:
    return gc(a) if override is None else override


def forward_step(
    p: VanillaLstmParams,
    x,
    s_prev,
    v_prev,
    overrides: GateOverrides | None = None,
) -> StepCache:
    """One Vanilla LSTM step; see the module docstring for the equations."""
    x = as_vector(x, "x")
    s_prev = as_vector(s_prev, "s_prev")
    v_prev = as_vector(v_prev, "v_prev")
    if x.shape != (p.d_x,) or s_prev.shape != (p.d_s,) or v_prev.shape != (p.d_s,):
        raise DimensionMismatchError(
            f"forward_step: got x{x.shape} s{s_prev.shape} v{v_prev.shape}, "
            f"params expect d_x={p.d_x} d_s={p.d_s}"
        )
    ov = overrides or GateOverrides()

    a_cu = p.w_xcu @ x + p.w_scu @ s_prev + p.w_vcu @ v_prev + p.b_cu
    a_cs = p.w_xcs @ x + p.w_scs @ s_prev + p.w_vcs @ v_prev + p.b_cs
    a_du = p.w_xdu @ x + p.w_vdu @ v_prev + p.b_du
    u = gd(a_du)
    g_cu = _gate(a_cu, ov.cu)
    g_cs = _gate(a_cs, ov.cs)
    s = g_cs * s_prev + g_cu * u
    a_cr = p.w_xcr @ x + p.w_scr @ s + p.w_vcr @ v_prev + p.b_cr
    g_cr = _gate(a_cr, ov.cr)
    r = gd(s)
    v = g_cr * r
    return StepCache(
        x=x, s_prev=s_prev, v_prev=v_prev,
        a_cu=a_cu, a_cs=a_cs, a_cr=a_cr, a_du=a_du,
        g_cu=g_cu, g_cs=g_cs, g_cr=g_cr,
        u=u, s=s, r=r, v=v, overrides=overrides,
    )


def forward_segment(
    p: VanillaLstmParams,
    xs,
    s_init=None,
    v_init=None,
    overrides: GateOverrides | None = None,
) -> list[StepCache]:
    """Unroll the cell over a segment; state and value start at zero by default."""
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    if xs.shape[0] < 1:
        raise ValueError("segment must contain at least one step")
    s_prev = np.zeros(p.d_s) if s_init is None else as_vector(s_init, "s_init")
    v_prev = np.zeros(p.d_s) if v_init is None else as_vector(v_init, "v_init")
    caches = []
    for n in range(xs.shape[0]):
        cache = forward_step(p, xs[n], s_prev, v_prev, overrides)
        caches.append(cache)
        s_prev, v_prev = cache.s, cache.v
    return caches


def step_fn(p: VanillaLstmParams, carry, x):
    """Step adapter for the segmentation harness; carry is (s_prev, v_prev)."""
    if carry is None:
        carry = (np.zeros(p.d_s), np.zeros(p.d_s))
    cache = forward_step(p, x, carry[0], carry[1])
    return (cache.s, cache.v), cache


# ---------------------------------------------------------------------------
# training-set standardization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StandardizationStats:
    mu: np.ndarray
    sigma: np.ndarray  # per-element sample standard deviations (N-1 convention)


def fit_standardization(x0) -> StandardizationStats:
    """Mean and per-element standard deviation of a training set (rows = samples).

    The full auto-covariance is formed with the 1/(N-1) convention, but only
    its diagonal enters the transform.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    n = x0.shape[0]
    if n < 2:
        raise TooFewSamplesError(f"standardization needs N >= 2 samples, got {n}")
    mu = x0.mean(axis=0)
    centered = x0 - mu
    cov = (centered.T @ centered) / (n - 1)
    var = np.diag(cov).copy()
    bad = np.flatnonzero(var <= 0.0)
    if bad.size:
        raise ConstantFeatureError(
            f"element(s) {bad.tolist()} have zero variance and cannot be standardized"
        )
    return StandardizationStats(mu=mu, sigma=np.sqrt(var))


def standardize(stats: StandardizationStats, x0) -> np.ndarray:
    """Apply (x0 - mu) / sigma elementwise, with stats fitted on the training set."""
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    if x0.shape[1] != stats.mu.shape[0]:
        raise DimensionMismatchError(
            f"data has {x0.shape[1]} elements per sample, stats cover {stats.mu.shape[0]}"
        )
    return (x0 - stats.mu) / stats.sigma
