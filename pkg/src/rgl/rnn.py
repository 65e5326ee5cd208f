"""Canonical and standard RNN cells plus the backward-Euler constructor.

The canonical cell is

    s[n] = W_s s[n-1] + W_r r[n-1] + W_x x[n] + theta_s
    r[n] = tanh(s[n])

obtained by discretizing a single-delay continuous system; the standard cell
drops the W_s term. The warping function is fixed to tanh.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import DimensionMismatchError, as_matrix, as_vector, eigenvalues, gd

__all__ = [
    "SingularMatrixError",
    "ContinuousSystem",
    "CanonicalRnnParams",
    "StandardRnnParams",
    "RnnTrace",
    "StabilityReport",
    "discretize",
    "canonical_step",
    "standard_step",
    "forward_segment",
    "impulse_response",
    "stability_report",
]


class SingularMatrixError(ValueError):
    """Raised when (I - dt*A) cannot be inverted to the required residual."""


_INVERSION_RESIDUAL = 1e-9


@dataclass(frozen=True)
class ContinuousSystem:
    """Single-delay linear system ds/dt = A s(t) + B r(t - tau0) + C x(t) + phi."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    phi: np.ndarray
    delta_t: float

    def __post_init__(self):
        a = as_matrix(self.a, "A")
        b = as_matrix(self.b, "B")
        c = as_matrix(self.c, "C")
        phi = as_vector(self.phi, "phi")
        d = a.shape[0]
        if a.shape != (d, d) or b.shape != (d, d) or c.shape[0] != d or phi.shape != (d,):
            raise DimensionMismatchError(
                f"continuous system shapes disagree: A{a.shape} B{b.shape} C{c.shape} phi{phi.shape}"
            )
        if self.delta_t <= 0.0:
            raise ValueError(f"delta_t must be positive, got {self.delta_t}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "phi", phi)
        _invert_state_operator(a, self.delta_t)  # fail fast on singular systems


@dataclass(frozen=True)
class CanonicalRnnParams:
    w_s: np.ndarray
    w_r: np.ndarray
    w_x: np.ndarray
    theta_s: np.ndarray

    def __post_init__(self):
        w_s = as_matrix(self.w_s, "W_s")
        w_r = as_matrix(self.w_r, "W_r")
        w_x = as_matrix(self.w_x, "W_x")
        theta = as_vector(self.theta_s, "theta_s")
        d_s = w_s.shape[0]
        if w_s.shape != (d_s, d_s) or w_r.shape != (d_s, d_s) or w_x.shape[0] != d_s or theta.shape != (d_s,):
            raise DimensionMismatchError(
                f"canonical RNN shapes disagree: W_s{w_s.shape} W_r{w_r.shape} W_x{w_x.shape} theta{theta.shape}"
            )
        object.__setattr__(self, "w_s", w_s)
        object.__setattr__(self, "w_r", w_r)
        object.__setattr__(self, "w_x", w_x)
        object.__setattr__(self, "theta_s", theta)

    @property
    def d_s(self) -> int:
        return self.w_s.shape[0]

    @property
    def d_x(self) -> int:
        return self.w_x.shape[1]


@dataclass(frozen=True)
class StandardRnnParams:
    w_r: np.ndarray
    w_x: np.ndarray
    theta_s: np.ndarray

    def __post_init__(self):
        w_r = as_matrix(self.w_r, "W_r")
        w_x = as_matrix(self.w_x, "W_x")
        theta = as_vector(self.theta_s, "theta_s")
        d_s = w_r.shape[0]
        if w_r.shape != (d_s, d_s) or w_x.shape[0] != d_s or theta.shape != (d_s,):
            raise DimensionMismatchError(
                f"standard RNN shapes disagree: W_r{w_r.shape} W_x{w_x.shape} theta{theta.shape}"
            )
        object.__setattr__(self, "w_r", w_r)
        object.__setattr__(self, "w_x", w_x)
        object.__setattr__(self, "theta_s", theta)

    @property
    def d_s(self) -> int:
        return self.w_r.shape[0]

    @property
    def d_x(self) -> int:
        return self.w_x.shape[1]

    def entities(self) -> dict[str, np.ndarray]:
        return {"w_r": self.w_r, "w_x": self.w_x, "theta_s": self.theta_s}

    def replace_entities(self, ent: dict[str, np.ndarray]) -> "StandardRnnParams":
        return StandardRnnParams(ent["w_r"], ent["w_x"], ent["theta_s"])

    @classmethod
    def zeros(cls, d_x: int, d_s: int) -> "StandardRnnParams":
        return cls(np.zeros((d_s, d_s)), np.zeros((d_s, d_x)), np.zeros(d_s))


@dataclass
class RnnTrace:
    """Per-step cache of a standard-RNN segment run (s[-1] = s_init)."""

    xs: np.ndarray      # (K, d_x)
    s: np.ndarray       # (K, d_s)
    r: np.ndarray       # (K, d_s)
    s_init: np.ndarray  # (d_s,)

    @property
    def steps(self) -> int:
        return self.s.shape[0]


def _invert_state_operator(a: np.ndarray, delta_t: float) -> np.ndarray:
    d = a.shape[0]
    m = np.eye(d) - delta_t * a
    try:
        w_s = np.linalg.solve(m, np.eye(d))
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"(I - dt*A) is singular: {exc}") from exc
    residual = np.max(np.abs(m @ w_s - np.eye(d)))
    if not np.isfinite(residual) or residual > _INVERSION_RESIDUAL:
        raise SingularMatrixError(
            f"(I - dt*A) inversion residual {residual:.3e} exceeds {_INVERSION_RESIDUAL:.0e}"
        )
    return w_s


def discretize(sys: ContinuousSystem) -> CanonicalRnnParams:
    """Backward-Euler discretization of a single-delay continuous system.

    W_s = (I - dt*A)^-1, W_r = dt*W_s*B, W_x = dt*W_s*C, theta_s = dt*W_s*phi.
    """
    dt = sys.delta_t
    w_s = _invert_state_operator(sys.a, dt)
    return CanonicalRnnParams(
        w_s=w_s,
        w_r=dt * (w_s @ sys.b),
        w_x=dt * (w_s @ sys.c),
        theta_s=dt * (w_s @ sys.phi),
    )


def canonical_step(p: CanonicalRnnParams, s_prev, r_prev, x) -> tuple[np.ndarray, np.ndarray]:
    s_prev = as_vector(s_prev, "s_prev")
    r_prev = as_vector(r_prev, "r_prev")
    x = as_vector(x, "x")
    if s_prev.shape != (p.d_s,) or r_prev.shape != (p.d_s,) or x.shape != (p.d_x,):
        raise DimensionMismatchError(
            f"canonical_step: got s{s_prev.shape} r{r_prev.shape} x{x.shape}, "
            f"params expect d_s={p.d_s} d_x={p.d_x}"
        )
    s = p.w_s @ s_prev + (p.w_r @ r_prev + p.w_x @ x + p.theta_s)
    return s, gd(s)


def standard_step(p: StandardRnnParams, r_prev, x) -> tuple[np.ndarray, np.ndarray]:
    r_prev = as_vector(r_prev, "r_prev")
    x = as_vector(x, "x")
    if r_prev.shape != (p.d_s,) or x.shape != (p.d_x,):
        raise DimensionMismatchError(
            f"standard_step: got r{r_prev.shape} x{x.shape}, params expect d_s={p.d_s} d_x={p.d_x}"
        )
    s = p.w_r @ r_prev + p.w_x @ x + p.theta_s
    return s, gd(s)


def forward_segment(p: StandardRnnParams, xs, s_init=None) -> RnnTrace:
    """Unroll the standard cell over a segment; state starts at s_init (default 0)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    k = xs.shape[0]
    if k < 1 or xs.shape[1] != p.d_x:
        raise DimensionMismatchError(f"segment inputs {xs.shape} do not match d_x={p.d_x}")
    s_init = np.zeros(p.d_s) if s_init is None else as_vector(s_init, "s_init")
    s_steps = np.empty((k, p.d_s))
    r_steps = np.empty((k, p.d_s))
    r_prev = gd(s_init)
    for n in range(k):
        s_steps[n], r_steps[n] = standard_step(p, r_prev, xs[n])
        r_prev = r_steps[n]
    return RnnTrace(xs=xs, s=s_steps, r=r_steps, s_init=s_init)


def standard_step_fn(p: StandardRnnParams, carry, x):
    """Step adapter for the segmentation harness; carry is r_prev (None = zero state)."""
    r_prev = gd(np.zeros(p.d_s)) if carry is None else carry
    s, r = standard_step(p, r_prev, x)
    return r, (s, r)


def impulse_response(p: StandardRnnParams, steps: int) -> list[np.ndarray]:
    """State response s[0..steps-1] to x[n] = delta[n] * ones with s[-1] = 0."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    xs = np.zeros((steps, p.d_x))
    xs[0] = 1.0
    trace = forward_segment(p, xs)
    return [trace.s[n].copy() for n in range(steps)]


@dataclass(frozen=True)
class StabilityReport:
    eigenvalues: np.ndarray
    stable: bool
    has_complex: bool

    def __str__(self) -> str:
        lines = ["eigenvalues:"]
        lines += [f"  {ev.real:+.6f} {ev.imag:+.6f}j" for ev in self.eigenvalues]
        if self.has_complex:
            lines.append("spectrum is complex: classification not covered, reported as unstable")
        lines.append(f"stable: {self.stable}")
        return "\n".join(lines)


def stability_report(p: StandardRnnParams, imag_tol: float = 1e-9) -> StabilityReport:
    """Spectrum of W_r and the small-signal stability verdict 0 < mu_i < 1.

    The real-eigenvalue condition comes from the symmetric/diagonal analysis;
    complex spectra are flagged rather than classified.
    """
    evs = eigenvalues(p.w_r)
    has_complex = bool(np.any(np.abs(evs.imag) > imag_tol))
    stable = (not has_complex) and bool(
        np.all(evs.real > 0.0) and np.all(evs.real < 1.0)
    )
    return StabilityReport(eigenvalues=evs, stable=stable, has_complex=has_complex)
