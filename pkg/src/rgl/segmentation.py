"""Window functions, segment offsets, and the unrolling harness.

A long sequence of N steps is tiled by M non-overlapping segments with lengths
K_m and offsets j(m) = sum_{i<m} K_i. Each segment is processed by one
reusable cell unrolled for K_m steps, with the state zeroed at the segment
start so segment outputs depend on that segment's inputs only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "LengthMismatchError",
    "SequenceData",
    "SegmentPlan",
    "Segment",
    "unit_step",
    "unit_sample",
    "segment_offsets",
    "window",
    "extract_segments",
    "run_segments",
]


class LengthMismatchError(ValueError):
    """Raised when a plan does not tile the sequence and padding was not requested."""


@dataclass(frozen=True)
class SequenceData:
    """Finite indexed sequence of input vectors with optional aligned targets."""

    inputs: np.ndarray            # (N, d_x)
    targets: np.ndarray | None = None  # (N, d_t) or None

    def __post_init__(self):
        inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        object.__setattr__(self, "inputs", inputs)
        if self.targets is not None:
            targets = np.atleast_2d(np.asarray(self.targets, dtype=np.float64))
            if targets.shape[0] != inputs.shape[0]:
                raise LengthMismatchError(
                    f"targets cover {targets.shape[0]} steps, inputs cover {inputs.shape[0]}"
                )
            object.__setattr__(self, "targets", targets)

    @property
    def length(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True)
class SegmentPlan:
    """Partition of N steps into segments of lengths K_m."""

    lengths: tuple[int, ...]

    def __post_init__(self):
        lengths = tuple(int(k) for k in self.lengths)
        if not lengths or any(k < 1 for k in lengths):
            raise ValueError(f"segment lengths must all be >= 1, got {lengths}")
        object.__setattr__(self, "lengths", lengths)

    @property
    def num_segments(self) -> int:
        return len(self.lengths)

    @property
    def total(self) -> int:
        return sum(self.lengths)

    @classmethod
    def uniform(cls, total: int, k: int) -> "SegmentPlan":
        """Plan of ceil(total/k) segments of length k; callers pad the tail."""
        if total < 1 or k < 1:
            raise ValueError(f"need total >= 1 and k >= 1, got {total}, {k}")
        return cls(tuple([k] * ((total + k - 1) // k)))


@dataclass(frozen=True)
class Segment:
    index: int
    offset: int
    inputs: np.ndarray             # (K_m, d_x)
    targets: np.ndarray | None = None

    @property
    def steps(self) -> int:
        return self.inputs.shape[0]


def unit_step(n: int) -> int:
    """1 for n >= 0, else 0."""
    return 1 if n >= 0 else 0


def unit_sample(n: int) -> int:
    """1 at n = 0, else 0 (difference of adjacent unit steps)."""
    return unit_step(n) - unit_step(n - 1)


def segment_offsets(plan: SegmentPlan) -> list[int]:
    """Offsets j(m): j(0) = 0, j(m) = j(m-1) + K_{m-1}."""
    offsets = [0]
    for k in plan.lengths[:-1]:
        offsets.append(offsets[-1] + k)
    return offsets


def window(plan: SegmentPlan, m: int, n: int) -> int:
    """Rectangular window of segment m: 1 iff j(m) <= n <= j(m)+K_m-1."""
    if not 0 <= m < plan.num_segments:
        raise IndexError(f"segment index {m} outside 0..{plan.num_segments - 1}")
    j = segment_offsets(plan)[m]
    return 1 if j <= n <= j + plan.lengths[m] - 1 else 0


def extract_segments(data: SequenceData, plan: SegmentPlan, pad: bool = False) -> list[Segment]:
    """Slice the sequence into the plan's segments.

    The plan must tile the sequence exactly; with pad=True a short sequence is
    extended with zero vectors to the plan total first.
    """
    n_total = data.length
    if plan.total != n_total:
        if not (pad and plan.total > n_total):
            raise LengthMismatchError(
                f"plan covers {plan.total} steps but sequence has {n_total} "
                f"(pass pad=True to zero-pad a short sequence)"
            )
        extra = plan.total - n_total
        inputs = np.vstack([data.inputs, np.zeros((extra, data.inputs.shape[1]))])
        targets = None
        if data.targets is not None:
            targets = np.vstack([data.targets, np.zeros((extra, data.targets.shape[1]))])
        data = SequenceData(inputs, targets)

    segments = []
    for m, (j, k) in enumerate(zip(segment_offsets(plan), plan.lengths)):
        targets = None if data.targets is None else data.targets[j:j + k].copy()
        segments.append(Segment(index=m, offset=j, inputs=data.inputs[j:j + k].copy(), targets=targets))
    return segments


def run_segments(
    step_fn: Callable,
    params,
    segments: Sequence[Segment],
    order: Sequence[int] | None = None,
) -> list[list]:
    """Unroll one reusable cell over every segment independently.

    step_fn(params, carry, x) -> (carry', output); carry=None at a segment
    start means "zero-initialized state". Segments share no state, so any
    processing order yields identical per-segment outputs; results are
    returned in segment order regardless.
    """
    results: list[list | None] = [None] * len(segments)
    for m in (range(len(segments)) if order is None else order):
        seg = segments[m]
        carry = None
        outputs = []
        for n in range(seg.steps):
            carry, out = step_fn(params, carry, seg.inputs[n])
            outputs.append(out)
        results[m] = outputs
    if any(r is None for r in results):
        raise ValueError("order must visit every segment exactly once")
    return results  # type: ignore[return-value]
