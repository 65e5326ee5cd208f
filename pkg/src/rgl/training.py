"""Loss heads, the Gradient Descent loop, and toy long-range task generators.

The loop is plain SGD over batches of segments: per-batch parameter gradients
are the SUM of per-segment bundles, and theta <- theta - lr * dE/dtheta.
Richer optimizers would confound the gradient-flow demonstrations, so none
are provided.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import bptt, kernels
from .lstm_vanilla import VanillaLstmParams
from .lstm_augmented import AugmentedLstmParams
from .rnn import StandardRnnParams
from .segmentation import SegmentPlan, SequenceData, extract_segments

__all__ = [
    "TrainingDivergedError",
    "IdentityMseHead",
    "AffineSoftmaxCeHead",
    "head_forward",
    "head_backward",
    "TrainConfig",
    "TrainResult",
    "sgd_step",
    "train",
    "evaluate_mse",
    "make_delayed_echo",
    "replicate_targets",
    "init_params",
]


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss becomes non-finite."""


# ---------------------------------------------------------------------------
# loss heads
# ---------------------------------------------------------------------------

class IdentityMseHead:
    """y = v with squared-error loss 0.5 * ||v - t||^2 per step.

    The identity map is invertible, so this head stays inside the hypotheses
    of the segment-independence proposition; the softmax head does not.
    """

    kind = "identity-mse"

    def forward(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v, dtype=np.float64)

    def backward(self, v, target) -> tuple[float, np.ndarray]:
        v = np.asarray(v, dtype=np.float64)
        target = np.asarray(target, dtype=np.float64)
        if v.shape != target.shape:
            raise ValueError(f"mse head: target shape {target.shape} != output shape {v.shape}")
        diff = v - target
        return 0.5 * float(diff @ diff), diff


class AffineSoftmaxCeHead:
    """y = softmax(W_y v + b_y) with cross-entropy loss -sum t log y."""

    kind = "affine-softmax-ce"

    def __init__(self, w_y, b_y):
        self.w_y = np.atleast_2d(np.asarray(w_y, dtype=np.float64))
        self.b_y = np.asarray(b_y, dtype=np.float64)
        if self.w_y.shape[0] != self.b_y.shape[0]:
            raise ValueError(f"W_y rows {self.w_y.shape[0]} != b_y size {self.b_y.shape[0]}")

    def forward(self, v: np.ndarray) -> np.ndarray:
        logits = self.w_y @ np.asarray(v, dtype=np.float64) + self.b_y
        logits = logits - np.max(logits)
        e = np.exp(logits)
        return e / e.sum()

    def backward(self, v, target) -> tuple[float, np.ndarray]:
        target = np.asarray(target, dtype=np.float64)
        if target.shape != (self.w_y.shape[0],):
            raise ValueError(f"softmax head: target shape {target.shape} != ({self.w_y.shape[0]},)")
        if abs(target.sum() - 1.0) > 1e-9:
            raise ValueError(f"softmax targets must sum to 1 (got {target.sum()!r})")
        y = self.forward(v)
        loss = -float(target @ np.log(np.maximum(y, 1e-300)))
        return loss, self.w_y.T @ (y - target)


def head_forward(head, v):
    return head.forward(v)


def head_backward(head, v, target):
    return head.backward(v, target)


# ---------------------------------------------------------------------------
# SGD
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    batch_size: int = 1
    epochs: int = 1
    clip_enabled: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0.0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")


@dataclass
class TrainResult:
    params: object
    history: list[float] = field(default_factory=list)  # per-epoch mean segment loss
    updates: int = 0


def sgd_step(params, bundle: bptt.GradientBundle, lr: float):
    """theta <- theta - lr * dE/dtheta for every entity; returns new params."""
    ent = params.entities()
    return params.replace_entities({k: ent[k] - lr * bundle.grads[k] for k in ent})


def _segment_pass(kind, params, seg_inputs, seg_targets, head, clip):
    """One segment's (loss, bundle), via the array kernels where available."""
    if kind in ("standard-rnn", "vanilla-lstm") and isinstance(head, IdentityMseHead):
        return kernels.segment_pass(kind, params, seg_inputs, seg_targets, clip)
    return bptt.segment_backward(kind, params, seg_inputs, seg_targets, head, clip=clip)


def train(
    kind: str,
    params,
    dataset: SequenceData,
    plan: SegmentPlan,
    head,
    config: TrainConfig,
) -> TrainResult:
    """SGD over batches of segments; deterministic for a fixed seed.

    Per-epoch history records the mean per-segment loss. Training aborts with
    TrainingDivergedError the moment a non-finite loss shows up.
    """
    if kind not in bptt.MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    if dataset.targets is None:
        raise ValueError("training requires a dataset with targets")
    segments = extract_segments(dataset, plan, pad=True)
    rng = np.random.default_rng(config.seed)
    history: list[float] = []
    updates = 0
    for _ in range(config.epochs):
        order = rng.permutation(len(segments))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            total: bptt.GradientBundle | None = None
            for m in batch:
                seg = segments[m]
                loss, bundle = _segment_pass(
                    kind, params, seg.inputs, seg.targets, head, config.clip_enabled
                )
                epoch_loss += loss
                if not np.isfinite(loss):
                    raise TrainingDivergedError(
                        f"loss became non-finite ({loss}) after {updates} updates"
                    )
                if total is None:
                    total = bundle
                else:
                    total.add_(bundle)
            params = sgd_step(params, total, config.learning_rate)
            updates += 1
        history.append(epoch_loss / len(segments))
    return TrainResult(params=params, history=history, updates=updates)


def evaluate_mse(kind: str, params, dataset: SequenceData, plan: SegmentPlan) -> float:
    """Mean per-element squared error of the model outputs over the dataset."""
    segments = extract_segments(dataset, plan, pad=True)
    sq_sum = 0.0
    count = 0
    for seg in segments:
        outputs, _ = bptt._model_outputs(kind, params, seg.inputs)
        diff = outputs - seg.targets
        sq_sum += float(np.sum(diff * diff))
        count += diff.size
    return sq_sum / count


# ---------------------------------------------------------------------------
# toy tasks and initialization
# ---------------------------------------------------------------------------

def make_delayed_echo(
    num_segments: int,
    k: int,
    lag: int,
    d_x: int = 1,
    seed: int = 0,
) -> tuple[SequenceData, SegmentPlan]:
    """Delayed-echo task: target[n] = x[n - lag] within each segment (0 before).

    Inputs are random +-1 values. Lags never cross a segment boundary, so the
    segments are independent by construction.
    """
    if lag >= k:
        raise ValueError(f"lag {lag} must be smaller than the segment length {k}")
    rng = np.random.default_rng(seed)
    inputs = rng.choice([-1.0, 1.0], size=(num_segments * k, d_x))
    targets = np.zeros_like(inputs)
    for m in range(num_segments):
        j = m * k
        targets[j + lag:j + k] = inputs[j:j + k - lag]
    return SequenceData(inputs, targets), SegmentPlan(tuple([k] * num_segments))


def replicate_targets(dataset: SequenceData, d: int) -> SequenceData:
    """Tile per-step targets up to d elements (lifts scalar tasks to a d_v head)."""
    if dataset.targets is None:
        raise ValueError("dataset has no targets to replicate")
    d_t = dataset.targets.shape[1]
    if d % d_t != 0:
        raise ValueError(f"cannot tile targets of width {d_t} to width {d}")
    return SequenceData(dataset.inputs, np.tile(dataset.targets, (1, d // d_t)))


def init_params(kind: str, d_x: int, d_s: int, d_v: int | None = None,
                window: int = 1, input_gate: str = "elementwise",
                seed: int = 0, scale: float = 0.1):
    """Seeded uniform [-scale, scale] initialization for any model kind."""
    rng = np.random.default_rng(seed)

    def u(*shape):
        return rng.uniform(-scale, scale, size=shape)

    if kind == "standard-rnn":
        return StandardRnnParams(u(d_s, d_s), u(d_s, d_x), u(d_s))
    if kind == "vanilla-lstm":
        zero = VanillaLstmParams.zeros(d_x, d_s)
        return zero.replace_entities({k: u(*v.shape) for k, v in zero.entities().items()})
    if kind == "augmented-lstm":
        zero = AugmentedLstmParams.zeros(d_x, d_s, d_s if d_v is None else d_v,
                                         window, input_gate=input_gate)
        return zero.replace_entities({k: u(*v.shape) for k, v in zero.entities().items()})
    raise ValueError(f"unknown model kind {kind!r}")
