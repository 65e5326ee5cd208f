"""Plain-text experiment configuration (INI sections, key = value).

Every key is documented in docs/config.md. Parsing and validation raise
ConfigError; the CLI maps that to exit code 2.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .bptt import MODEL_KINDS

__all__ = ["ConfigError", "ExperimentConfig", "load_config"]


class ConfigError(ValueError):
    """Raised for unreadable, unparsable, or inconsistent configuration."""


_HEAD_KINDS = ("identity-mse", "affine-softmax-ce")
_DATA_SOURCES = ("delayed-echo", "csv")
_INIT_SCHEMES = ("uniform", "zeros")
_DIAG_MODES = ("decay", "flow", "qaudit")


@dataclass
class ExperimentConfig:
    # [model]
    kind: str = "vanilla-lstm"
    d_x: int = 1
    d_s: int = 8
    d_v: int | None = None
    window: int = 1
    input_gate: str = "elementwise"
    # [init]
    init_scheme: str = "uniform"
    init_scale: float = 0.1
    w_r_diag: float | None = None
    b_cs_fill: float | None = None
    # [train]
    learning_rate: float = 0.05
    batch_size: int = 16
    epochs: int = 10
    clip: bool = True
    seed: int = 0
    # [data]
    source: str = "delayed-echo"
    num_segments: int = 64
    segment_length: int = 20
    lag: int = 10
    standardize: bool = False
    replicate_targets: bool = True
    input_path: str | None = None
    target_path: str | None = None
    # [head]
    head_kind: str = "identity-mse"
    d_y: int | None = None
    # [diagnose]
    diag_mode: str = "decay"
    diag_steps: int = 50
    # [overrides]
    override_g_cu: float | None = None
    override_g_cs: float | None = None
    override_g_cr: float | None = None
    override_g_cx: float | None = None
    # [gradcheck]
    gradcheck_epsilon: float = 1e-5
    gradcheck_tolerance: float = 1e-6
    gradcheck_corrupt: bool = False
    extras: dict = field(default_factory=dict)

    def validate(self) -> None:
        def fail(msg):
            raise ConfigError(msg)

        if self.kind not in MODEL_KINDS:
            fail(f"model.kind must be one of {MODEL_KINDS}, got {self.kind!r}")
        if self.d_x < 1 or self.d_s < 1:
            fail(f"model dims must be positive, got d_x={self.d_x} d_s={self.d_s}")
        if self.kind == "augmented-lstm":
            d_v = self.d_s if self.d_v is None else self.d_v
            if d_v > self.d_s:
                fail(f"model.d_v={d_v} must not exceed model.d_s={self.d_s}")
            if self.window < 1:
                fail(f"model.window must be >= 1, got {self.window}")
        else:
            if self.d_v is not None or self.window != 1:
                fail(f"model.d_v/model.window only apply to augmented-lstm (kind={self.kind})")
            if self.override_g_cx is not None:
                fail("overrides.g_cx only applies to augmented-lstm")
        if self.init_scheme not in _INIT_SCHEMES:
            fail(f"init.scheme must be one of {_INIT_SCHEMES}, got {self.init_scheme!r}")
        if self.w_r_diag is not None and self.kind != "standard-rnn":
            fail("init.w_r_diag only applies to standard-rnn")
        if self.b_cs_fill is not None and self.kind == "standard-rnn":
            fail("init.b_cs_fill only applies to LSTM kinds")
        if self.learning_rate <= 0:
            fail(f"train.learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1 or self.epochs < 1:
            fail("train.batch_size and train.epochs must be >= 1")
        if self.source not in _DATA_SOURCES:
            fail(f"data.source must be one of {_DATA_SOURCES}, got {self.source!r}")
        if self.source == "delayed-echo" and not 0 <= self.lag < self.segment_length:
            fail(f"data.lag={self.lag} must satisfy 0 <= lag < segment_length={self.segment_length}")
        if self.source == "csv" and not self.input_path:
            fail("data.source=csv requires data.input")
        if self.head_kind not in _HEAD_KINDS:
            fail(f"head.kind must be one of {_HEAD_KINDS}, got {self.head_kind!r}")
        if self.diag_mode not in _DIAG_MODES:
            fail(f"diagnose.mode must be one of {_DIAG_MODES}, got {self.diag_mode!r}")
        if self.diag_steps < 2:
            fail(f"diagnose.steps must be >= 2, got {self.diag_steps}")
        if not 1e-7 <= self.gradcheck_epsilon <= 1e-4:
            fail(f"gradcheck.epsilon must lie in [1e-7, 1e-4], got {self.gradcheck_epsilon}")


_SCHEMA = {
    ("model", "kind"): ("kind", str),
    ("model", "d_x"): ("d_x", int),
    ("model", "d_s"): ("d_s", int),
    ("model", "d_v"): ("d_v", int),
    ("model", "window"): ("window", int),
    ("model", "input_gate"): ("input_gate", str),
    ("init", "scheme"): ("init_scheme", str),
    ("init", "scale"): ("init_scale", float),
    ("init", "w_r_diag"): ("w_r_diag", float),
    ("init", "b_cs_fill"): ("b_cs_fill", float),
    ("train", "learning_rate"): ("learning_rate", float),
    ("train", "batch_size"): ("batch_size", int),
    ("train", "epochs"): ("epochs", int),
    ("train", "clip"): ("clip", bool),
    ("train", "seed"): ("seed", int),
    ("data", "source"): ("source", str),
    ("data", "num_segments"): ("num_segments", int),
    ("data", "segment_length"): ("segment_length", int),
    ("data", "lag"): ("lag", int),
    ("data", "standardize"): ("standardize", bool),
    ("data", "replicate_targets"): ("replicate_targets", bool),
    ("data", "input"): ("input_path", str),
    ("data", "targets"): ("target_path", str),
    ("head", "kind"): ("head_kind", str),
    ("head", "d_y"): ("d_y", int),
    ("diagnose", "mode"): ("diag_mode", str),
    ("diagnose", "steps"): ("diag_steps", int),
    ("overrides", "g_cu"): ("override_g_cu", float),
    ("overrides", "g_cs"): ("override_g_cs", float),
    ("overrides", "g_cr"): ("override_g_cr", float),
    ("overrides", "g_cx"): ("override_g_cx", float),
    ("gradcheck", "epsilon"): ("gradcheck_epsilon", float),
    ("gradcheck", "tolerance"): ("gradcheck_tolerance", float),
    ("gradcheck", "corrupt"): ("gradcheck_corrupt", bool),
}

_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            parser.read_file(fh, source=str(path))
    except configparser.Error as exc:
        # configparser errors already carry file/line information
        raise ConfigError(str(exc)) from exc

    cfg = ExperimentConfig()
    for section in parser.sections():
        for key, raw in parser.items(section):
            spec = _SCHEMA.get((section, key))
            if spec is None:
                raise ConfigError(f"{path}: unknown key [{section}] {key}")
            attr, typ = spec
            try:
                if typ is bool:
                    low = raw.strip().lower()
                    if low in _BOOL_TRUE:
                        value = True
                    elif low in _BOOL_FALSE:
                        value = False
                    else:
                        raise ValueError(f"not a boolean: {raw!r}")
                else:
                    value = typ(raw)
            except ValueError as exc:
                raise ConfigError(f"{path}: bad value for [{section}] {key}: {exc}") from exc
            setattr(cfg, attr, value)
    cfg.validate()
    return cfg
