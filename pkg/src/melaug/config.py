"""Flat ``key = value`` tool configuration.

Lines look like ``schedule.tw.start = 0.02``; ``#`` starts a comment. Every
key has a default, and unknown keys are rejected so typos fail loudly.
Optional values accept ``none``.
"""

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from melaug.asr import TranscriberConfig
from melaug.augment import POLICIES
from melaug.errors import ParameterError, ParseError
from melaug.metrics import DEFAULT_MCD_ORDER
from melaug.search import DEFAULT_GL_ITERATIONS, DEFAULT_REPEATS, DEFAULT_SCHEDULES, SearchSchedule
from melaug.signal import MelConfig


@dataclass
class ToolConfig:
    mel: MelConfig = field(default_factory=MelConfig)
    gl_iterations: int = DEFAULT_GL_ITERATIONS
    schedules: dict = field(default_factory=lambda: dict(DEFAULT_SCHEDULES))
    repeats: int = DEFAULT_REPEATS
    seed: Optional[int] = None
    workers: int = 1
    dp_decimals: Optional[int] = None
    mean_tau: Optional[float] = None
    nu: Optional[int] = None
    transcriber: dict = field(default_factory=dict)
    mcd_order: int = DEFAULT_MCD_ORDER

    def transcriber_config(self):
        return TranscriberConfig(**self.transcriber)


def _optional(conv):
    def parse(text):
        return None if text.lower() == "none" else conv(text)

    return parse


_MEL_KEYS = {
    "sample_rate": int,
    "n_fft": int,
    "hop": int,
    "n_mels": int,
    "fmin": float,
    "fmax": float,
    "log_floor": float,
}
_SCHEDULE_KEYS = {"kind": str, "start": float, "step": float, "count": int}
_TRANSCRIBER_KEYS = {
    "backend": str,
    "endpoint": _optional(str),
    "fixture_dir": _optional(str),
    "timeout": float,
    "retries": int,
    "language_hint": str,
    "max_in_flight": int,
}
_SCALAR_KEYS = {
    "griffin_lim.iterations": ("gl_iterations", int),
    "search.repeats": ("repeats", int),
    "search.seed": ("seed", _optional(int)),
    "search.workers": ("workers", int),
    "search.dp_decimals": ("dp_decimals", _optional(int)),
    "stats.mean_tau": ("mean_tau", _optional(float)),
    "stats.nu": ("nu", _optional(int)),
    "metrics.mcd_order": ("mcd_order", int),
}


def parse_config(lines, base_dir=None):
    cfg = ToolConfig()
    mel = {}
    schedules = {}
    seen = set()
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if key in seen:
            raise ParseError(f"duplicate key {key}", lineno)
        seen.add(key)
        parts = key.split(".")
        try:
            if key in _SCALAR_KEYS:
                attr, conv = _SCALAR_KEYS[key]
                setattr(cfg, attr, conv(value))
            elif parts[0] == "signal" and len(parts) == 2 and parts[1] in _MEL_KEYS:
                mel[parts[1]] = _MEL_KEYS[parts[1]](value)
            elif (
                parts[0] == "schedule"
                and len(parts) == 3
                and parts[1] in POLICIES
                and parts[2] in _SCHEDULE_KEYS
            ):
                schedules.setdefault(parts[1], {})[parts[2]] = _SCHEDULE_KEYS[parts[2]](value)
            elif parts[0] == "transcriber" and len(parts) == 2 and parts[1] in _TRANSCRIBER_KEYS:
                cfg.transcriber[parts[1]] = _TRANSCRIBER_KEYS[parts[1]](value)
            else:
                raise ParseError(f"unknown key {key}", lineno)
        except ValueError as exc:
            if isinstance(exc, ParameterError):
                raise ParseError(str(exc), lineno) from None
            raise ParseError(f"bad value {value!r} for {key}", lineno) from None

    try:
        cfg.mel = MelConfig(**mel)
        for tag, overrides in schedules.items():
            base = cfg.schedules[tag]
            cfg.schedules[tag] = replace(base, **overrides)
    except ParameterError as exc:
        raise ParseError(str(exc)) from None

    fixture_dir = cfg.transcriber.get("fixture_dir")
    if fixture_dir and base_dir is not None and not Path(fixture_dir).is_absolute():
        cfg.transcriber["fixture_dir"] = str(Path(base_dir) / fixture_dir)
    if cfg.repeats < 1 or cfg.gl_iterations < 1 or cfg.workers < 1:
        raise ParseError("search.repeats, griffin_lim.iterations and search.workers must be >= 1")
    return cfg


def load_config(path):
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        return parse_config(f, base_dir=path.parent)
