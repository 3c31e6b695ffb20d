"""Mel-spectrogram augmentation policies.

Six policies, each a pure function of ``(spectrogram, parameters, seed)``:

=====  ======================  ==========================================
tag    parameters              effect
=====  ======================  ==========================================
tw     TimeWarp(W)             move an interior frame by up to ``W * tau``
fm     FreqMask(F, Nf)         ``Nf`` bands of up to ``F`` bins -> minimum
tm     TimeMask(T, Nt)         ``Nt`` spans of up to ``T`` frames -> minimum
fw     FreqWarp(H)             move an interior bin by up to ``H`` bins
lc     LoudnessCtl(Lambda)     contract values toward the minimum
tlc    TimeLenCtl(L)           resample the time axis by up to ``L * tau``
=====  ======================  ==========================================

Random draws come from ``melaug.rng.generator(seed)`` in the order listed in
each function's docstring, so results are reproducible bit for bit.
"""

import math
from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from melaug.errors import ParameterError, TooShortError
from melaug.rng import generator
from melaug.signal import MelSpectrogram

MIN_WARP_LENGTH = 8


# -- parameters --------------------------------------------------------------


def _check_int(name, value, low):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ParameterError(f"{name} must be an integer, got {value!r}")
    if value < low:
        raise ParameterError(f"{name} must be >= {low}, got {value}")


def _check_fraction(name, value, upper_inclusive):
    ok = 0.0 <= value <= 1.0 if upper_inclusive else 0.0 <= value < 1.0
    if not (isinstance(value, (int, float, np.floating)) and math.isfinite(value) and ok):
        bound = "]" if upper_inclusive else ")"
        raise ParameterError(f"{name} must lie in [0, 1{bound}, got {value!r}")


@dataclass(frozen=True)
class TimeWarp:
    max_shift: float  # fraction of tau
    tag: ClassVar[str] = "tw"

    def __post_init__(self):
        _check_fraction("W", self.max_shift, upper_inclusive=False)

    def describe(self):
        return f"W={float(self.max_shift)!r}"


@dataclass(frozen=True)
class FreqMask:
    max_width: int
    count: int = 1
    tag: ClassVar[str] = "fm"

    def __post_init__(self):
        _check_int("F", self.max_width, 0)
        _check_int("Nf", self.count, 1)

    def describe(self):
        return f"F={self.max_width},Nf={self.count}"


@dataclass(frozen=True)
class TimeMask:
    max_width: int
    count: int = 1
    tag: ClassVar[str] = "tm"

    def __post_init__(self):
        _check_int("T", self.max_width, 0)
        _check_int("Nt", self.count, 1)

    def describe(self):
        return f"T={self.max_width},Nt={self.count}"


@dataclass(frozen=True)
class FreqWarp:
    max_shift: int  # bins
    tag: ClassVar[str] = "fw"

    def __post_init__(self):
        _check_int("H", self.max_shift, 0)

    def describe(self):
        return f"H={self.max_shift}"


@dataclass(frozen=True)
class LoudnessCtl:
    max_attenuation: float
    tag: ClassVar[str] = "lc"

    def __post_init__(self):
        _check_fraction("Lambda", self.max_attenuation, upper_inclusive=True)

    def describe(self):
        return f"Lambda={float(self.max_attenuation)!r}"


@dataclass(frozen=True)
class TimeLenCtl:
    max_stretch: float  # fraction of tau
    tag: ClassVar[str] = "tlc"

    def __post_init__(self):
        _check_fraction("L", self.max_stretch, upper_inclusive=False)

    def describe(self):
        return f"L={float(self.max_stretch)!r}"


POLICIES = {cls.tag: cls for cls in (TimeWarp, FreqMask, TimeMask, FreqWarp, LoudnessCtl, TimeLenCtl)}

# Accepted spellings for each keyword in ``parse_params``; the first is canonical.
_KEYS = {
    "tw": (("w",),),
    "fm": (("f",), ("nf", "n_f", "n")),
    "tm": (("t",), ("nt", "n_t", "n")),
    "fw": (("h",),),
    "lc": (("lambda", "λ"),),
    "tlc": (("l",),),
}


def policy_class(tag):
    try:
        return POLICIES[tag]
    except KeyError:
        raise ParameterError(f"unknown policy {tag!r}; choose from {', '.join(POLICIES)}") from None


def make_params(tag, value, count=1):
    """Build parameters for ``tag`` from a single schedule value.

    Integer-valued policies (masks, frequency warp) require an integral value.
    """
    cls = policy_class(tag)
    if tag in ("fm", "tm", "fw"):
        if float(value) != int(value):
            raise ParameterError(f"{tag} needs an integer parameter, got {value!r}")
        value = int(value)
        return cls(value, count) if tag in ("fm", "tm") else cls(value)
    return cls(float(value))


def parse_params(tag, text):
    """Parse ``"F=3,Nf=2"``-style text (or a bare number) into parameters.

    >>> parse_params("fm", "F=3,Nf=2")
    FreqMask(max_width=3, count=2)
    >>> parse_params("lc", "0")
    LoudnessCtl(max_attenuation=0.0)
    """
    cls = policy_class(tag)
    slots = _KEYS[tag]
    text = text.strip()
    values = [None] * len(slots)
    if "=" not in text:
        values[0] = text
    else:
        for item in text.split(","):
            key, sep, raw = item.partition("=")
            key = key.strip().lower()
            for i, names in enumerate(slots):
                if key in names:
                    break
            else:
                raise ParameterError(f"unknown key {key!r} for policy {tag}")
            if not sep or values[i] is not None:
                raise ParameterError(f"malformed parameter text {text!r}")
            values[i] = raw.strip()
    if values[0] is None:
        raise ParameterError(f"missing main parameter in {text!r}")
    try:
        if cls in (FreqMask, TimeMask):
            return cls(int(values[0]), int(values[1]) if values[1] is not None else 1)
        if cls is FreqWarp:
            return cls(int(values[0]))
        return cls(float(values[0]))
    except ValueError as exc:
        if isinstance(exc, ParameterError):
            raise
        raise ParameterError(f"bad numeric value in {text!r} for policy {tag}") from None


# -- deterministic kernels ---------------------------------------------------


def warp_positions(n, source, target):
    """Source coordinate for each output index of a two-segment warp.

    Output ``[0, target]`` samples input ``[0, source]`` and output
    ``[target, n-1]`` samples input ``[source, n-1]``; both ends stay fixed.
    """
    j = np.arange(n, dtype=np.float64)
    last = n - 1
    left = j * source / target
    right = last - (last - j) * (last - source) / (last - target)
    pos = np.where(j <= target, left, right)
    pos[0] = 0.0
    pos[-1] = last
    return np.clip(pos, 0.0, last)


def interpolate_axis(values, positions, axis):
    """Linearly interpolate ``values`` at fractional ``positions`` along ``axis``."""
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[axis]
    if n == 1:
        return np.take(values, np.zeros(len(positions), dtype=int), axis=axis)
    lo = np.minimum(np.floor(positions).astype(np.int64), n - 2)
    frac = positions - lo
    shape = [1, 1]
    shape[axis] = -1
    frac = frac.reshape(shape)
    a = np.take(values, lo, axis=axis)
    b = np.take(values, lo + 1, axis=axis)
    return a * (1.0 - frac) + b * frac


def warp_axis(values, axis, source, target):
    """Piecewise-linear warp moving index ``source`` to position ``target``."""
    if target == source:
        return np.array(values, dtype=np.float32, copy=True)
    n = values.shape[axis]
    out = interpolate_axis(values, warp_positions(n, source, target), axis)
    return out.astype(np.float32)


def stretched_length(tau, ratio):
    """``max(2, round(tau * (1 + ratio)))`` with halves rounded up."""
    return max(2, math.floor(tau * (1.0 + ratio) + 0.5))


def resample_time(values, new_len):
    """Linearly resample the frame axis of a ``(nu, tau)`` array to ``new_len`` frames."""
    tau = values.shape[1]
    if new_len == tau:
        return np.array(values, dtype=np.float32, copy=True)
    if new_len == 1:
        positions = np.zeros(1)
    else:
        positions = np.arange(new_len, dtype=np.float64) * (tau - 1) / (new_len - 1)
        positions[-1] = tau - 1
    return interpolate_axis(values, positions, axis=1).astype(np.float32)


def draw_masks(rng, max_width, count, axis_len):
    """Draw ``count`` (start, width) spans: width ~ U{0..max_width}, start ~ U{0..axis_len-width}."""
    spans = []
    for _ in range(count):
        width = int(rng.integers(0, max_width + 1))
        start = int(rng.integers(0, axis_len - width + 1))
        spans.append((start, width))
    return spans


def _warp_anchor(rng, n, max_shift, continuous):
    quarter = n // 4
    source = int(rng.integers(quarter, n - quarter + 1))
    if continuous:
        shift = float(rng.uniform(-max_shift, max_shift))
    else:
        shift = int(rng.integers(-max_shift, max_shift + 1))
    target = min(max(source + shift, 1), n - 2)
    return source, target


# -- policies ----------------------------------------------------------------


def time_warp(m, max_shift, seed):
    """Time warping.

    Draws: source frame ``t0 ~ U{tau//4 .. tau - tau//4}``, then a continuous
    distance ``w ~ U[-W*tau, W*tau]``; ``t0 + w`` is clamped to ``[1, tau-2]``.
    """
    params = TimeWarp(max_shift)
    if m.tau < MIN_WARP_LENGTH:
        raise TooShortError(f"time warping needs tau >= {MIN_WARP_LENGTH}, got {m.tau}")
    rng = generator(seed)
    source, target = _warp_anchor(rng, m.tau, params.max_shift * m.tau, continuous=True)
    return m.with_values(warp_axis(m.values, 1, source, target))


def freq_mask(m, max_width, count, seed):
    """Frequency masking with the spectrogram's global minimum.

    Draws per repetition: width ``f ~ U{0..F}``, then start ``f0 ~ U{0..nu-f}``.
    """
    params = FreqMask(max_width, count)
    if params.max_width > m.nu:
        raise ParameterError(f"F={params.max_width} exceeds nu={m.nu}")
    rng = generator(seed)
    out = m.values.copy()
    floor = m.values.min()
    for start, width in draw_masks(rng, params.max_width, params.count, m.nu):
        out[start : start + width, :] = floor
    return m.with_values(out)


def time_mask(m, max_width, count, seed):
    """Time masking; the frame-axis mirror of :func:`freq_mask`."""
    params = TimeMask(max_width, count)
    if params.max_width > m.tau:
        raise ParameterError(f"T={params.max_width} exceeds tau={m.tau}")
    rng = generator(seed)
    out = m.values.copy()
    floor = m.values.min()
    for start, width in draw_masks(rng, params.max_width, params.count, m.tau):
        out[:, start : start + width] = floor
    return m.with_values(out)


def freq_warp(m, max_shift, seed):
    """Frequency warping, identical for every frame.

    Draws: source bin ``v0 ~ U{nu//4 .. nu - nu//4}``, then an integer
    distance ``h ~ U{-H..H}``; ``v0 + h`` is clamped to ``[1, nu-2]``.
    """
    params = FreqWarp(max_shift)
    if m.nu < MIN_WARP_LENGTH:
        raise TooShortError(f"frequency warping needs nu >= {MIN_WARP_LENGTH}, got {m.nu}")
    rng = generator(seed)
    source, target = _warp_anchor(rng, m.nu, params.max_shift, continuous=False)
    return m.with_values(warp_axis(m.values, 0, source, target))


def loudness_ctl(m, max_attenuation, seed):
    """Scale deviations from the minimum by ``1 - lam``, ``lam ~ U[0, Lambda]``."""
    params = LoudnessCtl(max_attenuation)
    rng = generator(seed)
    lam = float(rng.uniform(0.0, params.max_attenuation))
    if lam == 0.0:
        return m.with_values(m.values.copy())
    values = m.values.astype(np.float64)
    low = values.min()
    out = (values - low) * (1.0 - lam) + low
    return m.with_values(out.astype(np.float32))


def time_len_ctl(m, max_stretch, seed):
    """Time length control; returns ``(spectrogram, l)``.

    Draws ``l ~ U[-L*tau, L*tau]`` and resamples to ``max(2, round(tau + l))``
    frames.
    """
    params = TimeLenCtl(max_stretch)
    if m.tau < 2:
        raise TooShortError(f"time length control needs tau >= 2, got {m.tau}")
    rng = generator(seed)
    span = params.max_stretch * m.tau
    drawn = float(rng.uniform(-span, span))
    new_len = max(2, math.floor(m.tau + drawn + 0.5))
    return m.with_values(resample_time(m.values, new_len)), drawn


def pair_ratio(max_stretch, seed):
    """The relative length change ``r ~ U[-L, L]`` used by :func:`time_len_ctl_pair`."""
    params = TimeLenCtl(max_stretch)
    return float(generator(seed).uniform(-params.max_stretch, params.max_stretch))


def time_len_ctl_pair(src, tgt, max_stretch, seed):
    """Stretch a source/target pair by the same ratio so they stay aligned."""
    for m in (src, tgt):
        if m.tau < 2:
            raise TooShortError(f"time length control needs tau >= 2, got {m.tau}")
    ratio = pair_ratio(max_stretch, seed)
    return (
        src.with_values(resample_time(src.values, stretched_length(src.tau, ratio))),
        tgt.with_values(resample_time(tgt.values, stretched_length(tgt.tau, ratio))),
    )


def apply(m, params, seed):
    """Apply one policy given its parameter object."""
    if isinstance(params, TimeWarp):
        return time_warp(m, params.max_shift, seed)
    if isinstance(params, FreqMask):
        return freq_mask(m, params.max_width, params.count, seed)
    if isinstance(params, TimeMask):
        return time_mask(m, params.max_width, params.count, seed)
    if isinstance(params, FreqWarp):
        return freq_warp(m, params.max_shift, seed)
    if isinstance(params, LoudnessCtl):
        return loudness_ctl(m, params.max_attenuation, seed)
    if isinstance(params, TimeLenCtl):
        return time_len_ctl(m, params.max_stretch, seed)[0]
    raise ParameterError(f"not a policy parameter object: {params!r}")


__all__ = [
    "FreqMask",
    "FreqWarp",
    "LoudnessCtl",
    "MelSpectrogram",
    "POLICIES",
    "TimeLenCtl",
    "TimeMask",
    "TimeWarp",
    "apply",
    "freq_mask",
    "freq_warp",
    "loudness_ctl",
    "make_params",
    "pair_ratio",
    "parse_params",
    "time_len_ctl",
    "time_len_ctl_pair",
    "time_mask",
    "time_warp",
]
