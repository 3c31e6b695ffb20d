"""Audio front-end: WAV I/O, log-mel extraction, MELS files and Griffin-Lim.

Conventions used throughout the package:

* a ``MelSpectrogram`` stores ``values`` as a float32 array of shape
  ``(nu, tau)`` (mel bins by frames), natural-log magnitudes floored at
  ``log(log_floor)``;
* frames are taken without centre padding, so
  ``tau = 1 + (n_samples - n_fft) // hop``;
* the analysis window is a periodic Hann window.
"""

import functools
import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

from melaug.errors import FormatError, ParameterError, TooShortError, UnsupportedFormatError

PCM_SCALE = 32768.0
PEAK_LEVEL = 0.95
SILENCE_PEAK = 1e-6

MELS_MAGIC = b"MELS"
MELS_VERSION = 1
_MELS_HEADER = struct.Struct("<4sBIQ")
_MELS_META = struct.Struct("<dIIddd")

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True)
class MelConfig:
    sample_rate: int = 22050
    n_fft: int = 1024
    hop: int = 256
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = 1e-5

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ParameterError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.n_fft < 2 or self.hop < 1:
            raise ParameterError(f"need n_fft >= 2 and hop >= 1, got {self.n_fft}, {self.hop}")
        if self.hop > self.n_fft:
            raise ParameterError("hop larger than n_fft leaves samples uncovered")
        if self.n_mels < 1:
            raise ParameterError(f"n_mels must be >= 1, got {self.n_mels}")
        if not 0.0 <= self.fmin < self.fmax <= self.sample_rate / 2:
            raise ParameterError(
                f"need 0 <= fmin < fmax <= sample_rate/2, got fmin={self.fmin}, fmax={self.fmax}"
            )
        if not self.log_floor > 0:
            raise ParameterError(f"log_floor must be positive, got {self.log_floor}")

    @property
    def n_bins(self):
        return self.n_fft // 2 + 1

    def frame_count(self, n_samples):
        if n_samples < self.n_fft:
            raise TooShortError(
                f"audio has {n_samples} samples, fewer than one frame of {self.n_fft}"
            )
        return 1 + (n_samples - self.n_fft) // self.hop


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate <= 0:
            raise ParameterError(f"sample_rate must be positive, got {self.sample_rate}")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self):
        return self.samples.size / self.sample_rate


@dataclass
class MelSpectrogram:
    """Log-mel matrix of shape ``(nu, tau)`` plus the config that produced it."""

    values: np.ndarray
    config: MelConfig = field(default_factory=MelConfig)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ParameterError(f"mel values must be a non-empty 2-D array, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ParameterError("mel values must be finite")
        self.values = values
        if self.config.n_mels != values.shape[0]:
            self.config = _replace_n_mels(self.config, values.shape[0])

    @property
    def nu(self):
        return self.values.shape[0]

    @property
    def tau(self):
        return self.values.shape[1]

    @property
    def floor_value(self):
        return np.float32(np.log(self.config.log_floor))

    def with_values(self, values):
        return MelSpectrogram(values, self.config)

    def __eq__(self, other):
        if not isinstance(other, MelSpectrogram):
            return NotImplemented
        return self.config == other.config and np.array_equal(self.values, other.values)


def _replace_n_mels(cfg, n_mels):
    # MelConfig validation does not depend on n_mels beyond >= 1.
    return MelConfig(
        sample_rate=cfg.sample_rate,
        n_fft=cfg.n_fft,
        hop=cfg.hop,
        n_mels=n_mels,
        fmin=cfg.fmin,
        fmax=cfg.fmax,
        log_floor=cfg.log_floor,
    )


def atomic_write_bytes(path, data):
    """Write ``data`` to ``path`` via a temp file in the same directory and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- WAV ---------------------------------------------------------------------


def _iter_chunks(data):
    pos = 12
    while pos + 8 <= len(data):
        chunk_id, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8 : pos + 8 + size]
        yield chunk_id, body
        pos += 8 + size + (size & 1)


def load_wav(path):
    """Read a 16-bit PCM RIFF/WAVE file into a mono ``Waveform``.

    Multichannel files are averaged to mono; samples are scaled by 1/32768.
    """
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    pcm = None
    for chunk_id, body in _iter_chunks(data):
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise FormatError(f"{path}: truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
            if fmt[0] == _WAVE_FORMAT_EXTENSIBLE:
                if len(body) < 40:
                    raise FormatError(f"{path}: truncated WAVE_FORMAT_EXTENSIBLE chunk")
                subformat = struct.unpack_from("<H", body, 24)[0]
                fmt = (subformat,) + fmt[1:]
        elif chunk_id == b"data":
            pcm = body
    if fmt is None:
        raise FormatError(f"{path}: missing fmt chunk")
    if pcm is None:
        raise FormatError(f"{path}: missing data chunk")

    audio_format, channels, sample_rate, _, block_align, bits = fmt
    if audio_format != _WAVE_FORMAT_PCM:
        raise UnsupportedFormatError(f"{path}: only integer PCM is supported (format tag {audio_format})")
    if bits != 16:
        raise UnsupportedFormatError(f"{path}: only 16-bit PCM is supported, got {bits}-bit")
    if channels < 1 or sample_rate < 1 or block_align != 2 * channels:
        raise FormatError(f"{path}: inconsistent fmt chunk")

    n_frames = len(pcm) // block_align
    ints = np.frombuffer(pcm[: n_frames * block_align], dtype="<i2").reshape(n_frames, channels)
    samples = ints.astype(np.float64).mean(axis=1) / PCM_SCALE
    return Waveform(samples, sample_rate)


def encode_wav(w):
    """Serialize a waveform as mono 16-bit PCM WAV bytes (values clipped to full scale)."""
    if not np.all(np.isfinite(w.samples)):
        raise ParameterError("waveform contains non-finite samples")
    pcm = np.clip(np.round(w.samples * PCM_SCALE), -32768, 32767).astype("<i2").tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(pcm),
        b"WAVE",
        b"fmt ",
        16,
        _WAVE_FORMAT_PCM,
        1,
        w.sample_rate,
        w.sample_rate * 2,
        2,
        16,
        b"data",
        len(pcm),
    )
    return header + pcm


def write_wav(w, path):
    atomic_write_bytes(path, encode_wav(w))


# -- mel front-end -----------------------------------------------------------


def hz_to_mel(f):
    """Slaney mel scale: linear below 1 kHz, logarithmic above."""
    f = np.asarray(f, dtype=np.float64)
    lin = f / (200.0 / 3)
    logstep = np.log(6.4) / 27.0
    with np.errstate(divide="ignore"):
        log = 15.0 + np.log(np.maximum(f, 1e-12) / 1000.0) / logstep
    return np.where(f >= 1000.0, log, lin)


def mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    lin = m * (200.0 / 3)
    logstep = np.log(6.4) / 27.0
    log = 1000.0 * np.exp(logstep * (m - 15.0))
    return np.where(m >= 15.0, log, lin)


@dataclass(frozen=True)
class MelFilterbank:
    weights: np.ndarray  # (n_mels, n_fft // 2 + 1)
    break_frequencies: np.ndarray  # (n_mels + 2,) Hz


@functools.lru_cache(maxsize=16)
def mel_filterbank(cfg):
    """Triangular filters with unit peaks, evenly spaced on the mel scale."""
    breaks = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2))
    freqs = np.linspace(0.0, cfg.sample_rate / 2, cfg.n_bins)
    lower, centre, upper = breaks[:-2, None], breaks[1:-1, None], breaks[2:, None]
    rising = (freqs - lower) / (centre - lower)
    falling = (upper - freqs) / (upper - centre)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    empty = np.flatnonzero(weights.max(axis=1) <= 0)
    if empty.size:
        raise ParameterError(
            f"mel filters {empty.tolist()} cover no FFT bin; use fewer mels or a larger n_fft"
        )
    weights.setflags(write=False)
    breaks.setflags(write=False)
    return MelFilterbank(weights, breaks)


@functools.lru_cache(maxsize=16)
def _filterbank_pinv(cfg):
    pinv = np.linalg.pinv(mel_filterbank(cfg).weights)
    pinv.setflags(write=False)
    return pinv


@functools.lru_cache(maxsize=16)
def _window(n_fft):
    n = np.arange(n_fft)
    w = 0.5 - 0.5 * np.cos(2.0 * np.pi * n / n_fft)
    w.setflags(write=False)
    return w


def _spectrum_weights(n_fft):
    # Counts each one-sided bin as many times as it appears in the full FFT.
    weights = np.full(n_fft // 2 + 1, 2.0)
    weights[0] = 1.0
    if n_fft % 2 == 0:
        weights[-1] = 1.0
    return weights


def stft(x, n_fft, hop):
    """One-sided STFT without padding; returns ``(tau, n_fft // 2 + 1)``."""
    frames = np.lib.stride_tricks.sliding_window_view(x, n_fft)[::hop]
    return np.fft.rfft(frames * _window(n_fft), axis=1)


def istft(spec, n_fft, hop):
    """Least-squares inverse of ``stft`` (window-weighted overlap-add).

    The result minimises the distance between its own STFT and ``spec``, which
    is what makes each Griffin-Lim step non-expansive.
    """
    n_frames = spec.shape[0]
    length = n_fft + (n_frames - 1) * hop
    window = _window(n_fft)
    frames = np.fft.irfft(spec, n=n_fft, axis=1) * window
    index = (np.arange(n_frames)[:, None] * hop + np.arange(n_fft)).ravel()
    num = np.bincount(index, weights=frames.ravel(), minlength=length)
    den = np.bincount(index, weights=np.tile(window**2, n_frames), minlength=length)
    out = np.zeros(length)
    covered = den > 1e-12
    out[covered] = num[covered] / den[covered]
    return out


def extract_mel(w, cfg=None):
    cfg = cfg or MelConfig()
    if w.sample_rate != cfg.sample_rate:
        raise ParameterError(
            f"waveform rate {w.sample_rate} Hz does not match config rate {cfg.sample_rate} Hz"
        )
    cfg.frame_count(len(w))
    mag = np.abs(stft(w.samples, cfg.n_fft, cfg.hop))
    mel = mel_filterbank(cfg).weights @ mag.T
    values = np.log(np.maximum(mel, cfg.log_floor))
    return MelSpectrogram(values.astype(np.float32), cfg)


def mel_to_linear(m):
    """Pseudo-invert the filterbank to a ``(tau, n_bins)`` linear magnitude.

    Cells sitting at the log floor are treated as zero energy, and negative
    least-squares solutions are clamped to zero.
    """
    lin = np.exp(m.values.astype(np.float64))
    lin[m.values <= m.floor_value] = 0.0
    mag = lin.T @ _filterbank_pinv(m.config).T
    return np.maximum(mag, 0.0)


def consistency_error(x, magnitude, n_fft, hop):
    """Frobenius distance between ``|STFT(x)|`` and a target magnitude.

    The norm runs over the full two-sided spectrum, i.e. interior one-sided
    bins count twice.
    """
    diff = np.abs(stft(x, n_fft, hop)) - magnitude
    return float(np.sqrt(np.sum(_spectrum_weights(n_fft) * diff**2)))


def _griffin_lim(magnitude, iterations, n_fft, hop):
    weights = _spectrum_weights(n_fft)
    x = istft(magnitude.astype(np.complex128), n_fft, hop)
    spec = stft(x, n_fft, hop)
    errors = []
    for i in range(iterations + 1):
        amp = np.abs(spec)
        errors.append(float(np.sqrt(np.sum(weights * (amp - magnitude) ** 2))))
        if i == iterations:
            break
        phase = np.ones_like(spec)
        nonzero = amp > 0
        phase[nonzero] = spec[nonzero] / amp[nonzero]
        x = istft(magnitude * phase, n_fft, hop)
        spec = stft(x, n_fft, hop)
    return x, errors


def griffin_lim(m, iterations=60, *, return_errors=False):
    """Invert a log-mel spectrogram to audio with plain Griffin-Lim.

    Starts from zero phase and returns a waveform peak-normalised to 0.95.
    With ``return_errors=True`` also returns the consistency error of the
    initial estimate and of each of the ``iterations`` updates.
    """
    if iterations < 1:
        raise ParameterError(f"iterations must be >= 1, got {iterations}")
    cfg = m.config
    magnitude = mel_to_linear(m)
    x, errors = _griffin_lim(magnitude, iterations, cfg.n_fft, cfg.hop)
    peak = np.max(np.abs(x))
    if peak < SILENCE_PEAK:
        x = np.zeros_like(x)
    else:
        x = x * (PEAK_LEVEL / peak)
    w = Waveform(x, cfg.sample_rate)
    if return_errors:
        return w, errors
    return w


# -- MELS files --------------------------------------------------------------


def encode_mels(m):
    cfg = m.config
    header = _MELS_HEADER.pack(MELS_MAGIC, MELS_VERSION, m.nu, m.tau)
    meta = _MELS_META.pack(
        float(cfg.sample_rate), cfg.n_fft, cfg.hop, cfg.fmin, cfg.fmax, cfg.log_floor
    )
    # Frame-major: frame 0's bins, then frame 1's, ...
    payload = np.ascontiguousarray(m.values.T, dtype="<f4").tobytes()
    return header + meta + payload


def decode_mels(data, source="<bytes>"):
    fixed = _MELS_HEADER.size + _MELS_META.size
    if len(data) < fixed:
        raise FormatError(f"{source}: truncated MELS header")
    magic, version, nu, tau = _MELS_HEADER.unpack_from(data, 0)
    if magic != MELS_MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}")
    if version != MELS_VERSION:
        raise UnsupportedFormatError(f"{source}: MELS version {version} not supported")
    sample_rate, n_fft, hop, fmin, fmax, log_floor = _MELS_META.unpack_from(data, _MELS_HEADER.size)
    expected = fixed + 4 * nu * tau
    if len(data) != expected:
        raise FormatError(f"{source}: expected {expected} bytes for {nu}x{tau} values, got {len(data)}")
    if sample_rate != int(sample_rate):
        raise FormatError(f"{source}: non-integer sample rate {sample_rate}")
    cfg = MelConfig(int(sample_rate), n_fft, hop, nu, fmin, fmax, log_floor)
    values = np.frombuffer(data, dtype="<f4", offset=fixed).reshape(tau, nu).T
    return MelSpectrogram(values.astype(np.float32), cfg)


def write_mels(m, path):
    atomic_write_bytes(path, encode_mels(m))


def read_mels(path):
    with open(path, "rb") as f:
        return decode_mels(f.read(), source=os.fspath(path))
