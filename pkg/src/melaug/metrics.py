"""Objective metrics: character/word error rate, DTW alignment and MCD."""

import math
import re
import unicodedata
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct

from melaug.errors import ParameterError, UndefinedReferenceError

MCD_CONST = 10.0 / math.log(10.0) * math.sqrt(2.0)
DEFAULT_MCD_ORDER = 13

_WHITESPACE = re.compile(r"\s+")


def normalize_text(text):
    """NFC-normalise, collapse whitespace runs to one space and trim. No case folding."""
    return _WHITESPACE.sub(" ", unicodedata.normalize("NFC", text)).strip()


@dataclass(frozen=True)
class Transcript:
    text: str
    utterance_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "text", normalize_text(self.text))


def _text(t):
    return t.text if isinstance(t, Transcript) else normalize_text(t)


def edit_distance(a, b):
    """Levenshtein distance with unit costs over any two sequences.

    Strings compare by unicode code point, spaces included.
    """
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        current = [i]
        for j, y in enumerate(b, 1):
            current.append(
                min(
                    previous[j] + 1,
                    current[j - 1] + 1,
                    previous[j - 1] + (x != y),
                )
            )
        previous = current
    return previous[-1]


def cer(hyp, ref):
    """Character error rate of ``hyp`` against ``ref`` after normalisation.

    Not clamped: a long hypothesis can push the rate above 1.
    """
    hyp, ref = _text(hyp), _text(ref)
    if not ref:
        raise UndefinedReferenceError("CER is undefined for an empty reference")
    return edit_distance(hyp, ref) / len(ref)


def wer(hyp, ref):
    hyp, ref = _text(hyp).split(), _text(ref).split()
    if not ref:
        raise UndefinedReferenceError("WER is undefined for an empty reference")
    return edit_distance(hyp, ref) / len(ref)


# -- cepstral distortion -----------------------------------------------------


def _as_sequence(x, name):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ParameterError(f"{name} must be a non-empty (frames, dim) array, got {x.shape}")
    if x.shape[1] < 2:
        raise ParameterError(f"{name} needs at least 2 coefficients per frame")
    if not np.all(np.isfinite(x)):
        raise ParameterError(f"{name} contains non-finite values")
    return x


def frame_distances(x, y):
    """Pairwise MCD frame distance in dB, ignoring coefficient 0."""
    diff = x[:, None, 1:] - y[None, :, 1:]
    return MCD_CONST * np.sqrt(np.sum(diff**2, axis=-1))


def dtw_align(x, y):
    """Align two cepstral sequences with steps (1,0), (0,1), (1,1).

    Returns ``(path, cost)`` where ``path`` runs from ``(0, 0)`` to
    ``(len(x)-1, len(y)-1)`` and ``cost`` is the summed frame distance.
    """
    x = _as_sequence(x, "x")
    y = _as_sequence(y, "y")
    if x.shape[1] != y.shape[1]:
        raise ParameterError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    dist = frame_distances(x, y)
    n, m = dist.shape
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        row = dist[i - 1]
        prev = acc[i - 1]
        cur = acc[i]
        for j in range(1, m + 1):
            cur[j] = row[j - 1] + min(prev[j - 1], prev[j], cur[j - 1])

    path = [(n - 1, m - 1)]
    i, j = n, m
    while (i, j) != (1, 1):
        # Prefer the diagonal on ties so the path stays short.
        options = ((acc[i - 1, j - 1], i - 1, j - 1), (acc[i - 1, j], i - 1, j), (acc[i, j - 1], i, j - 1))
        _, i, j = min(options, key=lambda o: o[0])
        path.append((i - 1, j - 1))
    path.reverse()
    return path, float(acc[n, m])


def mcd(x, y):
    """Mean mel-cepstral distortion (dB) along the DTW path; c0 is excluded."""
    path, _ = dtw_align(x, y)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    idx = np.array(path)
    diff = x[idx[:, 0], 1:] - y[idx[:, 1], 1:]
    return float(np.mean(MCD_CONST * np.sqrt(np.sum(diff**2, axis=1))))


def mel_to_mcep(m, order=DEFAULT_MCD_ORDER):
    """Orthonormal DCT-II of each log-mel frame, keeping coefficients ``0..order``.

    Returns a ``(tau, order + 1)`` array.
    """
    if not 1 <= order < m.nu:
        raise ParameterError(f"order must satisfy 1 <= order < nu={m.nu}, got {order}")
    coeffs = dct(m.values.astype(np.float64), type=2, norm="ortho", axis=0)
    return np.ascontiguousarray(coeffs[: order + 1].T)
