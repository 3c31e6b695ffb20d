"""Transcriber backends used to measure CER of vocoded audio.

Two backends share one interface, ``transcribe(waveform, key) -> Transcript``:

``fixture``
    Reads ``<fixture_dir>/<key>.txt``. Deterministic and offline.
``remote``
    POSTs the waveform as a 16-bit WAV file to an HTTP endpoint and reads the
    ``transcript`` field of the JSON reply.

Request keys are built by :func:`request_key` and look like
``utt001__tw__3__7`` (``utt001__baseline`` for un-augmented audio).
"""

import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import requests

from melaug.errors import (
    FixtureMissError,
    ParameterError,
    ServiceError,
    TransientError,
)
from melaug.metrics import Transcript
from melaug.signal import encode_wav

logger = logging.getLogger(__name__)

BACKOFF_START = 0.5
BACKOFF_FACTOR = 2.0


def request_key(utt_id, policy=None, param_index=None, repeat=None):
    if policy is None:
        return f"{utt_id}__baseline"
    return f"{utt_id}__{policy}__{param_index}__{repeat}"


@dataclass(frozen=True)
class TranscriberConfig:
    backend: str = "fixture"
    endpoint: Optional[str] = None
    fixture_dir: Optional[str] = None
    timeout: float = 30.0
    retries: int = 3
    language_hint: str = "ko-KR"
    max_in_flight: int = 4

    def __post_init__(self):
        if self.backend not in ("remote", "fixture"):
            raise ParameterError(f"unknown transcriber backend {self.backend!r}")
        if self.backend == "remote" and not self.endpoint:
            raise ParameterError("remote transcriber needs an endpoint")
        if self.backend == "fixture" and not self.fixture_dir:
            raise ParameterError("fixture transcriber needs fixture_dir")
        if not self.timeout > 0:
            raise ParameterError(f"timeout must be positive, got {self.timeout}")
        if self.retries < 1:
            raise ParameterError(f"retries must be >= 1, got {self.retries}")
        if self.max_in_flight < 1:
            raise ParameterError(f"max_in_flight must be >= 1, got {self.max_in_flight}")


def _check_waveform(w):
    if len(w) == 0:
        raise ParameterError("cannot transcribe an empty waveform")


class FixtureTranscriber:
    def __init__(self, fixture_dir):
        self.fixture_dir = Path(fixture_dir)

    def transcribe(self, w, key):
        _check_waveform(w)
        path = self.fixture_dir / f"{key}.txt"
        try:
            text = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise FixtureMissError(f"no fixture transcript {path}") from None
        return Transcript(text, key)


class RemoteTranscriber:
    """HTTP client with bounded retries and a cap on concurrent requests.

    Successful results are memoised per key, so a key is never counted twice
    even if a caller retries at a higher level.
    """

    def __init__(
        self,
        endpoint,
        timeout=30.0,
        retries=3,
        language_hint="ko-KR",
        max_in_flight=4,
        sleep=time.sleep,
    ):
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries
        self.language_hint = language_hint
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._lock = threading.Lock()
        self._results = {}

    def _post(self, body, key):
        headers = {"Content-Type": "audio/wav", "X-Request-Key": key}
        if self.language_hint:
            headers["X-Language"] = self.language_hint
        with self._slots:
            return requests.post(self.endpoint, data=body, headers=headers, timeout=self.timeout)

    def transcribe(self, w, key):
        _check_waveform(w)
        with self._lock:
            if key in self._results:
                return self._results[key]
        body = encode_wav(w)
        delay = BACKOFF_START
        for attempt in range(1, self.retries + 1):
            try:
                response = self._post(body, key)
                break
            except (requests.Timeout, requests.ConnectionError) as exc:
                logger.warning("ASR request %s failed (attempt %d/%d): %s", key, attempt, self.retries, exc)
                if attempt == self.retries:
                    raise TransientError(f"{key}: gave up after {self.retries} attempts: {exc}") from exc
                self._sleep(delay)
                delay *= BACKOFF_FACTOR

        if not 200 <= response.status_code < 300:
            raise ServiceError(response.status_code, response.text[:200])
        try:
            text = response.json()["transcript"]
        except (ValueError, KeyError, TypeError):
            raise ServiceError(response.status_code, "reply lacks a string 'transcript' field") from None
        if not isinstance(text, str):
            raise ServiceError(response.status_code, "'transcript' is not a string")
        result = Transcript(text, key)
        with self._lock:
            return self._results.setdefault(key, result)


def make_transcriber(cfg):
    if cfg.backend == "fixture":
        return FixtureTranscriber(cfg.fixture_dir)
    return RemoteTranscriber(
        cfg.endpoint,
        timeout=cfg.timeout,
        retries=cfg.retries,
        language_hint=cfg.language_hint,
        max_in_flight=cfg.max_in_flight,
    )
