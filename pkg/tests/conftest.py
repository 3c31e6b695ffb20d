import hashlib

import numpy as np
import pytest

from melaug.asr import request_key
from melaug.signal import MelConfig, MelSpectrogram, Waveform, extract_mel, write_wav

SR = 22050

_acceptance = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if item.module.__name__.endswith("test_acceptance") and report.when == "call":
        doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
        _acceptance.append(("PASS" if report.passed else "FAIL", doc))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for status, doc in _acceptance:
        terminalreporter.write_line(f"{status}  {doc}")


def tone(freq=440.0, seconds=0.5, amp=0.5, sr=SR):
    t = np.arange(int(round(seconds * sr))) / sr
    return Waveform(amp * np.sin(2 * np.pi * freq * t), sr)


def random_mel(rng, nu=None, tau=None):
    nu = nu or int(rng.integers(8, 81))
    tau = tau or int(rng.integers(8, 301))
    values = rng.normal(-4.0, 2.0, size=(nu, tau))
    return MelSpectrogram(values.astype(np.float32), MelConfig(n_mels=nu))


@pytest.fixture
def tone_wave():
    return tone()


@pytest.fixture
def tone_mel(tone_wave):
    return extract_mel(tone_wave)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


REFERENCES = {
    "utt_a": "안녕하세요 반갑습니다",
    "utt_b": "오늘 날씨가 좋네요",
}


def _garble(text, key):
    """Deterministically drop or swap a character depending on the key hash."""
    h = hashlib.sha256(key.encode()).digest()
    chars = list(text)
    kind = h[0] % 3
    pos = h[1] % len(chars)
    if kind == 1:
        del chars[pos]
    elif kind == 2:
        chars[pos] = "x"
    return "".join(chars)


def write_dataset(root, keys_for, echo=False):
    """Two short utterances, a manifest and fixture transcripts for every key in ``keys_for``."""
    audio = root / "audio"
    fixtures = root / "asr"
    audio.mkdir()
    fixtures.mkdir()
    lines = []
    for i, (utt, text) in enumerate(REFERENCES.items()):
        w = tone(300.0 + 150 * i, seconds=0.35 + 0.05 * i)
        write_wav(w, audio / f"{utt}.wav")
        lines.append(f"{utt}\taudio/{utt}.wav\t{text}")
        for key in [request_key(utt)] + keys_for(utt):
            hyp = text if echo else _garble(text, key)
            (fixtures / f"{key}.txt").write_text(hyp, encoding="utf-8")
    manifest = root / "manifest.tsv"
    manifest.write_text("# utt\tpath\ttext\n" + "\n".join(lines) + "\n", encoding="utf-8")
    return manifest, fixtures


def small_search_config(root, fixtures, policies=("tw", "tlc", "lc"), points=4, repeats=2):
    lines = [
        "griffin_lim.iterations = 4",
        f"search.repeats = {repeats}",
        "transcriber.backend = fixture",
        f"transcriber.fixture_dir = {fixtures}",
    ]
    for tag in policies:
        lines.append(f"schedule.{tag}.count = {points}")
    path = root / "search.conf"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def all_keys(policies=("tw", "tlc", "lc"), points=4, repeats=2):
    def keys_for(utt):
        return [
            request_key(utt, tag, i, r) for tag in policies for i in range(points) for r in range(repeats)
        ]

    return keys_for
