"""Acceptance criteria, one test each; a pass/fail summary is printed at the end of the run."""

import functools
import math
import time
from decimal import ROUND_HALF_UP, Decimal

import numpy as np
import pytest

from conftest import all_keys, random_mel, small_search_config, tone, write_dataset
from melaug.asr import FixtureTranscriber
from melaug.augment import (
    FreqMask,
    FreqWarp,
    LoudnessCtl,
    TimeLenCtl,
    TimeMask,
    TimeWarp,
    apply,
    pair_ratio,
    time_len_ctl,
    time_len_ctl_pair,
)
from melaug.cli import FIXTURE_CONFIG, FIXTURE_MEASUREMENTS, fixture_path
from melaug.config import load_config
from melaug.manifest import read_manifest
from melaug.metrics import dtw_align, edit_distance
from melaug.search import (
    BASELINE,
    DatasetStats,
    LiveEvaluator,
    MeasurementTable,
    SearchContext,
    deformation_ratio,
    dpd,
    format_report,
    read_measurements,
    run_search,
    write_report,
)
from melaug.signal import MelConfig, MelSpectrogram, decode_mels, encode_mels, extract_mel, griffin_lim

# Reference DPD rows for the bundled measurements, in schedule order.
REFERENCE_DPD = {
    "tm": [0.643, 1.125, 1.167, 1.762, 1.484, 1.667, 1.667, 1.574],
    "fm": [1.563, 1.923, 2.206, 1.429, 1.923, 1.485, 1.259, 1.370],
    "tw": [1.176, 2.500, 3.158, 3.636, 2.439, 2.182, 2.188, 2.025],
    "fw": [1.042, 1.389, 0.882, 0.714, 0.628, 0.636, 0.557, 0.581],
    "tlc": [2.000, 4.444, 3.158, 8.000, 6.667, 30.00, 7.778, 13.333],
    "lc": [1.667, 2.500, 4.706, 8.000, 6.038, 3.122],
}
REFERENCE_SELECTION = {
    "tm": "T=8,Nt=1",
    "fm": "F=6,Nf=1",
    "tw": "W=0.08",
    "fw": "H=4",
    "tlc": "L=0.12",
    "lc": "Lambda=0.16",
}
REFERENCE_STAGE2 = {
    "tm": ({(1, 8): 2.467, (2, 4): 2.176, (4, 2): 3.364, (8, 1): 1.762}, (4, 2)),
    "fm": ({(1, 6): 4.412, (2, 3): 6.250, (3, 2): 6.818, (6, 1): 2.206}, (3, 2)),
}
REFERENCE_E_P_STAGE1 = {
    "tm": [0.215, 0.217, 0.225, 0.222, 0.232, 0.234, 0.240, 0.248],
    "tw": [0.218, 0.217, 0.220, 0.223, 0.242, 0.256, 0.265, 0.280],
    "lc": [0.213, 0.217, 0.218, 0.221, 0.254, 0.406],
}
SELECTED = [TimeWarp(0.08), FreqMask(3, 2), TimeMask(4, 2), FreqWarp(4), LoudnessCtl(0.16), TimeLenCtl(0.12)]
ZERO = [TimeWarp(0.0), FreqMask(0, 1), TimeMask(0, 1), FreqWarp(0), LoudnessCtl(0.0), TimeLenCtl(0.0)]


def offline_search(policies=("tm", "fm", "tw", "fw", "tlc", "lc")):
    cfg = load_config(fixture_path(FIXTURE_CONFIG))
    table = MeasurementTable(read_measurements(fixture_path(FIXTURE_MEASUREMENTS)))
    ctx = SearchContext(table, DatasetStats(cfg.mean_tau, cfg.nu), cfg.dp_decimals)
    return run_search(ctx, policies, cfg.schedules)


def test_ac1_single_stage_reproduction():
    """AC1 single-stage DPD cells from bundled measurements within +-0.01, T=8 F=6 W=0.08 H=4 L=0.12 Lambda=0.16 selected, < 1 s"""
    start = time.perf_counter()
    results = {r.tag: r for r in offline_search()}
    elapsed = time.perf_counter() - start
    for tag, expected in REFERENCE_DPD.items():
        stage1 = results[tag].records[: len(expected)]
        assert [r.dpd for r in stage1] == pytest.approx(expected, abs=0.01), tag
        assert results[tag].selected[0].param_repr == REFERENCE_SELECTION[tag]
        assert results[tag].selected[0] is max(stage1, key=lambda r: r.dpd)
    assert elapsed < 1.0, f"{elapsed:.3f} s"


def test_ac2_two_stage_reproduction():
    """AC2 two-stage masking candidates {(1,8),(2,4),(4,2),(8,1)} / {(1,6),(2,3),(3,2),(6,1)}, picks (4,2) and (3,2), < 1 s"""
    start = time.perf_counter()
    results = {r.tag: r for r in offline_search(("tm", "fm"))}
    elapsed = time.perf_counter() - start
    for tag, (cells, winner) in REFERENCE_STAGE2.items():
        stage2 = results[tag].records[8:]
        pairs = [(r.params.max_width, r.params.count) for r in stage2]
        assert set(pairs) == set(cells) and len(pairs) == 4
        for r, pair in zip(stage2, pairs):
            assert r.dpd == pytest.approx(cells[pair], abs=0.01), (tag, pair)
        best = results[tag].best
        assert (best.params.max_width, best.params.count) == winner
    assert elapsed < 1.0, f"{elapsed:.3f} s"


def test_ac3_spot_formulas():
    """AC3 spot checks: dpd(0.037,0.222,0.201)=1.762, dpd(0.12,0.205,0.201)=30.00, D_p(FW H=4, nu=80)=0.050"""
    assert abs(dpd(0.037, 0.222, 0.201) - 1.762) <= 0.001
    assert abs(dpd(0.12, 0.205, 0.201) - 30.00) <= 0.01
    assert deformation_ratio(FreqWarp(4), DatasetStats(217.0, 80)) == 0.050


def test_ac4_identity_suite():
    """AC4 zero parameters return bit-identical spectrograms, 100 random inputs x 6 policies, < 1 s"""
    rng = np.random.default_rng(4)
    mels = [random_mel(rng) for _ in range(100)]
    start = time.perf_counter()
    for i, m in enumerate(mels):
        for p in ZERO:
            out = apply(m, p, i)
            assert out.values.tobytes() == m.values.tobytes(), p
            assert out.values.shape == m.values.shape
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0, f"{elapsed:.3f} s"


def test_ac5_determinism(tmp_path):
    """AC5 seed 7 twice is bit-identical, seeds 7 vs 8 differ, 4 workers == serial on a 3x4 live search"""
    m = random_mel(np.random.default_rng(5), nu=80, tau=200)
    differs = False
    for p in SELECTED:
        a, b, c = apply(m, p, 7), apply(m, p, 7), apply(m, p, 8)
        assert a.values.tobytes() == b.values.tobytes(), p
        differs |= a.values.tobytes() != c.values.tobytes()
    assert differs

    policies = ("tw", "tlc", "lc")
    manifest, fixtures = write_dataset(tmp_path, all_keys(policies, 4, 2))
    cfg = load_config(small_search_config(tmp_path, fixtures, policies, points=4, repeats=2))
    entries = read_manifest(manifest)
    stats = DatasetStats(100.0, 80)
    reports = []
    for workers in (1, 4):
        ev = LiveEvaluator(
            entries, FixtureTranscriber(fixtures), 7, repeats=2, gl_iterations=cfg.gl_iterations, workers=workers
        )
        reports.append(format_report(run_search(SearchContext(ev, stats), policies, cfg.schedules)))
    assert reports[0] == reports[1]
    assert len(reports[0].splitlines()) == 1 + 12


@functools.lru_cache(maxsize=None)
def _levenshtein(a, b):
    if not a or not b:
        return len(a) + len(b)
    if a[0] == b[0]:
        return _levenshtein(a[1:], b[1:])
    return 1 + min(_levenshtein(a[1:], b), _levenshtein(a, b[1:]), _levenshtein(a[1:], b[1:]))


def _frame(u, v):
    return 10.0 / math.log(10.0) * math.sqrt(2.0 * sum((p - q) ** 2 for p, q in zip(u[1:], v[1:])))


def _all_paths(n, m):
    def grow(path):
        i, j = path[-1]
        if (i, j) == (n - 1, m - 1):
            yield path
            return
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            if i + di < n and j + dj < m:
                yield from grow(path + [(i + di, j + dj)])

    yield from grow([(0, 0)])


def _brute_dtw(x, y):
    costs = [[_frame(u, v) for v in y] for u in x]
    return min(math.fsum(costs[i][j] for i, j in p) for p in _all_paths(len(x), len(y)))


def test_ac6_oracle_equivalence():
    """AC6 edit_distance == recursive oracle on 200 pairs; dtw cost == brute-force enumeration on 50 pairs within 1e-9"""
    rng = np.random.default_rng(6)
    mismatches = 0
    for _ in range(200):
        a = "".join(rng.choice(list("abcd"), size=int(rng.integers(0, 13))))
        b = "".join(rng.choice(list("abcd"), size=int(rng.integers(0, 13))))
        mismatches += edit_distance(a, b) != _levenshtein(a, b)
    assert mismatches == 0

    for _ in range(50):
        x = rng.normal(size=(int(rng.integers(1, 9)), 3))
        y = rng.normal(size=(int(rng.integers(1, 9)), 3))
        assert abs(dtw_align(x, y)[1] - _brute_dtw(x, y)) <= 1e-9


def test_ac7_signal_properties():
    """AC7 Griffin-Lim error non-increasing over 60 iterations (< 10 s), round-trip cosine > 0.9, MELS bit-exact"""
    m = extract_mel(tone(440.0, seconds=0.5))
    start = time.perf_counter()
    w, errors = griffin_lim(m, 60, return_errors=True)
    elapsed = time.perf_counter() - start
    assert len(errors) == 61
    assert all(b <= a for a, b in zip(errors, errors[1:]))
    assert elapsed < 10.0

    again = extract_mel(w)
    a = m.values.ravel().astype(np.float64)
    b = again.values.ravel().astype(np.float64)
    assert a @ b / (np.linalg.norm(a) * np.linalg.norm(b)) > 0.9

    back = decode_mels(encode_mels(m))
    assert back.values.tobytes() == m.values.tobytes()
    assert back.config == m.config


def test_ac8_tlc_contracts():
    """AC8 TLC length equals round-half-up(tau + l) over 100 draws; pair lengths proportional within 1 frame over 100 triples"""
    rng = np.random.default_rng(8)
    for seed in range(100):
        tau = int(rng.integers(20, 400))
        m = MelSpectrogram(rng.normal(size=(10, tau)).astype(np.float32), MelConfig(n_mels=10))
        out, drawn = time_len_ctl(m, 0.16, seed)
        expected = int((Decimal(tau) + Decimal(drawn)).quantize(Decimal(1), rounding=ROUND_HALF_UP))
        assert out.tau == max(2, expected)

    for seed in range(100):
        ta, tb = sorted(int(t) for t in rng.integers(20, 400, size=2))[::-1]
        src = MelSpectrogram(np.zeros((10, ta), np.float32), MelConfig(n_mels=10))
        tgt = MelSpectrogram(np.zeros((10, tb), np.float32), MelConfig(n_mels=10))
        a, b = time_len_ctl_pair(src, tgt, 0.16, seed)
        r = pair_ratio(0.16, seed)
        assert abs(a.tau - ta * (1 + r)) <= 0.5 and abs(b.tau - tb * (1 + r)) <= 0.5
        assert abs(b.tau - a.tau * tb / ta) <= 1.0


def test_ac9_substitution_documented():
    """AC9 fixture substitution: baseline 0.201 over 64 utterances, 10 repeats per cell, cells equal reference E_p"""
    trials = read_measurements(fixture_path(FIXTURE_MEASUREMENTS))
    baseline = [t for t in trials if t.policy == BASELINE]
    assert len(baseline) == 64 and {t.cer for t in baseline} == {0.201}
    table = MeasurementTable(trials)
    assert all(len(cell) == 640 for cell in table.cells.values())
    cfg = load_config(fixture_path(FIXTURE_CONFIG))
    for tag, values in REFERENCE_E_P_STAGE1.items():
        for p, e in zip(cfg.schedules[tag].values(), values):
            params = {"tm": lambda v: TimeMask(int(v)), "tw": TimeWarp, "lc": LoudnessCtl}[tag](p)
            assert table.evaluate(params) == pytest.approx(e, abs=1e-12)


def test_ac10_throughput(tmp_path):
    """AC10 any single policy on 80x1000 < 50 ms; full offline search with report emission < 5 s"""
    m = random_mel(np.random.default_rng(10), nu=80, tau=1000)
    for p in SELECTED:
        apply(m, p, 0)
        runs = []
        for seed in range(5):
            start = time.perf_counter()
            apply(m, p, seed)
            runs.append(time.perf_counter() - start)
        assert float(np.median(runs)) < 0.050, (p, runs)

    start = time.perf_counter()
    write_report(offline_search(), tmp_path / "report.tsv")
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
