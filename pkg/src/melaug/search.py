"""DPD ratio and the grid search that picks augmentation hyperparameters.

For a policy parameter ``p`` the deformation-per-deteriorating ratio is::

    DPD_p = D_p / |E_p - E_o|

``D_p`` is the parameter's maximum deformation ratio (see
:func:`deformation_ratio`), ``E_p`` the mean CER of Griffin-Lim audio decoded
from augmented spectrograms and ``E_o`` the same without augmentation. The
search evaluates a schedule of parameter values per policy and keeps the one
with the largest ratio. Masking policies are searched in two stages: first
the width with one mask, then every (width, count) split of the best total.

``E_p`` can come from a live run (:class:`LiveEvaluator`) or from a
measurements file recorded earlier (:class:`MeasurementTable`); both yield the
same report for the same trials.
"""

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from melaug.asr import request_key
from melaug.augment import (
    FreqMask,
    FreqWarp,
    LoudnessCtl,
    TimeLenCtl,
    TimeMask,
    TimeWarp,
    apply,
    make_params,
    parse_params,
    policy_class,
)
from melaug.errors import MelAugError, ParameterError, ParseError, TranscriberError
from melaug.metrics import cer
from melaug.rng import check_seed, substream
from melaug.signal import MelConfig, atomic_write_bytes, extract_mel, griffin_lim, load_wav

logger = logging.getLogger(__name__)

BASELINE = "baseline"
DEFAULT_REPEATS = 10
DEFAULT_GL_ITERATIONS = 60
# Report order follows the usual presentation: masks, warps, then TLC and LC.
POLICY_ORDER = ("tm", "fm", "tw", "fw", "tlc", "lc")
MASKING = ("tm", "fm")

MEASUREMENT_COLUMNS = ("policy", "param_index", "param_repr", "utt_id", "repeat", "cer")
REPORT_COLUMNS = ("policy", "param_repr", "d_p", "e_p", "e_o", "dpd", "selected", "infinite_flag")


@dataclass(frozen=True)
class DatasetStats:
    mean_tau: float
    nu: int
    utterance_count: int = 0

    def __post_init__(self):
        if not self.mean_tau > 0:
            raise ParameterError(f"mean_tau must be positive, got {self.mean_tau}")
        if self.nu < 1:
            raise ParameterError(f"nu must be >= 1, got {self.nu}")


def dataset_stats(taus, nu):
    taus = list(taus)
    if not taus:
        raise MelAugError("no utterances to compute dataset statistics from")
    return DatasetStats(math.fsum(taus) / len(taus), nu, len(taus))


def deformation_ratio(params, stats):
    """Maximum deformation ratio ``D_p`` of a policy parameter."""
    if isinstance(params, TimeMask):
        return params.max_width * params.count / stats.mean_tau
    if isinstance(params, FreqMask):
        return params.max_width * params.count / stats.nu
    if isinstance(params, FreqWarp):
        return params.max_shift / stats.nu
    if isinstance(params, TimeWarp):
        return float(params.max_shift)
    if isinstance(params, TimeLenCtl):
        return float(params.max_stretch)
    if isinstance(params, LoudnessCtl):
        return float(params.max_attenuation)
    raise ParameterError(f"not a policy parameter object: {params!r}")


def dpd(d_p, e_p, e_o):
    """``d_p / |e_p - e_o|``; ``math.inf`` when there is no deterioration."""
    if d_p < 0 or e_p < 0 or e_o < 0:
        raise ParameterError(f"DPD inputs must be non-negative, got {d_p}, {e_p}, {e_o}")
    gap = abs(e_p - e_o)
    if gap == 0:
        return math.inf
    return d_p / gap


@dataclass(frozen=True)
class DpdRecord:
    policy: str
    params: object
    d_p: float
    e_p: float
    e_o: float
    dpd: float
    param_index: int = 0

    @property
    def infinite(self):
        return math.isinf(self.dpd)

    @property
    def param_repr(self):
        return self.params.describe()


def make_record(params, d_p, e_p, e_o, param_index=0):
    return DpdRecord(params.tag, params, d_p, e_p, e_o, dpd(d_p, e_p, e_o), param_index)


def select_best(records):
    """Largest DPD wins; infinite ratios beat finite ones; ties go to larger ``D_p``."""
    if not records:
        raise MelAugError("cannot select from an empty record list")
    ranked = max(
        enumerate(records),
        key=lambda ir: (ir[1].infinite, 0.0 if ir[1].infinite else ir[1].dpd, ir[1].d_p, -ir[0]),
    )
    return ranked[1]


@dataclass(frozen=True)
class SearchSchedule:
    kind: str
    start: float
    step: float  # ratio for geometric schedules
    count: int

    def __post_init__(self):
        if self.kind not in ("arithmetic", "geometric"):
            raise ParameterError(f"schedule kind must be arithmetic or geometric, got {self.kind!r}")
        if self.count < 1:
            raise ParameterError(f"schedule count must be >= 1, got {self.count}")
        if self.kind == "arithmetic" and not self.step > 0:
            raise ParameterError(f"arithmetic step must be positive, got {self.step}")
        if self.kind == "geometric" and not self.step > 1:
            raise ParameterError(f"geometric ratio must exceed 1, got {self.step}")

    def values(self):
        # Rounded so that 0.02 + 5 * 0.02 reads back as 0.12.
        if self.kind == "arithmetic":
            return [round(self.start + i * self.step, 10) for i in range(self.count)]
        return [round(self.start * self.step**i, 10) for i in range(self.count)]


DEFAULT_SCHEDULES = {
    "tm": SearchSchedule("arithmetic", 2, 2, 8),
    "fm": SearchSchedule("arithmetic", 2, 2, 8),
    "tw": SearchSchedule("arithmetic", 0.02, 0.02, 8),
    "fw": SearchSchedule("arithmetic", 2, 2, 8),
    "tlc": SearchSchedule("arithmetic", 0.02, 0.02, 8),
    "lc": SearchSchedule("geometric", 0.02, 2, 6),
}


def divisor_pairs(total):
    """All ``(width, count)`` with ``width * count == total``, widths ascending."""
    if total == 0:
        return [(0, 1)]
    return [(w, total // w) for w in range(1, total + 1) if total % w == 0]


# -- trials ------------------------------------------------------------------


@dataclass(frozen=True)
class Trial:
    """One measurement row: a single transcription scored against its reference."""

    policy: str
    param_index: int
    param_repr: str
    utt_id: str
    repeat: int
    cer: float


@dataclass(frozen=True)
class Exclusion:
    utt_id: str
    key: str
    reason: str


def mean_cer(trials):
    """Order-independent mean: exact ``math.fsum`` over trials sorted by (utt_id, repeat)."""
    trials = sorted(trials, key=lambda t: (t.utt_id, t.repeat))
    if not trials:
        raise MelAugError("every trial failed; nothing to average")
    return math.fsum(t.cer for t in trials) / len(trials)


def load_mels(manifest, cfg=None):
    """Extract log-mels for every manifest entry, keyed by utterance id."""
    cfg = cfg or MelConfig()
    return {e.utt_id: extract_mel(load_wav(e.audio_path), cfg) for e in manifest}


def _run_jobs(jobs, transcriber, gl_iterations, workers):
    """Evaluate ``(entry, mel, params, aug_seed, key, trial_stub)`` jobs."""

    def run(job):
        entry, mel, params, aug_seed, key, stub = job
        m = mel if params is None else apply(mel, params, aug_seed)
        w = griffin_lim(m, gl_iterations)
        try:
            hyp = transcriber.transcribe(w, key)
        except TranscriberError as exc:
            return Exclusion(entry.utt_id, key, f"{type(exc).__name__}: {exc}")
        return Trial(*stub, cer(hyp, entry.transcript))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]
    trials = [r for r in results if isinstance(r, Trial)]
    exclusions = [r for r in results if isinstance(r, Exclusion)]
    for ex in exclusions:
        logger.warning("excluded %s: %s", ex.key, ex.reason)
    return trials, exclusions


def measure_baseline(manifest, mels, transcriber, gl_iterations=DEFAULT_GL_ITERATIONS, workers=1):
    jobs = [
        (e, mels[e.utt_id], None, None, request_key(e.utt_id), (BASELINE, 0, "-", e.utt_id, 0))
        for e in manifest
    ]
    return _run_jobs(jobs, transcriber, gl_iterations, workers)


def measure_policy(
    manifest,
    mels,
    params,
    param_index,
    repeats,
    transcriber,
    seed,
    gl_iterations=DEFAULT_GL_ITERATIONS,
    workers=1,
):
    if repeats < 1:
        raise ParameterError(f"repeats must be >= 1, got {repeats}")
    seed = check_seed(seed)
    tag, text = params.tag, params.describe()
    jobs = []
    for e in manifest:
        for r in range(repeats):
            aug_seed = substream(seed, e.utt_id, tag, param_index, r)
            key = request_key(e.utt_id, tag, param_index, r)
            jobs.append((e, mels[e.utt_id], params, aug_seed, key, (tag, param_index, text, e.utt_id, r)))
    return _run_jobs(jobs, transcriber, gl_iterations, workers)


def estimate_e_o(manifest, transcriber, gl_iterations=DEFAULT_GL_ITERATIONS, cfg=None, workers=1):
    """Mean CER of Griffin-Lim audio from un-augmented mels."""
    if not manifest:
        raise MelAugError("empty manifest")
    trials, _ = measure_baseline(manifest, load_mels(manifest, cfg), transcriber, gl_iterations, workers)
    return mean_cer(trials)


def estimate_e_p(
    manifest,
    params,
    repeats,
    transcriber,
    seed,
    gl_iterations=DEFAULT_GL_ITERATIONS,
    cfg=None,
    param_index=0,
    workers=1,
):
    """Mean CER over every (utterance, repeat) augmented trial."""
    if not manifest:
        raise MelAugError("empty manifest")
    mels = load_mels(manifest, cfg)
    trials, _ = measure_policy(
        manifest, mels, params, param_index, repeats, transcriber, seed, gl_iterations, workers
    )
    return mean_cer(trials)


# -- evaluators --------------------------------------------------------------


class LiveEvaluator:
    """Measures ``E_o`` and ``E_p`` by vocoding, transcribing and scoring.

    Results are cached per parameter value, so a stage-2 masking candidate that
    equals the stage-1 winner is not measured twice. Every trial is kept in
    ``trials`` for export as a measurements file.
    """

    def __init__(
        self,
        manifest,
        transcriber,
        seed,
        repeats=DEFAULT_REPEATS,
        gl_iterations=DEFAULT_GL_ITERATIONS,
        cfg=None,
        workers=1,
        mels=None,
    ):
        if not manifest:
            raise MelAugError("empty manifest")
        self.manifest = list(manifest)
        self.transcriber = transcriber
        self.seed = check_seed(seed)
        self.repeats = repeats
        self.gl_iterations = gl_iterations
        self.workers = workers
        self.mels = mels if mels is not None else load_mels(self.manifest, cfg)
        self.trials = []
        self.exclusions = []
        self._cache = {}
        baseline, excluded = measure_baseline(
            self.manifest, self.mels, transcriber, gl_iterations, workers
        )
        self.trials.extend(baseline)
        self.exclusions.extend(excluded)
        self.e_o = mean_cer(baseline)

    def evaluate(self, params, param_index):
        key = (params.tag, params.describe())
        if key not in self._cache:
            trials, excluded = measure_policy(
                self.manifest,
                self.mels,
                params,
                param_index,
                self.repeats,
                self.transcriber,
                self.seed,
                self.gl_iterations,
                self.workers,
            )
            self.trials.extend(trials)
            self.exclusions.extend(excluded)
            self._cache[key] = mean_cer(trials)
        return self._cache[key]


class MeasurementTable:
    """Serves ``E_o`` and ``E_p`` from previously recorded trials."""

    def __init__(self, trials):
        self.trials = list(trials)
        if not self.trials:
            raise MelAugError("empty measurement set")
        self.cells = {}
        baseline = []
        for t in self.trials:
            if t.policy == BASELINE:
                baseline.append(t)
            else:
                self.cells.setdefault((t.policy, t.param_repr), []).append(t)
        if not baseline:
            raise MelAugError("measurements contain no baseline rows; E_o is unknown")
        self.e_o = mean_cer(baseline)
        self._means = {k: mean_cer(v) for k, v in self.cells.items()}

    def evaluate(self, params, param_index=None):
        key = (params.tag, params.describe())
        try:
            return self._means[key]
        except KeyError:
            raise MelAugError(f"no measurements for {key[0]} {key[1]}") from None


@dataclass
class SearchContext:
    evaluator: object
    stats: DatasetStats
    dp_decimals: Optional[int] = None

    @property
    def e_o(self):
        return self.evaluator.e_o

    def record(self, params, param_index):
        d_p = deformation_ratio(params, self.stats)
        if self.dp_decimals is not None:
            d_p = round(d_p, self.dp_decimals)
        return make_record(params, d_p, self.evaluator.evaluate(params, param_index), self.e_o, param_index)


# -- search ------------------------------------------------------------------


def search_policy(tag, schedule, ctx):
    """Evaluate every schedule point of one policy; returns ``(records, best)``."""
    policy_class(tag)
    records = [ctx.record(make_params(tag, v), i) for i, v in enumerate(schedule.values())]
    return records, select_best(records)


def search_masking_two_stage(tag, stage1, ctx):
    """Width search with one mask, then every (width, count) split of the winner.

    Returns ``(stage1_records, stage2_records, best)``.
    """
    if tag not in MASKING:
        raise ParameterError(f"two-stage search applies to masking policies, not {tag!r}")
    first, first_best = search_policy(tag, stage1, ctx)
    total = first_best.params.max_width * first_best.params.count
    cls = policy_class(tag)
    offset = len(first)
    second = [ctx.record(cls(w, n), offset + i) for i, (w, n) in enumerate(divisor_pairs(total))]
    return first, second, select_best(second)


@dataclass
class PolicyResult:
    tag: str
    records: list
    selected: list = field(default_factory=list)

    @property
    def best(self):
        return self.selected[-1]


def run_search(ctx, policies=POLICY_ORDER, schedules=None):
    schedules = {**DEFAULT_SCHEDULES, **(schedules or {})}
    results = []
    for tag in policies:
        if tag in MASKING:
            first, second, best = search_masking_two_stage(tag, schedules[tag], ctx)
            first_best = select_best(first)
            results.append(PolicyResult(tag, first + second, [first_best, best]))
        else:
            records, best = search_policy(tag, schedules[tag], ctx)
            results.append(PolicyResult(tag, records, [best]))
    return results


# -- files -------------------------------------------------------------------


def format_measurements(trials):
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter="\t", lineterminator="\n")
    writer.writerow(MEASUREMENT_COLUMNS)
    for t in trials:
        writer.writerow([t.policy, t.param_index, t.param_repr, t.utt_id, t.repeat, repr(float(t.cer))])
    return buf.getvalue()


def write_measurements(trials, path):
    atomic_write_bytes(path, format_measurements(trials).encode("utf-8"))


def parse_measurements(lines):
    """Parse measurement TSV lines into trials; errors carry 1-based line numbers."""
    reader = csv.reader(lines, delimiter="\t")
    trials = []
    header = None
    for lineno, row in enumerate(reader, 1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if header is None:
            header = tuple(c.strip() for c in row)
            if header != MEASUREMENT_COLUMNS:
                raise ParseError(f"expected header {' '.join(MEASUREMENT_COLUMNS)}", lineno)
            continue
        if len(row) != len(MEASUREMENT_COLUMNS):
            raise ParseError(f"expected {len(MEASUREMENT_COLUMNS)} columns, got {len(row)}", lineno)
        policy, index, text, utt, repeat, value = (c.strip() for c in row)
        try:
            trial = Trial(policy, int(index), text, utt, int(repeat), float(value))
        except ValueError:
            raise ParseError("non-numeric param_index, repeat or cer", lineno) from None
        if not math.isfinite(trial.cer) or trial.cer < 0:
            raise ParseError(f"cer must be finite and non-negative, got {value}", lineno)
        if policy != BASELINE:
            try:
                parse_params(policy, text)
            except ParameterError as exc:
                raise ParseError(str(exc), lineno) from None
        trials.append(trial)
    if header is None:
        raise ParseError("missing header row", 1)
    if not trials:
        raise MelAugError("empty measurement set")
    return trials


def read_measurements(path):
    with open(path, encoding="utf-8", newline="") as f:
        return parse_measurements(f)


def dpd_table_from_measurements(trials, stats, dp_decimals=None):
    """One record per measured (policy, parameter), in first-appearance order."""
    table = MeasurementTable(trials)
    ctx = SearchContext(table, stats, dp_decimals)
    records = []
    for (policy, text), cell in table.cells.items():
        records.append(ctx.record(parse_params(policy, text), cell[0].param_index))
    return records


def _fmt(x):
    return "inf" if math.isinf(x) else f"{x:.6f}"


def format_report(results):
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter="\t", lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for result in results:
        chosen = {id(r) for r in result.selected}
        for r in result.records:
            writer.writerow(
                [
                    r.policy,
                    r.param_repr,
                    _fmt(r.d_p),
                    _fmt(r.e_p),
                    _fmt(r.e_o),
                    _fmt(r.dpd),
                    int(id(r) in chosen),
                    int(r.infinite),
                ]
            )
    return buf.getvalue()


def write_report(results, path):
    atomic_write_bytes(path, format_report(results).encode("utf-8"))


def read_report(path):
    with open(path, encoding="utf-8", newline="") as f:
        rows = list(csv.DictReader(f, delimiter="\t"))
    return rows
