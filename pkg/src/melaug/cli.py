"""Command-line entry point: ``melaug <command> ...``.

Exit codes: 0 success, 1 runtime / I/O / service failure, 2 usage or
parameter error.
"""

import argparse
import logging
import sys
from importlib import resources
from pathlib import Path

from melaug.asr import make_transcriber
from melaug.augment import POLICIES, apply, parse_params, time_len_ctl_pair
from melaug.config import ToolConfig, load_config
from melaug.errors import MelAugError, ParameterError, ParseError
from melaug.manifest import read_manifest
from melaug.metrics import cer, mcd, mel_to_mcep, wer
from melaug.search import (
    POLICY_ORDER,
    DatasetStats,
    LiveEvaluator,
    MeasurementTable,
    SearchContext,
    dataset_stats,
    load_mels,
    read_measurements,
    run_search,
    write_measurements,
    write_report,
)
from melaug.signal import (
    atomic_write_bytes,
    extract_mel,
    griffin_lim,
    load_wav,
    read_mels,
    write_mels,
    write_wav,
)

logger = logging.getLogger("melaug")

FIXTURE_MEASUREMENTS = "kss_validation_measurements.tsv"
FIXTURE_CONFIG = "kss_validation.conf"


class UsageError(Exception):
    pass


def fixture_path(name):
    return resources.files("melaug") / "data" / name


def _config(args):
    return load_config(args.config) if getattr(args, "config", None) else ToolConfig()


def cmd_extract(args):
    cfg = _config(args)
    m = extract_mel(load_wav(args.input), cfg.mel)
    write_mels(m, args.output)
    print(f"tau={m.tau} nu={m.nu}")
    return 0


def cmd_augment(args):
    try:
        params = parse_params(args.policy, args.param)
    except ParameterError as exc:
        raise UsageError(str(exc)) from None
    pair = args.pair_in is not None or args.pair_out is not None
    if pair and (args.pair_in is None or args.pair_out is None):
        raise UsageError("--pair-in and --pair-out must be given together")
    if pair and args.policy != "tlc":
        raise UsageError("pair mode is only defined for --policy tlc")

    m = read_mels(args.input)
    if pair:
        src, tgt = time_len_ctl_pair(m, read_mels(args.pair_in), params.max_stretch, args.seed)
        write_mels(src, args.output)
        write_mels(tgt, args.pair_out)
        print(f"tau={src.tau} pair_tau={tgt.tau}")
    else:
        out = apply(m, params, args.seed)
        write_mels(out, args.output)
        print(f"tau={out.tau} nu={out.nu}")
    return 0


def cmd_invert(args):
    iterations = args.iters if args.iters is not None else _config(args).gl_iterations
    write_wav(griffin_lim(read_mels(args.input), iterations), args.output)
    return 0


def cmd_stats(args):
    cfg = _config(args)
    manifest = read_manifest(args.manifest)
    if not manifest:
        print(f"error: manifest {args.manifest} is empty", file=sys.stderr)
        return 1
    taus = []
    for entry in manifest:
        try:
            w = load_wav(entry.audio_path)
            if w.sample_rate != cfg.mel.sample_rate:
                raise ParameterError(f"sample rate {w.sample_rate} != {cfg.mel.sample_rate}")
            taus.append(cfg.mel.frame_count(len(w)))
        except (OSError, MelAugError) as exc:
            print(f"unreadable: {entry.utt_id} ({entry.audio_path}): {exc}", file=sys.stderr)
    if not taus:
        print("error: no readable utterances", file=sys.stderr)
        return 1
    stats = dataset_stats(taus, cfg.mel.n_mels)
    print(f"utterances\t{stats.utterance_count}")
    print(f"E(tau)\t{stats.mean_tau:.1f}")
    print(f"nu\t{stats.nu}")
    return 0


def _stats_for(cfg, manifest, mels=None):
    if cfg.mean_tau is not None:
        return DatasetStats(cfg.mean_tau, cfg.nu if cfg.nu is not None else cfg.mel.n_mels)
    if manifest is None:
        raise UsageError("dataset statistics need --manifest or stats.mean_tau in the config")
    if mels is None:
        mels = load_mels(manifest, cfg.mel)
    nu = cfg.nu if cfg.nu is not None else cfg.mel.n_mels
    return dataset_stats([m.tau for m in mels.values()], nu)


def cmd_dpd_search(args):
    config_path = args.config
    measurements_in = args.measurements_in
    if args.bundled_fixture:
        config_path = config_path or fixture_path(FIXTURE_CONFIG)
        measurements_in = measurements_in or fixture_path(FIXTURE_MEASUREMENTS)
    cfg = load_config(config_path) if config_path else ToolConfig()
    if args.policy == "all":
        policies = POLICY_ORDER
    elif args.policy in POLICIES:
        policies = (args.policy,)
    else:
        raise UsageError(f"unknown policy {args.policy!r}")
    manifest = read_manifest(args.manifest) if args.manifest else None

    if measurements_in is not None:
        table = MeasurementTable(read_measurements(measurements_in))
        ctx = SearchContext(table, _stats_for(cfg, manifest), cfg.dp_decimals)
        results = run_search(ctx, policies, cfg.schedules)
        write_report(results, args.out_report)
        return 0

    if manifest is None:
        raise UsageError("live search needs --manifest (or --measurements-in)")
    seed = args.seed if args.seed is not None else cfg.seed
    if seed is None:
        raise UsageError("live search needs --seed (or search.seed in the config)")
    if not cfg.transcriber:
        raise UsageError("live search needs transcriber.* settings in the config")
    transcriber = make_transcriber(cfg.transcriber_config())
    workers = args.workers if args.workers is not None else cfg.workers
    mels = load_mels(manifest, cfg.mel)
    evaluator = LiveEvaluator(
        manifest,
        transcriber,
        seed,
        repeats=cfg.repeats,
        gl_iterations=cfg.gl_iterations,
        workers=workers,
        mels=mels,
    )
    ctx = SearchContext(evaluator, _stats_for(cfg, manifest, mels), cfg.dp_decimals)
    try:
        results = run_search(ctx, policies, cfg.schedules)
    finally:
        if args.measurements_out:
            write_measurements(evaluator.trials, args.measurements_out)
        if evaluator.exclusions:
            log = "".join(f"{e.utt_id}\t{e.key}\t{e.reason}\n" for e in evaluator.exclusions)
            atomic_write_bytes(str(args.out_report) + ".exclusions.log", log.encode("utf-8"))
            print(
                f"warning: {len(evaluator.exclusions)} trials excluded; see {args.out_report}.exclusions.log",
                file=sys.stderr,
            )
    write_report(results, args.out_report)
    return 0


def _read_text(arg, literal):
    return arg if literal else Path(arg).read_text(encoding="utf-8")


def cmd_metrics(args):
    if args.metric in ("cer", "wer"):
        hyp = _read_text(args.a, args.text)
        ref = _read_text(args.b, args.text)
        try:
            value = (cer if args.metric == "cer" else wer)(hyp, ref)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    else:
        cfg = _config(args)
        order = args.order if args.order is not None else cfg.mcd_order
        try:
            x = mel_to_mcep(read_mels(args.a), order)
            y = mel_to_mcep(read_mels(args.b), order)
            value = mcd(x, y)
        except (MelAugError, OSError) as exc:
            raise UsageError(str(exc)) from None
    print(f"{value:.3f}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="melaug", description="Mel-spectrogram augmentation and DPD hyperparameter search."
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="WAV -> MELS log-mel file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("augment", help="apply one augmentation policy to a MELS file")
    p.add_argument("--policy", required=True, choices=sorted(POLICIES))
    p.add_argument("--param", required=True, help='e.g. "0.08", "F=3,Nf=2", "Lambda=0.16"')
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--pair-in")
    p.add_argument("--pair-out")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("invert", help="MELS -> WAV via Griffin-Lim")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--iters", type=int)
    p.add_argument("--config")
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("stats", help="utterance count, mean frame count and mel bins")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("dpd-search", help="DPD hyperparameter search (live or from measurements)")
    p.add_argument("--manifest")
    p.add_argument("--config")
    p.add_argument("--policy", default="all")
    p.add_argument("--out-report", required=True)
    p.add_argument("--measurements-in")
    p.add_argument("--measurements-out")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument(
        "--bundled-fixture",
        action="store_true",
        help="use the bundled KSS validation-set measurements and config",
    )
    p.set_defaults(func=cmd_dpd_search)

    p = sub.add_parser("metrics", help="CER / WER between texts, MCD between MELS files")
    p.add_argument("metric", choices=("cer", "wer", "mcd"))
    p.add_argument("a", help="hypothesis text file (cer/wer) or first MELS file (mcd)")
    p.add_argument("b", help="reference text file (cer/wer) or second MELS file (mcd)")
    p.add_argument("--text", action="store_true", help="treat a and b as literal strings")
    p.add_argument("--order", type=int, help="cepstral order for mcd")
    p.add_argument("--config")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        datefmt="%H:%M:%S",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ParseError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (MelAugError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
