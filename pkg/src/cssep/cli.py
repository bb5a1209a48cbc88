"""Command-line surface: generate, separate, evaluate, sweep.

All commands are deterministic given their flags and seed. A JSON
config file may supply any flag (keys are the long flag names with
underscores); explicit flags override the file. Exit codes: 0 success,
2 usage or configuration, 3 file I/O, 4 separator failure, 5 bad or
missing data. The CSSEP_WORKERS environment variable bounds the worker
pool used for per-conversation work (default 1).
"""

import argparse
import concurrent.futures
import contextlib
import functools
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import mixgen
from .audio import AudioBuffer, WavError, read_wav, write_wav
from .framing import FramingConfig, frames_iter
from .metrics import aggregate, si_sdr_improvement, write_report_csv, write_report_json
from .pipeline import run_pipeline
from .scheduling import CostModel, SegmentEmitter, predict_cost
from .separators import IdealRatioMaskSeparator, IdentitySeparator, OracleSourceSeparator, ShuffleSeparator
from .stitching import PermutationTracker, StitchConfig
from .wire import ExternalSeparator, SeparatorError

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_SEPARATOR = 4
EXIT_DATA = 5

_ALIGN_MODES = {"cc": "cross_correlation", "oracle": "oracle"}
_SEPARATORS = ("identity", "oracle", "shuffled-oracle", "irm", "external")

# Required per command, enforced after the config file is merged so a
# config may supply any of them.
_REQUIRED = {
    "generate": ("out",),
    "separate": ("dataset", "out", "window", "hop"),
    "evaluate": ("dataset", "estimates", "out"),
    "sweep": ("dataset", "out"),
}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _seconds_to_samples(seconds: float, sample_rate: int, what: str) -> int:
    exact = seconds * sample_rate
    rounded = int(round(exact))
    if abs(exact - rounded) > 1e-9:
        raise UsageError(f"{what} of {seconds} s is not a whole number of samples at {sample_rate} Hz")
    return rounded


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("CSSEP_WORKERS", "1")))
    except ValueError:
        raise UsageError("CSSEP_WORKERS must be an integer")


def _pmap(fn, items):
    items = list(items)
    workers = _workers()
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _conv_seed(base: int, overlap: float, index: int) -> int:
    entropy = [int(base), int(round(overlap * 1000)), int(index)]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------- generate

def _pool_count(min_length_seconds: float) -> int:
    # Worst case is back-to-back 2 s utterances plus catch-up draws.
    return 64 + int(min_length_seconds)


def _generate_one(out_dir: str, args_dict: dict, job) -> dict:
    overlap, index = job
    seed = _conv_seed(args_dict["seed"], overlap, index)
    sr = args_dict["sr"]
    spec = mixgen.MixtureSpec(
        target_overlap=overlap, seed=seed, sample_rate=sr,
        min_length_seconds=args_dict["min_length"])
    pool_rng = np.random.default_rng([seed, 1])
    style = args_dict["style"]
    duration_range = (3.0, 6.0) if style == "pairs" else (2.0, 5.0)
    count = _pool_count(args_dict["min_length"])
    pools = (mixgen.UtterancePool.draw(0, pool_rng, count, sr, duration_range),
             mixgen.UtterancePool.draw(1, pool_rng, count, sr, duration_range))
    conv_id = f"ov{overlap * 100:g}-{index:04d}"
    if style == "pairs":
        conv = mixgen.build_overlapped_pair(pools, spec, args_dict["min_overlap"], conv_id)
    else:
        conv = mixgen.build_conversation(pools, spec, conv_id)
    out = Path(out_dir)
    write_wav(conv.mixture, out / f"{conv_id}.mix.wav")
    write_wav(AudioBuffer(conv.sources[0], sr), out / f"{conv_id}.src0.wav")
    write_wav(AudioBuffer(conv.sources[1], sr), out / f"{conv_id}.src1.wav")
    manifest_path = out / f"{conv_id}.json"
    with open(manifest_path, "w") as fh:
        json.dump(conv.manifest.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {
        "manifest": manifest_path.name,
        "id": conv_id,
        "sr": sr,
        "duration_samples": conv.manifest.duration_samples,
        "target_overlap": conv.manifest.target_overlap,
        "realized_overlap": conv.manifest.realized_overlap,
    }


def cmd_generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    overlaps = [p / 100.0 for p in args.overlaps]
    for p in overlaps:
        if not 0.0 <= p <= 1.0:
            raise UsageError(f"overlap {p * 100:g}% outside [0, 100]")
    base = {"seed": args.seed, "sr": args.sr, "min_length": args.min_length,
            "style": args.style, "min_overlap": args.min_overlap}
    jobs = [(overlap, index) for overlap in overlaps for index in range(args.per_overlap)]
    entries = _pmap(functools.partial(_generate_one, str(out), base), jobs)
    with open(out / "index.jsonl", "w") as fh:
        for entry in entries:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    total_s = sum(e["duration_samples"] for e in entries) / args.sr
    print(f"wrote {len(entries)} conversations, {total_s / 3600.0:.2f} h, to {out}")
    for overlap in overlaps:
        realized = [e["realized_overlap"] for e in entries if e["target_overlap"] == overlap]
        print(f"  target {overlap * 100:5.1f}%: realized "
              f"{100 * float(np.mean(realized)):.2f}% +/- {100 * float(np.std(realized)):.2f}%")
    return 0


# ---------------------------------------------------------------- datasets

def _load_index(dataset: Path) -> list:
    path = dataset / "index.jsonl"
    if not path.exists():
        raise FileNotFoundError(f"no dataset index at {path}")
    entries = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                entries.append(json.loads(line))
    if not entries:
        raise DataError(f"dataset index {path} is empty")
    return entries


def _load_conversation(dataset: Path, entry: dict):
    mixture = read_wav(dataset / f"{entry['id']}.mix.wav")
    sources = np.stack([read_wav(dataset / f"{entry['id']}.src{c}.wav").mono for c in (0, 1)])
    return mixture, sources


def _build_separator(name: str, sources, seed: int, external_cmd, sample_rate, window):
    if name == "identity":
        return IdentitySeparator(channels=2)
    if name == "oracle":
        return OracleSourceSeparator(sources)
    if name == "shuffled-oracle":
        return ShuffleSeparator(OracleSourceSeparator(sources), seed=seed)
    if name == "irm":
        return IdealRatioMaskSeparator(sources)
    if name == "external":
        if not external_cmd:
            raise UsageError("--separator external requires --external-cmd")
        return ExternalSeparator(external_cmd.split(), sample_rate, window, channels=2)
    raise UsageError(f"unknown separator {name!r}")


# ---------------------------------------------------------------- separate

def _separate_one(dataset: str, out_dir: str, params: dict, entry: dict) -> dict:
    dataset = Path(dataset)
    sr = entry["sr"]
    framing = FramingConfig(_seconds_to_samples(params["window"], sr, "window"),
                            _seconds_to_samples(params["hop"], sr, "hop"))
    mixture, sources = _load_conversation(dataset, entry)
    n_seg = params["n_seg"] if params["n_seg"] else framing.frames_per_segment
    separator = _build_separator(params["separator"], sources, params["seed"],
                                 params.get("external_cmd"), sr, framing.window)
    stitch_sources = sources if params["mode"] == "oracle" else None
    try:
        with contextlib.ExitStack() as stack:
            if isinstance(separator, ExternalSeparator):
                stack.enter_context(separator)
            result = run_pipeline(mixture, framing, separator, stitch_mode=params["mode"],
                                  sources=stitch_sources, n_seg=n_seg)
    except ValueError as exc:
        raise DataError(f"{entry['id']}: {exc}") from exc
    out = Path(out_dir)
    write_wav(AudioBuffer(result.estimates, sr), out / f"{entry['id']}.est.wav")
    segments = []
    for emission in result.emissions:
        trigger = min(emission.segment_index + n_seg, len(result.frame_seconds)) - 1
        algorithmic = (emission.available_samples - emission.start_sample) / sr
        segments.append({
            "segment": emission.segment_index,
            "available_samples": emission.available_samples,
            "algorithmic_latency_s": algorithmic,
            "total_latency_s": algorithmic + result.frame_seconds[trigger],
        })
    with open(out / f"{entry['id']}.timing.json", "w") as fh:
        json.dump({"frames_proc_s": list(result.frame_seconds), "segments": segments},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"id": entry["id"], "frames": len(result.frame_seconds)}


def cmd_separate(args) -> int:
    dataset = Path(args.dataset)
    entries = _load_index(dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.mode not in _ALIGN_MODES:
        raise UsageError(f"--align must be one of {sorted(_ALIGN_MODES)}")
    params = {
        "window": args.window, "hop": args.hop, "n_seg": args.nseg,
        "mode": _ALIGN_MODES[args.mode], "separator": args.separator,
        "seed": args.seed, "external_cmd": args.external_cmd,
    }
    stats = _pmap(functools.partial(_separate_one, str(dataset), str(out), params), entries)
    sr = entries[0]["sr"]
    framing = FramingConfig(_seconds_to_samples(args.window, sr, "window"),
                            _seconds_to_samples(args.hop, sr, "hop"))
    run_doc = {
        "window_s": args.window, "hop_s": args.hop,
        "n_seg": args.nseg if args.nseg else framing.frames_per_segment,
        "online": bool(args.nseg),
        "mode": _ALIGN_MODES[args.mode], "separator": args.separator,
        "seed": args.seed, "dataset": str(dataset),
    }
    with open(out / "run.json", "w") as fh:
        json.dump(run_doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"separated {len(stats)} conversations into {out}")
    return 0


# ---------------------------------------------------------------- evaluate

def _score_one(dataset: str, estimates: str, entry: dict) -> float:
    dataset, estimates = Path(dataset), Path(estimates)
    est_path = estimates / f"{entry['id']}.est.wav"
    if not est_path.exists():
        raise FileNotFoundError(f"no estimate for {entry['id']} at {est_path}")
    mixture, sources = _load_conversation(dataset, entry)
    estimate = read_wav(est_path)
    if estimate.num_samples != mixture.num_samples:
        raise DataError(f"{entry['id']}: estimate length {estimate.num_samples} "
                        f"!= mixture length {mixture.num_samples}")
    try:
        return si_sdr_improvement(sources, estimate.samples, mixture.mono)
    except ValueError as exc:
        raise DataError(f"{entry['id']}: {exc}") from exc


def cmd_evaluate(args) -> int:
    dataset, estimates = Path(args.dataset), Path(args.estimates)
    entries = _load_index(dataset)
    run_path = estimates / "run.json"
    if not run_path.exists():
        raise DataError(f"no run.json in {estimates}; separate must run first")
    with open(run_path) as fh:
        run_doc = json.load(fh)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    values = _pmap(functools.partial(_score_one, str(dataset), str(estimates)), entries)
    examples = []
    for entry, value in zip(entries, values):
        key = {"overlap": entry["target_overlap"], "window_s": run_doc["window_s"],
               "hop_s": run_doc["hop_s"], "n_seg": run_doc["n_seg"],
               "mode": run_doc["mode"], "separator": run_doc["separator"]}
        examples.append((key, value))
    report = aggregate(examples, seed=run_doc.get("seed"))
    write_report_csv(report, out / "report.csv")
    write_report_json(report, out / "report.json")
    for row in report.rows:
        print(f"overlap {row.overlap * 100:5.1f}%  W={row.window_s:g}s  n_seg={row.n_seg}  "
              f"SI-SDRi {row.mean_sisdri_db:+.2f} dB (std {row.std_sisdri_db:.2f}, n={row.count})")
    return 0


# ---------------------------------------------------------------- sweep

def _sweep_conversation(dataset: str, params: dict, entry: dict) -> list:
    """All (n_seg, SI-SDRi) cells for one conversation at one window.

    Frames are separated and aligned once; n_seg only changes emission.
    """
    dataset = Path(dataset)
    sr = entry["sr"]
    framing = FramingConfig(_seconds_to_samples(params["window"], sr, "window"),
                            _seconds_to_samples(params["hop"], sr, "hop"))
    mixture, sources = _load_conversation(dataset, entry)
    separator = _build_separator(params["separator"], sources, params["seed"], None,
                                 sr, framing.window)
    stitch_sources = sources if params["mode"] == "oracle" else None
    tracker = PermutationTracker(StitchConfig(framing, params["mode"], stitch_sources))
    aligned = [tracker.align(separator.separate(frame))
               for frame in frames_iter(mixture, framing)]
    out = []
    for n_seg in range(1, framing.frames_per_segment + 1):
        emitter = SegmentEmitter(framing, n_seg, mixture.num_samples, channels=2)
        emissions = []
        for frame in aligned:
            emissions.extend(emitter.feed(frame))
        emissions.extend(emitter.finish())
        estimates = np.concatenate([e.samples for e in emissions], axis=1)
        value = si_sdr_improvement(sources, estimates, mixture.mono)
        out.append((entry["target_overlap"], n_seg, value))
    return out


def cmd_sweep(args) -> int:
    dataset = Path(args.dataset)
    entries = _load_index(dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.mode not in _ALIGN_MODES:
        raise UsageError(f"--align must be one of {sorted(_ALIGN_MODES)}")
    examples = []
    for window in args.windows:
        params = {"window": window, "hop": args.hop, "mode": _ALIGN_MODES[args.mode],
                  "separator": args.separator, "seed": args.seed}
        per_conv = _pmap(functools.partial(_sweep_conversation, str(dataset), params), entries)
        for cells in per_conv:
            for overlap, n_seg, value in cells:
                key = {"overlap": overlap, "window_s": window, "hop_s": args.hop,
                       "n_seg": n_seg, "mode": _ALIGN_MODES[args.mode],
                       "separator": args.separator}
                examples.append((key, value))
    report = aggregate(examples, seed=args.seed)
    model = CostModel()
    extras = []
    for row in report.rows:
        flops, memory = predict_cost(row.window_s, model)
        extras.append({"latency_s": row.n_seg * row.hop_s,
                       "flops_per_hop": flops, "memory_bytes": memory})
    write_report_csv(report, out / "sweep.csv", extras)
    write_report_json(report, out / "sweep.json", extras)
    _plot_sweep(report, extras, out / "sweep.svg")
    print(f"swept {len(args.windows)} windows x {len(entries)} conversations; "
          f"{len(report.rows)} cells -> {out}")
    return 0


def _plot_sweep(report, extras, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "cssep"
    import matplotlib.pyplot as plt

    overlaps = sorted({row.overlap for row in report.rows})
    windows = sorted({row.window_s for row in report.rows})
    fig, axes = plt.subplots(1, len(overlaps), figsize=(5.0 * len(overlaps), 4.0),
                             squeeze=False, sharey=True)
    for ax, overlap in zip(axes[0], overlaps):
        for window in windows:
            points = sorted(
                (extras[i]["latency_s"], row.mean_sisdri_db)
                for i, row in enumerate(report.rows)
                if row.overlap == overlap and row.window_s == window)
            ax.plot([p[0] for p in points], [p[1] for p in points],
                    marker="o", label=f"W = {window:g} s")
        ax.set_title(f"overlap {overlap * 100:g}%")
        ax.set_xlabel("latency (s)")
        ax.grid(True, alpha=0.3)
    axes[0][0].set_ylabel("mean SI-SDRi (dB)")
    axes[0][-1].legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)


# ---------------------------------------------------------------- plumbing

def _add_common(parser):
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--config", type=str, default=None,
                        help="JSON file supplying any flag; explicit flags win")


def _float_list(text: str) -> list:
    try:
        return [float(part) for part in text.split(",") if part != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cssep",
                                     description="streaming speech separation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize a conversation dataset")
    p.add_argument("--out")
    p.add_argument("--overlaps", type=_float_list, default=[0.0],
                   help="comma-separated overlap targets in percent")
    p.add_argument("--per-overlap", type=int, default=1)
    p.add_argument("--sr", type=int, default=8000)
    p.add_argument("--min-length", type=float, default=15.0)
    p.add_argument("--style", choices=("sparse", "pairs"), default="sparse")
    p.add_argument("--min-overlap", type=float, default=0.8,
                   help="overlap-ratio floor for --style pairs")
    _add_common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("separate", help="run the separation pipeline over a dataset")
    p.add_argument("--dataset")
    p.add_argument("--out")
    p.add_argument("--window", type=float, help="window length in seconds")
    p.add_argument("--hop", type=float, help="hop length in seconds")
    p.add_argument("--nseg", type=int, default=None,
                   help="segments of latency before emission; omit for offline")
    p.add_argument("--align", dest="mode", choices=sorted(_ALIGN_MODES), default="cc")
    p.add_argument("--separator", choices=_SEPARATORS, default="identity")
    p.add_argument("--external-cmd", type=str, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_separate)

    p = sub.add_parser("evaluate", help="score estimates against a dataset")
    p.add_argument("--dataset")
    p.add_argument("--estimates")
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="grid of windows and emission latencies")
    p.add_argument("--dataset")
    p.add_argument("--out")
    p.add_argument("--windows", type=_float_list, default=[3.0, 5.0, 10.0],
                   help="comma-separated window lengths in seconds")
    p.add_argument("--hop", type=float, default=0.5)
    p.add_argument("--align", dest="mode", choices=sorted(_ALIGN_MODES), default="cc")
    p.add_argument("--separator", choices=_SEPARATORS[:4], default="irm")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def _apply_config(parser, argv):
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config", type=str, default=None)
    known, _ = probe.parse_known_args(argv)
    args = parser.parse_args(argv)
    if known.config:
        try:
            with open(known.config) as fh:
                overrides = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot load config {known.config}: {exc}")
        if not isinstance(overrides, dict):
            raise UsageError(f"config {known.config} must be a JSON object")
        # Flags given explicitly on the command line win over the file.
        aliases = {"align": "mode"}
        given = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
        given = {aliases.get(name, name) for name in given}
        for key, value in overrides.items():
            dest = key.replace("-", "_")
            dest = aliases.get(dest, dest)
            if not hasattr(args, dest):
                raise UsageError(f"config key {key!r} is not a flag of this command")
            if dest not in given:
                setattr(args, dest, value)
    for dest in _REQUIRED[args.command]:
        if getattr(args, dest) is None:
            raise UsageError(f"--{dest.replace('_', '-')} is required (flag or config)")
    return args


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, sys.argv[1:] if argv is None else list(argv))
        return args.func(args)
    except (UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, PermissionError, IsADirectoryError, WavError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SeparatorError as exc:
        print(f"separator error: {exc}", file=sys.stderr)
        return EXIT_SEPARATOR
    except (mixgen.InfeasibleTargetError, DataError, KeyError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
