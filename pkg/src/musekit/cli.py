"""Command-line entry point wiring all modules together.

Every run prints a machine-readable summary JSON to stdout and, when an
output directory is given, writes the same summary to
``<out>/run_summary.json``. Exit codes: 0 success, 1 validation error,
2 I/O error. The seed is always explicit in the summary so runs can be
reproduced.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import augment as aug_mod
from . import pipeline as pipe_mod
from .audio import read_wav, write_wav
from .captions import Caption, RephraseConfig, enrich_caption
from .conditioning import save_weights
from .control_metrics import ControlSample, evaluate_dataset
from .denoiser import ToyDenoiser
from .diffusion import make_schedule, toy_denoise_loop
from .errors import MusekitError
from .extract import FeatureSet, extract_features, features_from_json_obj, features_to_json_obj
from .quality_metrics import frechet_distance, kl_divergence, read_embeddings, read_probabilities
from .verbalize import decode_beat_prediction, parse_chords_verbalization

SUBCOMMANDS = (
    "extract",
    "augment",
    "enrich",
    "build-musicbench",
    "build-fmacaps",
    "eval-control",
    "eval-quality",
    "diffusion-demo",
    "decode-predictions",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 instead of argparse's default 2
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="musekit", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand")

    p = sub.add_parser("extract", help="extract beat/chord/key/tempo features from WAV files")
    p.add_argument("--audio", required=True, help="a WAV file or a directory of WAV files")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("augment", help="apply one augmentation to a WAV file")
    p.add_argument("--audio", required=True)
    p.add_argument("--kind", required=True, choices=["pitch_shift", "time_stretch", "volume_ramp"])
    p.add_argument("--k", type=int, help="semitones for pitch_shift")
    p.add_argument("--factor", type=float, help="speed factor for time_stretch")
    p.add_argument("--direction", choices=["crescendo", "decrescendo"])
    p.add_argument("--g-min", type=float, dest="g_min")
    p.add_argument("--pivot", type=float, help="ramp pivot in seconds")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("enrich", help="append control sentences to manifest captions")
    p.add_argument("--manifest", required=True)
    p.add_argument("--policy", choices=["all_four", "sampled"], default="sampled")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("build-musicbench", help="build the enriched train/test splits")
    p.add_argument("--in", dest="manifest", required=True)
    p.add_argument("--audio-root", default=".", help="base directory for relative audio paths")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--rephrase-url", default=None)

    p = sub.add_parser("build-fmacaps", help="assemble a pseudo-captioned evaluation set")
    p.add_argument("--audio", required=True)
    p.add_argument("--tags", required=True)
    p.add_argument("--expert-captions", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval-control", help="score controllability metrics from feature dumps")
    p.add_argument("--gt", required=True, help="ground-truth features JSONL keyed by id")
    p.add_argument("--pred", required=True, help="predicted features JSONL keyed by id")
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("eval-quality", help="FD/FAD/KL over embedding and probability files")
    p.add_argument("--fd", nargs=2, metavar=("GEN", "REF"))
    p.add_argument("--fad", nargs=2, metavar=("GEN", "REF"))
    p.add_argument("--kl", nargs=2, metavar=("GEN", "REF"))
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("diffusion-demo", help="run the guided reverse process on a toy latent")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--guidance", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--beta-min", type=float, default=1e-4)
    p.add_argument("--beta-max", type=float, default=2e-2)
    p.add_argument("--shape", default="8x16", help="latent shape as TIMExCHANNELS")
    p.add_argument("--out", required=True)

    p = sub.add_parser("decode-predictions", help="decode predictor outputs into feature dumps")
    p.add_argument("--in", dest="predictions", required=True,
                   help='JSONL rows {"id", "meter", "intervals", "chords"}')
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)

    return parser


# ---------------------------------------------------------------------------
# Subcommand handlers; each returns a dict of counts for the run summary.


def _cmd_extract(args) -> dict:
    audio = Path(args.audio)
    paths = sorted(audio.glob("*.wav")) if audio.is_dir() else [audio]
    if not paths:
        raise ValueError(f"no WAV files found under {audio}")

    def one(path: Path) -> dict:
        features = extract_features(read_wav(path))
        return {"id": path.stem, **features_to_json_obj(features)}

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(one, paths))
    else:
        rows = [one(p) for p in paths]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "features.jsonl", "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return {"files": len(rows)}


def _cmd_augment(args) -> dict:
    clip = read_wav(args.audio)
    if args.kind == "pitch_shift":
        if args.k is None:
            raise ValueError("--k is required for pitch_shift")
        augmentation = aug_mod.PitchShift(args.k)
    elif args.kind == "time_stretch":
        if args.factor is None:
            raise ValueError("--factor is required for time_stretch")
        augmentation = aug_mod.TimeStretch(args.factor)
    else:
        if args.direction is None or args.g_min is None:
            raise ValueError("--direction and --g-min are required for volume_ramp")
        pivot = args.pivot if args.pivot is not None else clip.duration
        augmentation = aug_mod.VolumeRamp(args.direction, args.g_min, pivot)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_clip = aug_mod.apply_augmentation(clip, augmentation)
    stem = Path(args.audio).stem
    out_path = out_dir / f"{stem}.{args.kind}.wav"
    write_wav(out_clip, out_path)
    descriptor = aug_mod.augmentation_to_json_obj(augmentation)
    (out_dir / f"{stem}.{args.kind}.json").write_text(json.dumps(descriptor), encoding="utf-8")
    return {"written": 1, "output": str(out_path)}


def _cmd_enrich(args) -> dict:
    records = pipe_mod.load_source_manifest(args.manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    enriched = []
    for record in records:
        if record.features is None:
            raise ValueError(f"record {record.id} has no features to enrich from")
        rng = pipe_mod.record_rng(args.seed, record.id)
        caption = enrich_caption(record.caption, record.features, args.policy, rng)
        enriched.append(pipe_mod.ManifestRecord(
            id=record.id, audio_path=record.audio_path, caption=caption,
            features=record.features, split=record.split, provenance=record.provenance,
        ))
    pipe_mod.write_manifest(out_dir / "enriched.jsonl", enriched)
    return {"records": len(enriched)}


def _cmd_build_musicbench(args) -> dict:
    records = pipe_mod.load_source_manifest(args.manifest)
    root = Path(args.audio_root)
    resolved = []
    for record in records:
        path = Path(record.audio_path)
        if not path.is_absolute():
            path = root / path
        features = record.features
        if features is None:
            try:
                features = extract_features(read_wav(path))
            except Exception:  # noqa: BLE001 - skipped records are logged by pipeline
                features = None
        resolved.append(pipe_mod.ManifestRecord(
            id=record.id, audio_path=str(path), caption=record.caption,
            features=features, split="TrainA", provenance={"source_id": record.id},
        ))
    rephrase = RephraseConfig(args.rephrase_url) if args.rephrase_url else None
    test_a, test_b, pool = pipe_mod.make_test_splits(resolved, args.seed, args.test_fraction)
    splits = pipe_mod.build_musicbench(pool, args.out, args.seed, rephrase=rephrase)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, rows in splits.items():
        pipe_mod.write_manifest(out_dir / f"{name}.jsonl", rows)
    pipe_mod.write_manifest(out_dir / "TestA.jsonl", test_a)
    pipe_mod.write_manifest(out_dir / "TestB.jsonl", test_b)
    pipe_mod.check_no_leakage(splits["train"], test_a)
    return {name: len(rows) for name, rows in splits.items()} | {
        "TestA": len(test_a), "TestB": len(test_b)
    }


def _cmd_build_fmacaps(args) -> dict:
    tags = json.loads(Path(args.tags).read_text(encoding="utf-8"))
    expert = (
        json.loads(Path(args.expert_captions).read_text(encoding="utf-8"))
        if args.expert_captions
        else None
    )
    records = pipe_mod.build_fmacaps(args.audio, tags, args.seed, args.out,
                                     expert_captions=expert)
    out_dir = Path(args.out)
    pipe_mod.write_manifest(out_dir / "FMACaps.jsonl", records)
    return {"records": len(records)}


def _load_feature_rows(path) -> dict[str, dict]:
    rows = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                obj = json.loads(line)
                rows[obj["id"]] = obj
    return rows


def _cmd_eval_control(args) -> dict:
    gt_rows = _load_feature_rows(args.gt)
    pred_rows = _load_feature_rows(args.pred)
    samples = []
    for sid, gt_obj in gt_rows.items():
        if sid not in pred_rows:
            raise ValueError(f"predicted features missing for id {sid!r}")
        samples.append(ControlSample(
            gt=features_from_json_obj(gt_obj), pred=features_from_json_obj(pred_rows[sid])
        ))
    report = evaluate_dataset(samples)
    payload = report.to_json_obj()
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "control_report.json").write_text(json.dumps(payload), encoding="utf-8")
    return {"samples": len(samples), "report": payload}


def _cmd_eval_quality(args) -> dict:
    report = {}
    for name, pair in (("FD", args.fd), ("FAD", args.fad)):
        if pair:
            gen, ref = (read_embeddings(p) for p in pair)
            report[name] = round(frechet_distance(gen, ref), 6)
    if args.kl:
        gen, ref = (read_probabilities(p) for p in args.kl)
        report["KL"] = round(kl_divergence(gen, ref), 6)
    if not report:
        raise ValueError("nothing to evaluate: pass --fd, --fad, and/or --kl")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "quality_report.json").write_text(json.dumps(report), encoding="utf-8")
    return {"report": report}


def _cmd_diffusion_demo(args) -> dict:
    try:
        t, c = (int(v) for v in args.shape.lower().split("x"))
    except ValueError as exc:
        raise ValueError(f"bad --shape {args.shape!r}; expected e.g. 8x16") from exc
    rng = np.random.default_rng(args.seed)
    sched = make_schedule(args.steps, args.beta_min, args.beta_max)
    denoiser = ToyDenoiser((t, c), rng=np.random.default_rng([args.seed, 1]))
    z_start = rng.standard_normal((t, c))
    z0 = toy_denoise_loop(denoiser, z_start, None, sched, w=args.guidance,
                          rng=np.random.default_rng([args.seed, 2]))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    latent_path = out_dir / "latent.f32"
    save_weights(latent_path, {"latent": z0})
    checksum = hashlib.sha256(latent_path.read_bytes()).hexdigest()
    return {
        "shape": [t, c],
        "steps": args.steps,
        "guidance": args.guidance,
        "latent": str(latent_path),
        "checksum": checksum,
    }


def _cmd_decode_predictions(args) -> dict:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    with open(args.predictions, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            decoded: dict = {"id": obj["id"]}
            if "meter" in obj and "intervals" in obj:
                grid = decode_beat_prediction(int(obj["meter"]), list(obj["intervals"]))
                decoded["beats"] = [[e.beat_type, round(e.time_seconds, 3)] for e in grid.entries]
            if "chords" in obj:
                seq = parse_chords_verbalization(obj["chords"])
                decoded["chords"] = features_to_json_obj(FeatureSet(chords=seq)).get("chords", [])
            rows.append(decoded)
    with open(out_dir / "decoded.jsonl", "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return {"records": len(rows)}


_HANDLERS = {
    "extract": _cmd_extract,
    "augment": _cmd_augment,
    "enrich": _cmd_enrich,
    "build-musicbench": _cmd_build_musicbench,
    "build-fmacaps": _cmd_build_fmacaps,
    "eval-control": _cmd_eval_control,
    "eval-quality": _cmd_eval_quality,
    "diffusion-demo": _cmd_diffusion_demo,
    "decode-predictions": _cmd_decode_predictions,
}


def dispatch(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(parser.format_usage(), file=sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.subcommand is None:
        print(parser.format_usage(), file=sys.stderr)
        return 1
    start = time.monotonic()
    try:
        counts = _HANDLERS[args.subcommand](args)
    except (ValueError, MusekitError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    summary = {
        "subcommand": args.subcommand,
        "config": {k: v for k, v in vars(args).items() if k != "subcommand"},
        "wall_time_s": round(time.monotonic() - start, 3),
        "counts": counts,
        "warnings": [],
    }
    print(json.dumps(summary))
    out = getattr(args, "out", None)
    if out:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "run_summary.json").write_text(json.dumps(summary), encoding="utf-8")
    return 0


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))
