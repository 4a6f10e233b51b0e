"""Command-line surface: gen-fixture, extract, train, eval, detect, paths.

Every command echoes its run configuration and the SHA-256 digests of its
inputs into the files it writes, so any output can be traced back to exact
inputs; rerunning a command with identical inputs reproduces identical
bytes. Errors are reported on stderr as one line starting with
``error_kind: <Name>`` and a nonzero exit code.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, dataio, metrics, pipeline
from .classifier import DEFAULT_DELTA, KernelSpec
from .errors import ConfigMismatch, IoError, MorphscatError
from .imgproc import crop_resize_face, load_image
from .scattering import (
    ScatteringConfig,
    build_filter_bank,
    count_paths,
    enumerate_paths,
)


def _provenance(command: str, run_config: dict, inputs: dict) -> dict:
    return {
        "tool": {"name": "morphscat", "version": __version__},
        "command": command,
        "run_config": run_config,
        "input_digests": inputs,
    }


def _write_json(path, payload: dict):
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _config_from_args(args) -> ScatteringConfig:
    base = ScatteringConfig().to_dict()
    if getattr(args, "config", None):
        base = dataio.scattering_config_from_file(args.config).to_dict()
    if getattr(args, "octaves", None) is not None:
        base["num_octaves"] = args.octaves
    if getattr(args, "quality", None) is not None:
        base["quality_factors"] = args.quality
    if getattr(args, "rotations", None) is not None:
        base["num_rotations"] = args.rotations
    if getattr(args, "slant", None) is not None:
        base["morlet_slant"] = args.slant
    if getattr(args, "oversampling", None) is not None:
        base["oversampling"] = args.oversampling
    return ScatteringConfig.from_dict(base)


def _int_pair(text: str):
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected two comma-separated integers")
    return (int(parts[0]), int(parts[1]))


def _add_scattering_flags(sub):
    sub.add_argument("--config", help="scattering config file (JSON or key=value)")
    sub.add_argument("-J", "--octaves", type=int, help="number of octaves")
    sub.add_argument("--quality", type=_int_pair, metavar="Q1,Q2",
                     help="wavelets per octave per layer")
    sub.add_argument("--rotations", type=_int_pair, metavar="L1,L2",
                     help="rotations per layer")
    sub.add_argument("--slant", type=float, help="morlet envelope eccentricity")
    sub.add_argument("--oversampling", type=int, help="stride relaxation exponent")


# ---------------------------------------------------------------------------
# gen-fixture


def cmd_gen_fixture(args) -> int:
    manifest = dataio.generate_fixture(args.seed, args.subjects, args.out)
    run_config = {"seed": args.seed, "subjects": args.subjects, "out": str(args.out)}
    _write_json(
        Path(args.out) / "provenance.json",
        _provenance("gen-fixture", run_config,
                    {"manifest": dataio.file_digest(manifest)}),
    )
    print(manifest)
    return 0


# ---------------------------------------------------------------------------
# extract

_WORKER_BANK = None


def _worker_init(config_dict):
    global _WORKER_BANK
    _WORKER_BANK = build_filter_bank(ScatteringConfig.from_dict(config_dict))


def _extract_one(task):
    pair_id, susp, trusted = task
    try:
        crops = [crop_resize_face(load_image(p)) for p in (susp, trusted)]
        return pipeline.extract_pair_features(
            crops[0], crops[1], _WORKER_BANK, pair_id=pair_id
        )
    except MorphscatError as exc:
        raise type(exc)(f"pair {pair_id!r}: {exc}") from exc


def cmd_extract(args) -> int:
    config = _config_from_args(args)
    records = sorted(dataio.load_manifest(args.manifest), key=lambda r: r.pair_id)
    tasks = [(r.pair_id, r.suspicious_path, r.trusted_path) for r in records]

    if args.workers <= 1:
        _worker_init(config.to_dict())
        features = [_extract_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(
            max_workers=args.workers,
            initializer=_worker_init,
            initargs=(config.to_dict(),),
        ) as pool:
            features = list(pool.map(_extract_one, tasks))

    dataio.write_features(args.out, features)
    run_config = {
        "manifest": str(args.manifest),
        "out": str(args.out),
        "workers": args.workers,
        "scattering": config.to_dict(),
    }
    _write_json(
        str(args.out) + ".provenance.json",
        _provenance("extract", run_config, {
            "manifest": dataio.file_digest(args.manifest),
            "cache": dataio.file_digest(args.out),
        }),
    )
    print(f"extracted {len(features)} pairs -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# train


def _kernel_from_args(args) -> KernelSpec:
    return KernelSpec(kind=args.kernel, bandwidth=args.bandwidth)


def _load_matching_features(cache_path, records):
    features = {pf.pair_id: pf for pf in dataio.read_features(cache_path)}
    missing = [r.pair_id for r in records if r.pair_id not in features]
    if missing:
        raise IoError(
            f"feature cache {cache_path} lacks pairs: {', '.join(sorted(missing))}"
        )
    return features


def cmd_train(args) -> int:
    records = dataio.load_manifest(args.manifest)
    split = dataio.SplitSpec.from_json_file(args.split)
    report = dataio.check_split(records, split)
    sides = dataio.split_sides(records, split)
    train_records = sorted(
        (r for r in records if sides[r.pair_id] == "train"), key=lambda r: r.pair_id
    )
    features = _load_matching_features(args.cache, train_records)

    labeled = [(features[r.pair_id], r.label) for r in train_records]
    config = _config_from_args(args)
    if labeled and labeled[0][0].config_hash != config.config_hash():
        raise ConfigMismatch(
            "feature cache was extracted under a different scattering config; "
            "pass the same config flags used for extract"
        )

    metadata = {
        "manifest_digest": dataio.file_digest(args.manifest),
        "cache_digest": dataio.file_digest(args.cache),
        "seed": args.seed,
        "kernel": args.kernel,
        "delta": args.delta,
        "threshold_policy": args.threshold_policy,
        "scattering_config": config.to_dict(),
    }

    model = pipeline.train_dmad(
        labeled,
        kernel=_kernel_from_args(args),
        delta=args.delta,
        threshold_policy=(
            "train-eer" if args.threshold_policy == "train-eer"
            else float(args.threshold_policy)
        ),
        normalize_scores=args.normalize_scores,
        metadata=metadata,
    )
    dataio.save_model(args.out, model)

    fused = {
        "morph": [], "bonafide": [],
    }
    for pf, label in labeled:
        fused[label].append(pipeline.score_pair(model, pf).fused)
    train_scores = metrics.ScoreSet(
        attack_scores=np.array(fused["morph"]),
        bonafide_scores=np.array(fused["bonafide"]),
    )
    train_report = metrics.report_to_dict(metrics.metrics_report(train_scores))

    run_config = {
        "manifest": str(args.manifest),
        "cache": str(args.cache),
        "split": str(args.split),
        "out": str(args.out),
        "kernel": args.kernel,
        "bandwidth": args.bandwidth,
        "delta": args.delta,
        "threshold_policy": args.threshold_policy,
        "normalize_scores": args.normalize_scores,
        "seed": args.seed,
    }
    payload = {
        "provenance": _provenance("train", run_config, {
            "manifest": metadata["manifest_digest"],
            "cache": metadata["cache_digest"],
            "split": dataio.file_digest(args.split),
            "model": dataio.file_digest(args.out),
        }),
        "split_report": {
            "train_bonafide": report.train_bonafide,
            "train_morph_by_factor": {f"{k:g}": v for k, v in sorted(report.train_morph_by_factor.items())},
            "test_bonafide": report.test_bonafide,
            "test_morph_by_factor": {f"{k:g}": v for k, v in sorted(report.test_morph_by_factor.items())},
            "warnings": list(report.warnings),
        },
        "decision_threshold": model.tau,
        "training_metrics": train_report,
    }
    _write_json(str(args.out) + ".train_report.json", payload)
    print(f"trained model -> {args.out} (tau={model.tau!r})")
    return 0


# ---------------------------------------------------------------------------
# eval


def _det_csv(path, curve: metrics.DetCurve):
    lines = ["threshold,apcer,bpcer"]
    lines += [f"{t!r},{a!r},{b!r}" for t, a, b in curve.points]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_eval(args) -> int:
    records = dataio.load_manifest(args.manifest)
    split = dataio.SplitSpec.from_json_file(args.split)
    sides = dataio.split_sides(records, split)
    test_records = sorted(
        (r for r in records if sides[r.pair_id] == "test"), key=lambda r: r.pair_id
    )
    model = dataio.load_model(args.model)
    features = _load_matching_features(args.cache, test_records)

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    scored = []
    for r in test_records:
        fs = pipeline.score_pair(model, features[r.pair_id])
        scored.append((r, fs.fused))

    def score_set(selector):
        attack = [s for r, s in scored if r.label == "morph" and selector(r)]
        bona = [s for r, s in scored if r.label == "bonafide"]
        return metrics.ScoreSet(
            attack_scores=np.array(attack), bonafide_scores=np.array(bona)
        )

    overall = metrics.metrics_report(score_set(lambda r: True))
    _det_csv(outdir / "det_overall.csv", overall.curve)
    factors = sorted({r.morph_factor for r, _ in scored if r.morph_factor is not None})
    per_factor = {}
    for f in factors:
        rep = metrics.metrics_report(score_set(lambda r, f=f: r.morph_factor == f))
        per_factor[f"{f:g}"] = metrics.report_to_dict(rep)
        _det_csv(outdir / f"det_factor_{f:g}.csv", rep.curve)

    run_config = {
        "manifest": str(args.manifest),
        "cache": str(args.cache),
        "split": str(args.split),
        "model": str(args.model),
        "outdir": str(outdir),
    }
    payload = {
        "provenance": _provenance("eval", run_config, {
            "manifest": dataio.file_digest(args.manifest),
            "cache": dataio.file_digest(args.cache),
            "split": dataio.file_digest(args.split),
            "model": dataio.file_digest(args.model),
        }),
        "decision_threshold": model.tau,
        "overall": metrics.report_to_dict(overall),
        "per_factor": per_factor,
        "scores": {r.pair_id: s for r, s in scored},
    }
    _write_json(outdir / "metrics.json", payload)
    print(f"evaluated {len(scored)} pairs -> {outdir / 'metrics.json'} "
          f"(overall D-EER {overall.d_eer:.4f})")
    return 0


# ---------------------------------------------------------------------------
# detect


def _parse_crop(text):
    if text is None:
        return None
    parts = [int(v) for v in text.split(",")]
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("crop must be left,top,width,height")
    return tuple(parts)


def cmd_detect(args) -> int:
    model = dataio.load_model(args.model)
    config_dict = model.metadata.get("scattering_config")
    if config_dict is None:
        raise ConfigMismatch("model carries no scattering config; cannot rebuild bank")
    config = ScatteringConfig.from_dict(config_dict)
    if config.config_hash() != model.config_hash:
        raise ConfigMismatch("model scattering config does not match its hash")
    bank = build_filter_bank(config)

    crops = [
        crop_resize_face(load_image(p), c)
        for p, c in (
            (args.suspicious, args.crop_suspicious),
            (args.trusted, args.crop_trusted),
        )
    ]
    pf = pipeline.extract_pair_features(crops[0], crops[1], bank, pair_id="cli-detect")
    fs = pipeline.score_pair(model, pf)
    decision = pipeline.decide(model, fs)

    payload = {
        "provenance": _provenance("detect", {
            "model": str(args.model),
            "suspicious": str(args.suspicious),
            "trusted": str(args.trusted),
        }, {
            "model": dataio.file_digest(args.model),
            "suspicious": dataio.file_digest(args.suspicious),
            "trusted": dataio.file_digest(args.trusted),
        }),
        "s1": fs.s1,
        "s2": fs.s2,
        "s3": fs.s3,
        "fused": fs.fused,
        "threshold": model.tau,
        "decision": decision,
    }
    text = json.dumps(payload, sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


# ---------------------------------------------------------------------------
# paths


def cmd_paths(args) -> int:
    config = _config_from_args(args)
    n = count_paths(config)
    print(f"# path_count: {n}")
    print("order,j1,t1,j2,t2")
    for p in enumerate_paths(config):
        fields = [
            p.order,
            "" if p.j1 is None else f"{p.j1:g}",
            "" if p.t1 is None else p.t1,
            "" if p.j2 is None else f"{p.j2:g}",
            "" if p.t2 is None else p.t2,
        ]
        print(",".join(str(v) for v in fields))
    return 0


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="morphscat",
        description="Differential morph detection with scattering features.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("gen-fixture", help="write a synthetic image-pair dataset")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--subjects", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_fixture)

    p = subs.add_parser("extract", help="manifest -> feature cache")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    _add_scattering_flags(p)
    p.set_defaults(func=cmd_extract)

    p = subs.add_parser("train", help="feature cache + split -> model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--split", required=True, help="JSON with train/test subject lists")
    p.add_argument("--out", required=True)
    _add_scattering_flags(p)
    p.add_argument("--kernel", choices=("gaussian", "linear"), default="gaussian")
    p.add_argument("--bandwidth", type=float, default=None,
                   help="gaussian bandwidth (default: median heuristic)")
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    p.add_argument("--threshold-policy", default="train-eer",
                   help='"train-eer" or an explicit numeric threshold')
    p.add_argument("--normalize-scores", action="store_true",
                   help="min-max normalize channel scores before fusion")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("eval", help="model + test cache -> metrics + DET curves")
    p.add_argument("--manifest", required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("detect", help="score one image pair against a model")
    p.add_argument("--model", required=True)
    p.add_argument("--suspicious", required=True)
    p.add_argument("--trusted", required=True)
    p.add_argument("--crop-suspicious", type=_parse_crop, default=None,
                   metavar="L,T,W,H")
    p.add_argument("--crop-trusted", type=_parse_crop, default=None, metavar="L,T,W,H")
    p.add_argument("--out", default=None, help="also write the JSON report here")
    p.set_defaults(func=cmd_detect)

    p = subs.add_parser("paths", help="print the scattering path table")
    _add_scattering_flags(p)
    p.set_defaults(func=cmd_paths)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "gen-fixture" and args.subjects < 4:
        parser.error("error_kind: UsageError: --subjects must be at least 4")
    try:
        return args.func(args)
    except MorphscatError as exc:
        print(f"error_kind: {exc.kind}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error_kind: IoError: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
