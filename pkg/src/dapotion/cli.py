"""Command-line pipeline: synth-gen, encode, train, eval, predict, fuse, render-slices.

Every subcommand writes its artifacts atomically and finishes with one
machine-readable JSON summary line on stdout.  All randomness comes from
--seed, so reruns on identical inputs produce byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import classifier, descriptor_io, encoder, fusion, pose_io, synth

DEFAULT_GRID = 32


def _comma_list(text: str) -> list[str]:
    return [part for part in text.split(",") if part]


def _comma_ints(text: str) -> list[int]:
    return [int(part) for part in _comma_list(text)]


def _comma_floats(text: str) -> list[float]:
    return [float(part) for part in _comma_list(text)]


def _positive_channels(text: str) -> int:
    value = int(text)
    if value < 2:
        raise argparse.ArgumentTypeError("channels must be >= 2")
    return value


def parse_args(argv=None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="dapotion",
        description="Depth-aware pose-motion descriptors and a shallow 3D CNN action classifier.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-gen", help="generate a labeled synthetic pose dataset")
    p.add_argument("--out", required=True, help="output directory for clips and manifests")
    p.add_argument("--classes", type=_comma_list, default=list(synth.CLASS_IDS), metavar="IDS")
    p.add_argument("--n-per-class", type=int, default=10)
    p.add_argument("--split", type=float, default=0.8)
    p.add_argument("--frames", type=int, default=24)
    p.add_argument("--joints", type=int, default=4)
    p.add_argument("--amplitude", type=float, default=60.0)
    p.add_argument("--noise-std", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("encode", help="encode pose clips from a manifest into descriptors")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory for descriptors")
    p.add_argument("--grid", type=int, default=DEFAULT_GRID, help="voxel grid size per axis")
    p.add_argument("--sigma", type=float, default=None, help="gaussian std in voxels (default 4*grid/64)")
    p.add_argument("--channels", type=_positive_channels, default=3)
    p.add_argument("--scheme", choices=encoder.SCHEMES, default="nui")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("train", help="train the shallow CNN on encoded descriptors")
    p.add_argument("--manifest", required=True, help="descriptor manifest")
    p.add_argument("--val-manifest", default=None)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--lr-decay", type=float, default=0.97)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--filters", type=_comma_ints, default=[32, 64, 128])
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("eval", help="score descriptors (or a score file) against labels")
    p.add_argument("--manifest", required=True, help="descriptor manifest with labels")
    p.add_argument("--model", default=None, help="checkpoint to evaluate")
    p.add_argument("--scores", default=None, help="existing score file to evaluate instead")
    p.add_argument("--out", default=None, help="optional score-file output")

    p = sub.add_parser("predict", help="per-class probabilities for descriptor files")
    p.add_argument("--model", required=True)
    p.add_argument("descriptors", nargs="+")
    p.add_argument("--out", default=None, help="optional score-file output")

    p = sub.add_parser("fuse", help="late-fuse score files with optional weights")
    p.add_argument("scores", nargs="+", help="score files to fuse")
    p.add_argument("--weights", type=_comma_floats, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("render-slices", help="render depth slices of a descriptor")
    p.add_argument("descriptor")
    p.add_argument("--depth-indices", type=_comma_ints, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--joint", type=int, default=0)

    return parser.parse_args(argv)


def _summary(command: str, started: float, **extra) -> None:
    doc = {"command": command, "elapsed_s": round(time.perf_counter() - started, 3)}
    doc.update(extra)
    print(json.dumps(doc, sort_keys=True))


def _encoder_config(args) -> encoder.EncoderConfig:
    dims = (args.grid, args.grid, args.grid)
    grid = pose_io.GridSpec.for_image(dims, (pose_io.COORD_RANGE, pose_io.COORD_RANGE))
    return encoder.EncoderConfig(
        grid=grid,
        sigma=args.sigma,
        channels=args.channels,
        scheme=args.scheme,
    )


def _encode_one(job) -> tuple[str, str]:
    src, dst, label, config = job
    seq = pose_io.read_pose_file(src)
    stem = os.path.splitext(os.path.basename(src))[0]
    potion = encoder.encode_pose_sequence(seq, config, clip_id=stem)
    descriptor_io.write_descriptor(dst, potion)
    return os.path.basename(dst), label


def _cmd_synth_gen(args, started) -> int:
    templates = [
        synth.SynthSpec(
            class_id=cid,
            num_frames=args.frames,
            num_joints=args.joints,
            amplitude=args.amplitude,
            noise_std=args.noise_std,
        )
        for cid in args.classes
    ]
    train_path, test_path = synth.generate_dataset(
        templates, args.n_per_class, args.split, args.seed, args.out
    )
    records = len(args.classes) * args.n_per_class
    _summary("synth-gen", started, records=records, train_manifest=train_path, test_manifest=test_path)
    return 0


def _cmd_encode(args, started) -> int:
    config = _encoder_config(args)
    records = pose_io.read_manifest(args.manifest)
    os.makedirs(args.out, exist_ok=True)
    jobs = []
    for src, label in records:
        stem = os.path.splitext(os.path.basename(src))[0]
        jobs.append((src, os.path.join(args.out, stem + ".dapt"), label, config))
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            out_records = list(pool.map(_encode_one, jobs))
    else:
        out_records = [_encode_one(job) for job in jobs]
    manifest_path = os.path.join(args.out, "manifest.tsv")
    pose_io.write_manifest(manifest_path, out_records)
    _summary("encode", started, records=len(out_records), manifest=manifest_path)
    return 0


def _load_descriptor_dataset(manifest_path, class_names=None):
    records = pose_io.read_manifest(manifest_path)
    if not records:
        raise ValueError(f"{manifest_path}: empty manifest")
    if class_names is None:
        class_names = tuple(sorted({label for _, label in records}))
    index = {name: i for i, name in enumerate(class_names)}
    dataset, potions = [], []
    for path, label in records:
        if label not in index:
            raise ValueError(f"{path}: label {label!r} not in class list {class_names}")
        potion = descriptor_io.read_descriptor(path)
        potions.append(potion)
        dataset.append((potion.data, index[label]))
    first = potions[0]
    for p, (path, _) in zip(potions, records):
        if p.data.shape != first.data.shape or p.scheme != first.scheme:
            raise ValueError(f"{path}: descriptor shape/scheme differs from the rest of the manifest")
    return dataset, potions, class_names


def _cmd_train(args, started) -> int:
    dataset, potions, class_names = _load_descriptor_dataset(args.manifest)
    val_set = None
    if args.val_manifest:
        val_set, _, _ = _load_descriptor_dataset(args.val_manifest, class_names)
    first = potions[0]
    config = classifier.ClassifierConfig(
        input_channels=first.channel_count,
        num_classes=len(class_names),
        filters=tuple(args.filters),
        epochs=args.epochs,
        batch_size=args.batch,
        lr_init=args.lr,
        lr_decay=args.lr_decay,
        seed=args.seed,
        class_names=class_names,
    )
    aug = None if args.no_augment else classifier.AugmentConfig.for_grid(first.dims)
    model, history = classifier.train(
        dataset,
        val_set=val_set,
        config=config,
        augment_config=aug,
        channel_upper=classifier.channel_upper_bounds(first.scheme, first.channels, first.num_joints),
    )
    classifier.write_checkpoint(args.out, model)
    pose_io.atomic_write_text(args.out + ".history.csv", classifier.history_csv(history))
    final = history[-1]
    _summary(
        "train",
        started,
        records=len(dataset),
        epochs=len(history),
        train_loss=final.train_loss,
        val_accuracy=final.val_accuracy,
        checkpoint=args.out,
    )
    return 0


def _score_set_from_model(model, manifest_path) -> fusion.ScoreSet:
    class_names = model.config.class_names
    if not class_names:
        raise ValueError("checkpoint carries no class names; cannot build score sets")
    records = pose_io.read_manifest(manifest_path)
    scores = {}
    for path, _ in records:
        potion = descriptor_io.read_descriptor(path)
        stem = os.path.splitext(os.path.basename(path))[0]
        scores[stem] = classifier.predict(model, potion.data)
    return fusion.ScoreSet(name="model", class_names=class_names, scores=scores)


def _cmd_eval(args, started) -> int:
    if (args.model is None) == (args.scores is None):
        raise ValueError("eval needs exactly one of --model or --scores")
    labels = fusion.labels_from_manifest(pose_io.read_manifest(args.manifest))
    if args.model:
        model = classifier.read_checkpoint(args.model)
        score_set = _score_set_from_model(model, args.manifest)
    else:
        score_set = fusion.read_score_file(args.scores)
    accuracy, confusion = fusion.evaluate(score_set, labels)
    if args.out:
        fusion.write_score_file(args.out, score_set)
    _summary(
        "eval",
        started,
        records=len(score_set.scores),
        accuracy=accuracy,
        confusion=[[round(v, 6) for v in row] for row in confusion.tolist()],
    )
    return 0


def _cmd_predict(args, started) -> int:
    model = classifier.read_checkpoint(args.model)
    class_names = model.config.class_names or tuple(
        f"class_{i}" for i in range(model.config.num_classes)
    )
    scores = {}
    for path in args.descriptors:
        potion = descriptor_io.read_descriptor(path)
        stem = os.path.splitext(os.path.basename(path))[0]
        probs = classifier.predict(model, potion.data)
        scores[stem] = probs
        print(json.dumps({"clip": stem, "label": class_names[int(np.argmax(probs))],
                          "probs": [round(float(p), 6) for p in probs]}, sort_keys=True))
    if args.out:
        fusion.write_score_file(args.out, fusion.ScoreSet("model", class_names, scores))
    _summary("predict", started, records=len(scores))
    return 0


def _cmd_fuse(args, started) -> int:
    sets = [fusion.read_score_file(path) for path in args.scores]
    fused = fusion.fuse_scores(sets, weights=args.weights)
    fusion.write_score_file(args.out, fused)
    _summary("fuse", started, records=len(fused.scores), out=args.out)
    return 0


def _cmd_render_slices(args, started) -> int:
    potion = descriptor_io.read_descriptor(args.descriptor)
    stem = os.path.splitext(os.path.basename(args.descriptor))[0]
    paths = descriptor_io.write_slice_files(potion, args.depth_indices, args.out, joint=args.joint, stem=stem)
    _summary("render-slices", started, records=len(paths), files=paths)
    return 0


_COMMANDS = {
    "synth-gen": _cmd_synth_gen,
    "encode": _cmd_encode,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "predict": _cmd_predict,
    "fuse": _cmd_fuse,
    "render-slices": _cmd_render_slices,
}


def run(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    try:
        return _COMMANDS[args.command](args, started)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> int:
    return run(parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
