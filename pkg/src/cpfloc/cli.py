"""Command-line entry point: ``cpfloc <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import container
from .embedding import Vocabulary, compress_model, train_embedding, train_vocabulary
from .evaluation import evaluate
from .io import (
    load_params,
    read_ground_truth,
    read_queries,
    read_results,
    write_ground_truth,
    write_queries,
    write_results,
)
from .params import ABLATIONS
from .pipeline import CascadedLocalizer
from .scene_model import VisibilityGraph
from .synthetic import SyntheticSceneConfig, generate_scene

log = logging.getLogger("cpfloc")

RAW_KEYS = ("positions", "descriptors", "descriptor_point", "edge_point", "edge_image")


def _load_descriptors(path) -> np.ndarray:
    if str(path).endswith(".npz"):
        with np.load(path) as data:
            return np.asarray(data["descriptors"], dtype=np.float64)
    return np.load(path).astype(np.float64)


def _emit(text: str, output) -> None:
    if output:
        Path(output).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def cmd_vocab_train(args) -> int:
    X = _load_descriptors(args.descriptors)
    if args.sample and X.shape[0] > args.sample:
        rng = np.random.default_rng(args.seed)
        X = X[np.sort(rng.choice(X.shape[0], args.sample, replace=False))]
    vocab = train_vocabulary(X, args.words, args.seed)
    np.savez(args.output, centroids=vocab.centroids_)
    log.info("trained %d words on %d descriptors -> %s", vocab.k, X.shape[0], args.output)
    return 0


def cmd_embed(args) -> int:
    with np.load(args.raw) as raw:
        missing = [k for k in RAW_KEYS if k not in raw]
        if missing:
            raise SystemExit(f"raw model lacks arrays: {', '.join(missing)}")
        data = {k: raw[k] for k in RAW_KEYS}
    with np.load(args.vocab) as v:
        vocab = Vocabulary.from_centroids(v["centroids"])
    n_points = data["positions"].shape[0]
    graph = VisibilityGraph.from_edges(data["edge_point"], data["edge_image"], n_points)
    words = vocab.predict(data["descriptors"])
    emb = train_embedding(data["descriptors"], words, vocab, args.bits, args.seed)
    model = compress_model(data["positions"], data["descriptors"], data["descriptor_point"], graph, vocab, emb, descriptor_word=words)
    size = container.write_model(model, args.output)
    log.info("wrote %d entries (%d bytes) -> %s", model.n_entries, size, args.output)
    return 0


def _scene_config(args) -> SyntheticSceneConfig:
    overrides = {}
    if args.config:
        overrides = yaml.safe_load(Path(args.config).read_text(encoding="utf-8")) or {}
    for key in ("image_size", "focal_range"):
        if key in overrides:
            overrides[key] = tuple(overrides[key])
    if args.seed is not None:
        overrides["seed"] = args.seed
    return SyntheticSceneConfig(**overrides)


def cmd_synth(args) -> int:
    cfg = _scene_config(args)
    scene = generate_scene(cfg)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    model = scene.build_model(n_words=args.words, bits=args.bits, seed=cfg.seed)
    container.write_model(model, out / "model.cpfl")
    pts, imgs = scene.graph.edges()
    np.savez(out / "raw.npz", positions=scene.positions, descriptors=scene.descriptors,
             descriptor_point=scene.descriptor_point, edge_point=pts, edge_image=imgs)
    write_queries(scene.queries, out / "queries.jsonl")
    meta = {"scene_diameter": scene.diameter, "units": "world units", "config": {k: list(v) if isinstance(v, tuple) else v for k, v in cfg.to_dict().items()}}
    write_ground_truth(scene.truths, out / "ground_truth.jsonl", meta)
    log.info("scene: %d points, %d images, %d queries, diameter %.3f -> %s",
             cfg.num_points, cfg.num_db_images, cfg.num_queries, scene.diameter, out)
    return 0


def cmd_localize(args) -> int:
    params = load_params(args.params)
    if args.ablate:
        params = params.ablate(*args.ablate)
    model = container.read_model(args.model)
    queries = read_queries(args.queries)
    est = CascadedLocalizer.from_params(params, random_state=args.seed or 0, n_jobs=args.threads).fit(model)
    results = est.predict(queries)
    write_results(results, args.output, include_timings=args.timings)
    done = sum(r.localized for r in results)
    log.info("localized %d/%d queries -> %s", done, len(results), args.output)
    return 0


def cmd_evaluate(args) -> int:
    results = read_results(args.results)
    truths, meta = read_ground_truth(args.ground_truth)
    notes = {"units": meta.get("units", "meters")}
    if "scene_diameter" in meta:
        notes["scene_diameter"] = meta["scene_diameter"]
    report = evaluate(results, truths, distance_scale=args.distance_scale, notes=notes)
    _emit(json.dumps(report.to_dict(), indent=2) if args.json else report.render(), args.output)
    return 0


def cmd_mem_report(args) -> int:
    report = container.memory_report(container.read_model(args.model))
    _emit(json.dumps(report.to_dict(), indent=2) if args.json else report.render(), args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cpfloc", description="Cascaded match filtering for image-based localization.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("vocab-train", help="train a k-means visual vocabulary")
    p.add_argument("descriptors", help=".npy array or .npz with a 'descriptors' array")
    p.add_argument("--words", type=int, default=256)
    p.add_argument("--sample", type=int, default=0, help="train on a random subset of this size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_vocab_train)

    p = sub.add_parser("embed", help="build a binary model container from a raw model")
    p.add_argument("raw", help=".npz with " + ", ".join(RAW_KEYS))
    p.add_argument("--vocab", required=True)
    p.add_argument("--bits", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("synth", help="generate a synthetic scene, its model, queries and ground truth")
    p.add_argument("--config", help="YAML overrides for the scene configuration")
    p.add_argument("--words", type=int, default=256)
    p.add_argument("--bits", type=int, default=64)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--output", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("localize", help="localize queries against a model container")
    p.add_argument("model")
    p.add_argument("queries")
    p.add_argument("--params")
    p.add_argument("--ablate", action="append", choices=ABLATIONS, default=[])
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timings", action="store_true", help="include per-stage timings (makes output run-dependent)")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("evaluate", help="summarise results against ground truth")
    p.add_argument("results")
    p.add_argument("ground_truth")
    p.add_argument("--distance-scale", type=float, default=1.0, help="multiply bucket distances by this factor")
    p.add_argument("--json", action="store_true")
    p.add_argument("--output")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("mem-report", help="byte breakdown of a model container")
    p.add_argument("model")
    p.add_argument("--json", action="store_true")
    p.add_argument("--output")
    p.set_defaults(func=cmd_mem_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
