"""Operator entry point: dataset generation, training, encoding, clustering,
evaluation, and serving.

Every command writes its artifact atomically (temp file + rename, or a fresh
directory torn down on failure) plus a JSON run manifest recording resolved
parameters, input/output checksums, and wall-clock duration.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import shutil
import sys
import time
from pathlib import Path

import numpy as np

from . import clustering, codebook as codebook_mod, retrieval, synthdata, vae
from .errors import LatentLabError


def _sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def artifact_checksum(path):
    """sha256 of a file, or of a directory's sorted (name, file-hash) pairs."""
    p = Path(path)
    if p.is_dir():
        h = hashlib.sha256()
        for sub in sorted(p.rglob("*")):
            if sub.is_file():
                h.update(str(sub.relative_to(p)).encode())
                h.update(bytes.fromhex(_sha256_file(sub)))
        return h.hexdigest()
    return _sha256_file(p)


def write_manifest(artifact_path, command, parameters, inputs, started):
    """Atomic JSON manifest next to the artifact it describes."""
    manifest = {
        "command": command,
        "parameters": parameters,
        "inputs": {str(p): artifact_checksum(p) for p in inputs},
        "outputs": {str(artifact_path): artifact_checksum(artifact_path)},
        "duration_seconds": round(time.time() - started, 3),
    }
    target = Path(f"{artifact_path}.manifest.json")
    tmp = target.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(manifest, indent=2) + "\n", encoding="ascii")
    os.replace(tmp, target)


def _atomic_write(path, producer):
    """producer(tmp_path) writes the artifact; tmp is renamed or removed."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        producer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if tmp.exists():
            tmp.unlink()
        raise


def _parse_counts(text):
    parts = [int(v) for v in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            f"counts must be three comma-separated integers, got {text!r}"
        )
    return tuple(parts)


def _parse_dims(text):
    parts = [int(v) for v in text.lower().split("x")]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(
            f"dims must look like 32x32, got {text!r}"
        )
    return tuple(parts)


def _parse_int_list(text):
    return [int(v) for v in text.split(",")]


def cmd_gen_data(args):
    started = time.time()
    counts = (
        synthdata.IMBALANCED_COUNTS
        if args.preset == "imbalanced"
        else synthdata.BALANCED_COUNTS
    )
    if args.counts is not None:
        counts = args.counts
    corpus = synthdata.generate_corpus(counts, dims=args.dims, seed=args.seed)
    out = Path(args.out)
    created = not out.exists()
    try:
        synthdata.save_corpus(corpus, out)
    except BaseException:
        if created and out.exists():
            shutil.rmtree(out)
        raise
    write_manifest(
        out,
        "gen-data",
        {"counts": list(counts), "dims": list(args.dims), "seed": args.seed},
        inputs=[],
        started=started,
    )
    print(f"wrote {len(corpus)} items to {out} (counts {corpus.counts()})")
    return 0


def cmd_train(args):
    started = time.time()
    corpus = synthdata.load_corpus(args.corpus)
    h, w, c = corpus.dims
    model = vae.VaeModel.create(
        image_dims=(h, w, c), d_z=args.d_z, hidden=tuple(args.hidden), seed=args.seed
    )
    config = vae.TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        seed=args.seed,
        kl_weight=args.kl_weight,
    )
    model, trace = vae.train(model, corpus.images, config, log=print)
    _atomic_write(args.out, lambda tmp: vae.save_model(tmp, model))
    write_manifest(
        args.out,
        "train",
        {
            "corpus": str(args.corpus),
            "epochs": args.epochs,
            "batch_size": args.batch_size,
            "learning_rate": args.learning_rate,
            "seed": args.seed,
            "kl_weight": args.kl_weight,
            "d_z": args.d_z,
            "hidden": list(args.hidden),
        },
        inputs=[args.corpus],
        started=started,
    )
    print(
        f"trained {args.epochs} epochs; total loss {trace[0][3]:.3f} -> "
        f"{trace[-1][3]:.3f}; wrote {args.out}"
    )
    return 0


def cmd_encode(args):
    started = time.time()
    model = vae.load_model(args.model)
    corpus = synthdata.load_corpus(args.corpus)
    epsilon = codebook_mod.sample_shared_epsilon(model.d_z, args.eps_seed)
    book = codebook_mod.build_codebook(model, corpus, epsilon)
    _atomic_write(args.out, lambda tmp: codebook_mod.save_codebook(tmp, book))
    write_manifest(
        args.out,
        "encode",
        {"model": str(args.model), "corpus": str(args.corpus), "eps_seed": args.eps_seed},
        inputs=[args.model, args.corpus],
        started=started,
    )
    print(f"encoded {len(book)} items (d_z={book.d_z}); wrote {args.out}")
    return 0


def cmd_cluster(args):
    started = time.time()
    book = codebook_mod.load_codebook(args.codebook)
    features = book.z_fixed if args.feature_kind == "z_fixed" else book.mu
    model = clustering.kmeans_fit(
        features, args.k, seed=args.seed, feature_kind=args.feature_kind
    )
    model.cluster_to_class = clustering.map_clusters_to_classes(
        model.assignments, book.tags, args.k
    )
    _atomic_write(args.out, lambda tmp: clustering.save_centers(tmp, model))
    write_manifest(
        args.out,
        "cluster",
        {
            "codebook": str(args.codebook),
            "feature_kind": args.feature_kind,
            "k": args.k,
            "seed": args.seed,
        },
        inputs=[args.codebook],
        started=started,
    )
    annotated = book.with_cluster_ids(model.assignments)
    target = args.annotated if args.annotated else args.codebook
    _atomic_write(target, lambda tmp: codebook_mod.save_codebook(tmp, annotated))
    write_manifest(
        target,
        "cluster",
        {
            "codebook": str(args.codebook),
            "feature_kind": args.feature_kind,
            "k": args.k,
            "seed": args.seed,
        },
        inputs=[],
        started=started,
    )
    print(
        f"k={args.k} on {args.feature_kind}: inertia {model.inertia:.3f} after "
        f"{len(model.inertia_trace)} assignment passes; wrote {args.out} and {target}"
    )
    return 0


def cmd_eval(args):
    started = time.time()
    book = codebook_mod.load_codebook(args.codebook)
    centers = clustering.load_centers(args.centers)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    map_text = retrieval.map_table(
        book, centers, args.queries, args.cutoffs, seed=args.seed
    )
    map_path = out_dir / "map.tsv"
    _atomic_write(map_path, lambda tmp: Path(tmp).write_text(map_text, encoding="ascii"))
    write_manifest(
        map_path,
        "eval",
        {
            "codebook": str(args.codebook),
            "centers": str(args.centers),
            "cutoffs": list(args.cutoffs),
            "queries": args.queries,
            "seed": args.seed,
        },
        inputs=[args.codebook, args.centers],
        started=started,
    )
    sys.stdout.write(map_text)

    for kind in clustering.FEATURE_KINDS:
        features = book.z_fixed if kind == "z_fixed" else book.mu
        km = clustering.kmeans_fit(features, centers.k, seed=args.seed, feature_kind=kind)
        mapping = clustering.map_clusters_to_classes(
            km.assignments, book.tags, centers.k
        )
        table = clustering.metrics_table(
            clustering.cluster_metrics(km.assignments, mapping, book.tags)
        )
        path = out_dir / f"cluster_metrics_{kind}.tsv"
        _atomic_write(path, lambda tmp, t=table: Path(tmp).write_text(t, encoding="ascii"))
        write_manifest(
            path,
            "eval",
            {
                "codebook": str(args.codebook),
                "feature_kind": kind,
                "k": centers.k,
                "seed": args.seed,
            },
            inputs=[args.codebook],
            started=started,
        )
        sys.stdout.write(f"\n[{kind}]\n{table}")
    return 0


def cmd_serve(args):
    from . import service

    host, _, port = args.bind.rpartition(":")
    state = service.load_state(args.model, args.codebook, args.centers, seed=args.seed)
    app = service.create_app(state, ui_dir=args.ui_dir)
    import uvicorn

    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="info")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="latentlab",
        description="Synthetic-corpus VAE pipeline: generate, train, encode, "
        "cluster, evaluate, serve.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic product corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--counts", type=_parse_counts, default=None,
                   help="bags,footwear,eyewear (overrides --preset)")
    p.add_argument("--preset", choices=("balanced", "imbalanced"), default="balanced")
    p.add_argument("--dims", type=_parse_dims, default=(32, 32))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the VAE on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--kl-weight", type=float, default=1.0)
    p.add_argument("--d-z", type=int, default=16)
    p.add_argument("--hidden", type=_parse_int_list, default=[512, 128])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="build the codebook from a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--eps-seed", type=int, default=0)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("cluster", help="fit k-means and annotate the codebook")
    p.add_argument("--codebook", required=True)
    p.add_argument("--out", required=True, help="centers sidecar path")
    p.add_argument("--feature-kind", choices=clustering.FEATURE_KINDS,
                   default="z_fixed")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--annotated", default=None,
                   help="write the annotated codebook here instead of in place")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("eval", help="mAP table plus clustering metrics tables")
    p.add_argument("--codebook", required=True)
    p.add_argument("--centers", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--cutoffs", type=_parse_int_list, default=[10, 25, 50, 500])
    p.add_argument("--queries", type=int, default=100,
                   help="queries per category")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="serve decode/similar/recommend over HTTP")
    p.add_argument("--model", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--centers", required=True)
    p.add_argument("--bind", default="127.0.0.1:8000")
    p.add_argument("--ui-dir", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (LatentLabError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
