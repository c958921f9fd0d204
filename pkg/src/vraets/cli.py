"""Command-line pipeline orchestrator.

Each subcommand performs one stage and persists a versioned artifact
plus a reproducibility manifest (config snapshot, input hashes, seed),
so the pipeline can be resumed from any stage:

    generate -> preprocess -> train -> encode -> project -> cluster
    -> score, with plot available on any embedding artifact.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from vraets import artifacts, clustering, config as cfgmod, dataset, projection
from vraets import scoring, svgplot, vrae
from vraets.errors import DataError, NumericalError, PipelineError


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="config file (key = value lines)")
    p.add_argument("--preset", choices=sorted(cfgmod.PRESETS),
                   help="named hyperparameter preset")
    p.add_argument("--seed", type=int, help="global seed override")
    p.add_argument("--out", required=True, help="output file or directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vraets",
        description="VRAE anomaly-detection pipeline for turbine time series")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write synthetic simulation CSVs")
    _add_common(p)

    p = sub.add_parser("preprocess",
                       help="select features, window, split, scale")
    p.add_argument("--data", required=True, help="directory of CSVs + metadata")
    _add_common(p)

    p = sub.add_parser("train", help="train the VRAE")
    p.add_argument("--train-data", required=True, help="train windows artifact")
    p.add_argument("--val-data", help="validation windows artifact")
    p.add_argument("--epochs", type=int, help="override epoch count")
    _add_common(p)

    p = sub.add_parser("encode", help="encode windows to latent means")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="windows artifact")
    _add_common(p)

    p = sub.add_parser("project", help="project latents to 2D")
    p.add_argument("--latents", required=True)
    p.add_argument("--method", choices=["pca", "tsne", "kpca", "spectral"])
    _add_common(p)

    p = sub.add_parser("cluster", help="cluster an embedding")
    p.add_argument("--embedding", required=True)
    p.add_argument("--method", choices=["kmeans", "hierarchical", "dbscan"])
    _add_common(p)

    p = sub.add_parser("score", help="match clusters to truth and score")
    p.add_argument("--assignment", required=True)
    p.add_argument("--embedding", required=True)
    _add_common(p)

    p = sub.add_parser("plot", help="scatter-plot an embedding to SVG")
    p.add_argument("--embedding", required=True)
    _add_common(p)
    return parser


def _resolve(args) -> dict:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    return cfgmod.resolve(args.preset, args.config, overrides)


# zone -> masses of the 11 abnormal simulations (4/4/3 across the zones)
ABNORMAL_PLAN = [(1, m) for m in (0.4, 0.6, 0.8, 1.0)] + \
                [(2, m) for m in (0.4, 0.6, 0.8, 1.0)] + \
                [(3, m) for m in (0.4, 0.6, 0.8)]
N_NORMAL = 14


def cmd_generate(args) -> None:
    cfg = _resolve(args)
    os.makedirs(args.out, exist_ok=True)
    seed = int(cfg["seed"])
    n_steps = int(cfg["synth.n_steps"])
    ice_configs = [dataset.IceConfig()] * N_NORMAL
    for zone, mass in ABNORMAL_PLAN:
        masses = [0.0, 0.0, 0.0]
        masses[zone - 1] = mass
        ice_configs.append(dataset.IceConfig(*masses))
    meta_lines = []
    for i, ice in enumerate(ice_configs):
        synth = dataset.SynthConfig(
            rotation_hz=float(cfg["synth.rotation_hz"]),
            sample_rate_hz=float(cfg["synth.sample_rate_hz"]),
            harmonics=int(cfg["synth.harmonics"]),
            noise_std=float(cfg["synth.noise_std"]),
            seed=seed * 1000 + i)
        record = dataset.synthesize(synth, ice, n_steps)
        sim_id = f"sim_{i:03d}"
        record.sim_id = sim_id
        dataset.save_csv(record, os.path.join(args.out, f"{sim_id}.csv"))
        meta_lines.append(f"{sim_id},{ice}")
    meta_path = os.path.join(args.out, "metadata.csv")
    with open(meta_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(meta_lines))
        fh.write("\n")
    artifacts.write_manifest(meta_path, cfg, {}, seed)
    print(f"wrote {len(ice_configs)} simulations to {args.out}")


def _load_records(data_dir, cfg):
    meta_path = os.path.join(data_dir, "metadata.csv")
    metadata = dataset.read_metadata(meta_path)
    records = []
    for sim_id in sorted(metadata):
        csv_path = os.path.join(data_dir, f"{sim_id}.csv")
        rec = dataset.load_csv(csv_path, metadata)
        records.append(dataset.select_features(rec, list(cfg["prep.features"])))
    return records


def cmd_preprocess(args) -> None:
    cfg = _resolve(args)
    records = _load_records(args.data, cfg)
    if cfg["prep.classes"] == "two":
        records = [r for r in records if r.label() in (0, 1)]
    windows = dataset.build_windows(records, int(cfg["prep.window_length"]),
                                    int(cfg["prep.stride"]))
    train_set, test_set = dataset.split(windows,
                                        float(cfg["prep.train_fraction"]),
                                        int(cfg["seed"]))
    scaler = dataset.fit_minmax([train_set.windows])
    train_set = dataset.scale_windows(train_set, scaler)
    test_set = dataset.scale_windows(test_set, scaler)
    os.makedirs(args.out, exist_ok=True)
    for name, part in (("train.windows", train_set), ("test.windows", test_set)):
        path = os.path.join(args.out, name)
        dataset.save_windows(part, path)
        artifacts.write_manifest(
            path, cfg,
            {"metadata": os.path.join(args.data, "metadata.csv")},
            int(cfg["seed"]))
    print(f"preprocessed {len(windows)} windows -> "
          f"{len(train_set)} train / {len(test_set)} test")


def cmd_train(args) -> None:
    cfg = _resolve(args)
    if args.epochs is not None:
        cfg["vrae.epochs"] = args.epochs
    train_set = dataset.load_windows(args.train_data)
    val_set = dataset.load_windows(args.val_data) if args.val_data else None
    model_cfg = cfgmod.vrae_config(cfg, train_set.n_features)
    checkpoint = vrae.train(model_cfg, train_set, val_set)
    checkpoint.save(args.out)
    inputs = {"train_data": args.train_data}
    if args.val_data:
        inputs["val_data"] = args.val_data
    artifacts.write_manifest(args.out, cfg, inputs, int(cfg["seed"]))
    last = checkpoint.history["train_total"][-1] \
        if checkpoint.history["train_total"] else float("nan")
    print(f"trained {model_cfg.epochs} epochs; final train loss {last:.6f}")


def cmd_encode(args) -> None:
    cfg = _resolve(args)
    checkpoint = vrae.Checkpoint.load(args.checkpoint)
    data = dataset.load_windows(args.data)
    mus, labels = vrae.encode_dataset(checkpoint, data)
    artifacts.save_artifact(args.out, "latents",
                            {"latent_dim": checkpoint.config.latent_dim},
                            {"mus": mus, "labels": labels})
    artifacts.write_manifest(args.out, cfg,
                             {"checkpoint": args.checkpoint,
                              "data": args.data}, int(cfg["seed"]))
    print(f"encoded {len(labels)} windows to {mus.shape[1]}-dim latents")


def cmd_project(args) -> None:
    cfg = _resolve(args)
    method = args.method or cfg["project.method"]
    _, _, arrays = artifacts.load_artifact(args.latents, expect_kind="latents")
    X, labels = arrays["mus"], arrays["labels"]
    if method == "pca":
        emb = projection.pca(X, 2)
    elif method == "tsne":
        emb = projection.tsne(X, perplexity=float(cfg["project.perplexity"]),
                              iterations=int(cfg["project.iterations"]),
                              seed=int(cfg["seed"]))
    elif method == "kpca":
        gamma = cfg["project.gamma"]
        emb = projection.kernel_pca_rbf(
            X, 2, float(gamma) if gamma is not None else None)
    elif method == "spectral":
        emb = projection.spectral_embedding(
            X, k_neighbors=int(cfg["project.k_neighbors"]), dims=2)
    else:
        raise DataError(f"unknown projection method {method!r}")
    emb.save(args.out, labels)
    artifacts.write_manifest(args.out, cfg, {"latents": args.latents},
                             int(cfg["seed"]))
    print(f"projected {len(labels)} points with {method}")


def cmd_cluster(args) -> None:
    cfg = _resolve(args)
    method = args.method or cfg["cluster.method"]
    emb, labels = projection.Embedding.load(args.embedding)
    X = emb.points
    k = int(cfg["cluster.k"])
    if method == "kmeans":
        assignment = clustering.kmeans_pp(X, k, seed=int(cfg["seed"]))
    elif method == "hierarchical":
        assignment = clustering.hierarchical(X, k)
    elif method == "dbscan":
        eps = cfg["cluster.eps"]
        eps = float(eps) if eps is not None else clustering.default_eps(X)
        assignment = clustering.dbscan(X, eps,
                                       min_pts=int(cfg["cluster.min_pts"]))
    else:
        raise DataError(f"unknown clustering method {method!r}")
    assignment.save(args.out)
    artifacts.write_manifest(args.out, cfg, {"embedding": args.embedding},
                             int(cfg["seed"]))
    print(f"{method}: {assignment.n_clusters} clusters")


def cmd_score(args) -> None:
    cfg = _resolve(args)
    assignment = clustering.ClusterAssignment.load(args.assignment)
    emb, labels = projection.Embedding.load(args.embedding)
    if labels is None:
        raise DataError(f"{args.embedding}: embedding artifact carries no "
                        "ground-truth labels")
    report = scoring.score_assignment(assignment, labels, emb.points)
    os.makedirs(args.out, exist_ok=True)
    json_path = os.path.join(args.out, "report.json")
    with open(json_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    with open(os.path.join(args.out, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(report.render_table())
    artifacts.write_manifest(json_path, cfg,
                             {"assignment": args.assignment,
                              "embedding": args.embedding}, int(cfg["seed"]))
    print(report.render_table())


def cmd_plot(args) -> None:
    emb, labels = projection.Embedding.load(args.embedding)
    if labels is None:
        labels = np.zeros(len(emb.points), dtype=np.int64)
    svgplot.scatter_svg(emb.points, labels, emb.method, args.out)
    print(f"wrote {args.out}")


_COMMANDS = {
    "generate": cmd_generate,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "encode": cmd_encode,
    "project": cmd_project,
    "cluster": cmd_cluster,
    "score": cmd_score,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        _COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (DataError, PipelineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
