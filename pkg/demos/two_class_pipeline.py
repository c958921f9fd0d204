"""End-to-end two-class anomaly detection, narrated stage by stage.

Generates a small synthetic fleet (healthy rotors plus one blade-zone
ice class), trains the variational recurrent autoencoder on windowed
accelerations, clusters the learned latents, and prints the scoring
table. Scaled down from the full experiment so it finishes in about a
minute on one CPU core.

Run:  python3 demos/two_class_pipeline.py [output_dir]
"""

import os
import sys

import numpy as np

from vraets import clustering, dataset, projection, scoring, svgplot, vrae
from vraets.vrae import AnnealSchedule, VraeConfig

OUT = sys.argv[1] if len(sys.argv) > 1 else "demo_out/two_class"
SEED = 7


def main():
    os.makedirs(OUT, exist_ok=True)

    # --- 1. synthesize a labeled fleet -----------------------------------
    # 6 healthy simulations plus 3 with increasing ice mass on blade 1.
    # Each record is 3000 steps of 6 blade-acceleration channels.
    synth = dataset.SynthConfig(seed=SEED)
    records = []
    for i in range(6):
        cfg = dataset.SynthConfig(seed=SEED * 100 + i)
        records.append(dataset.synthesize(cfg, dataset.IceConfig(), 3000))
    for i, mass in enumerate((0.5, 0.75, 1.0)):
        cfg = dataset.SynthConfig(seed=SEED * 100 + 50 + i)
        records.append(dataset.synthesize(cfg, dataset.IceConfig(mass, 0, 0),
                                          3000))
    print(f"synthesized {len(records)} simulations "
          f"({synth.rotation_hz} Hz rotor, {synth.sample_rate_hz} Hz sampling)")

    # --- 2. window, split, scale ------------------------------------------
    # 200-sample windows = one rotor revolution; the scaler is fit on the
    # training split only, then applied to both.
    windows = dataset.build_windows(records, length=200, stride=200)
    train_set, test_set = dataset.split(windows, train_fraction=0.7, seed=SEED)
    scaler = dataset.fit_minmax([train_set.windows])
    train_set = dataset.scale_windows(train_set, scaler)
    test_set = dataset.scale_windows(test_set, scaler)
    print(f"windows: {len(train_set)} train / {len(test_set)} test, "
          f"shape {train_set.windows.shape[1:]}")

    # --- 3. train the VRAE -------------------------------------------------
    # The KL weight is small relative to the per-entry reconstruction MSE;
    # a large weight collapses the posterior and erases class structure.
    config = VraeConfig(input_dim=6, hidden_units=16, latent_dim=4,
                        epochs=40, seed=SEED,
                        anneal=AnnealSchedule(beta_max=0.001))
    checkpoint = vrae.train(config, train_set, val_set=test_set)
    hist = checkpoint.history
    print(f"trained {config.epochs} epochs: "
          f"recon {hist['train_recon'][0]:.4f} -> {hist['train_recon'][-1]:.4f}, "
          f"KL {hist['train_kl'][-1]:.4f}")

    # --- 4. encode and project ---------------------------------------------
    mus, labels = vrae.encode_dataset(checkpoint, test_set)
    embedding = projection.pca(mus, 2)
    var = embedding.extras["explained_variance"]
    print(f"PCA on {mus.shape[1]}-dim latents: "
          f"top-2 variance share {var[:2].sum() / max(var.sum(), 1e-300):.2f}")

    # --- 5. cluster and score ----------------------------------------------
    for name, assignment in (
            ("kmeans", clustering.kmeans_pp(embedding.points, 2, seed=SEED)),
            ("hierarchical", clustering.hierarchical(embedding.points, 2))):
        report = scoring.score_assignment(assignment, labels, embedding.points)
        print()
        print(report.render_table().rstrip())

    # --- 6. plot -------------------------------------------------------------
    svg = os.path.join(OUT, "latents_pca.svg")
    svgplot.scatter_svg(embedding.points, labels, "pca", svg)
    print(f"\nwrote {svg}")


if __name__ == "__main__":
    main()
