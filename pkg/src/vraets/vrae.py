"""Variational recurrent autoencoder with analytic backpropagation.

Architecture: an LSTM encoder reads each window and its final hidden
state feeds two heads, an affine mean head and a softplus standard
deviation head, parametrizing a diagonal Gaussian posterior. A latent
sample (reparametrization trick) is mapped affinely to the initial
hidden and cell states of an LSTM decoder that runs with zero inputs
and reconstructs the window through an affine output head. The loss is
mean squared reconstruction error plus a KL term against the standard
normal prior, weighted by a (possibly cyclically annealed) beta.

All gradients are computed analytically via backpropagation through
time and are validated against central finite differences in the test
suite. Everything is float64 numpy and deterministic under a seed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from vraets import artifacts
from vraets import _kernels
from vraets.dataset import WindowedDataset
from vraets.errors import DataError, NumericalError
from vraets.numerics import (AdamState, SeededRng, adam_step, clip_global_norm,
                             sigmoid, softplus)

SIGMA_FLOOR = 1e-6


@dataclass
class AnnealSchedule:
    """KL weight schedule: constant beta_max or cyclical 0 -> beta_max ramps."""

    mode: str = "constant"
    cycles: int = 4
    ramp_fraction: float = 0.5
    beta_max: float = 1.0

    def __post_init__(self):
        if self.mode not in ("constant", "cyclical"):
            raise DataError(f"unknown anneal mode {self.mode!r}")
        if not 0.0 < self.ramp_fraction <= 1.0:
            raise DataError("ramp_fraction must be in (0, 1]")
        if self.cycles < 1:
            raise DataError("cycles must be >= 1")
        if self.beta_max < 0:
            raise DataError("beta_max must be >= 0")

    def beta_at(self, global_step: int, total_steps: int) -> float:
        return beta_at(self, global_step, total_steps)


def beta_at(schedule: AnnealSchedule, global_step: int, total_steps: int) -> float:
    """KL weight at a training step; linear ramp then hold, per cycle."""
    if not 0 <= global_step < total_steps:
        raise DataError(f"step {global_step} outside [0, {total_steps})")
    if schedule.mode == "constant":
        return schedule.beta_max
    cycle_len = total_steps / schedule.cycles
    pos = (global_step % cycle_len) / cycle_len
    if pos >= schedule.ramp_fraction:
        return schedule.beta_max
    return schedule.beta_max * pos / schedule.ramp_fraction


@dataclass
class VraeConfig:
    input_dim: int
    hidden_units: int
    latent_dim: int
    learning_rate: float = 5e-4
    dropout_rate: float = 0.2
    clip_norm: float = 5.0
    batch_size: int = 64
    epochs: int = 200
    anneal: AnnealSchedule = field(default_factory=AnnealSchedule)
    seed: int = 0

    def __post_init__(self):
        if min(self.input_dim, self.hidden_units, self.latent_dim) < 1:
            raise DataError("all model dimensions must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise DataError("dropout_rate must be in [0, 1)")
        if self.learning_rate <= 0:
            raise DataError("learning_rate must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "VraeConfig":
        d = dict(d)
        d["anneal"] = AnnealSchedule(**d["anneal"])
        return cls(**d)


@dataclass
class LatentSample:
    """One posterior draw: z = mu + sigma * epsilon, recorded exactly."""

    mu: np.ndarray
    sigma: np.ndarray
    epsilon: np.ndarray
    z: np.ndarray


def init_weights(config: VraeConfig, rng: SeededRng) -> dict[str, np.ndarray]:
    """Uniform +-1/sqrt(fan_in) init; forget-gate biases start at 1.0."""
    d, h, z = config.input_dim, config.hidden_units, config.latent_dim

    def uni(fan_in, shape):
        lim = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-lim, lim, shape)

    params = {
        "enc_W": uni(d + h, (d + h, 4 * h)),
        "enc_b": np.zeros(4 * h),
        "mu_W": uni(h, (h, z)),
        "mu_b": np.zeros(z),
        "sig_W": uni(h, (h, z)),
        "sig_b": np.zeros(z),
        "zh_W": uni(z, (z, h)),
        "zh_b": np.zeros(h),
        "zc_W": uni(z, (z, h)),
        "zc_b": np.zeros(h),
        "dec_W": uni(h, (h, 4 * h)),
        "dec_b": np.zeros(4 * h),
        "out_W": uni(h, (h, d)),
        "out_b": np.zeros(d),
    }
    params["enc_b"][h:2 * h] = 1.0
    params["dec_b"][h:2 * h] = 1.0
    return params


def encoder_forward(params: dict, x: np.ndarray, n_hidden: int):
    """Runs the encoder LSTM over a (B, L, d) batch from zero state.

    Returns the final hidden state (B, n_hidden) and the time-major
    state cache needed by the backward pass. The input projection
    x_t @ W_x is computed for all timesteps in one matmul; the
    recurrence itself runs in the compiled kernel.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    batch, length, d = x.shape
    if params["enc_W"].shape[0] != d + n_hidden:
        raise DataError(f"encoder expects input dim "
                        f"{params['enc_W'].shape[0] - n_hidden}, got {d}")
    W_x = params["enc_W"][:d]
    W_h = np.ascontiguousarray(params["enc_W"][d:])
    x_proj = x.reshape(batch * length, d) @ W_x
    x_proj = x_proj.reshape(batch, length, 4 * n_hidden) + params["enc_b"]
    x_proj = np.ascontiguousarray(x_proj.transpose(1, 0, 2))
    zeros = np.zeros((batch, n_hidden))
    h_all, c_all, gates, tanhc = _kernels.lstm_forward(x_proj, W_h,
                                                       zeros, zeros)
    cache = {"h_all": h_all, "c_all": c_all, "gates": gates, "tanhc": tanhc,
             "x": x}
    return h_all[length].copy(), cache


def posterior_params(params: dict, h_final: np.ndarray):
    """Affine mean head; softplus + floor standard-deviation head."""
    mu = h_final @ params["mu_W"] + params["mu_b"]
    s_pre = h_final @ params["sig_W"] + params["sig_b"]
    sigma = softplus(s_pre) + SIGMA_FLOOR
    return mu, sigma, s_pre


def reparameterize(mu: np.ndarray, sigma: np.ndarray, rng: SeededRng,
                   epsilon: np.ndarray | None = None) -> LatentSample:
    """z = mu + sigma * epsilon with epsilon ~ N(0, I) (or injected)."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0):
        raise DataError("reparameterize: sigma must be positive elementwise")
    if epsilon is None:
        epsilon = rng.standard_normal(mu.shape)
    z = mu + sigma * epsilon
    return LatentSample(mu=mu, sigma=sigma, epsilon=epsilon, z=z)


def decoder_forward(params: dict, z: np.ndarray, length: int, n_hidden: int):
    """Decodes z into an (B, L, d) reconstruction; zero decoder inputs."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        z = z[None]
    h0 = z @ params["zh_W"] + params["zh_b"]
    c0 = z @ params["zc_W"] + params["zc_b"]
    batch = z.shape[0]
    d_out = params["out_W"].shape[1]
    x_proj = np.empty((length, batch, 4 * n_hidden))
    x_proj[:] = params["dec_b"]
    h_all, c_all, gates, tanhc = _kernels.lstm_forward(
        x_proj, params["dec_W"], h0, c0)
    flat = h_all[1:].reshape(length * batch, n_hidden)
    xhat = (flat @ params["out_W"] + params["out_b"]) \
        .reshape(length, batch, d_out).transpose(1, 0, 2).copy()
    cache = {"h_all": h_all, "c_all": c_all, "gates": gates, "tanhc": tanhc,
             "z": z}
    return xhat, cache


def kl_divergence(mu: np.ndarray, sigma: np.ndarray) -> float:
    """Closed-form KL(N(mu, diag sigma^2) || N(0, I)), summed over dims.

    For batched inputs the mean over the batch is returned.
    """
    mu = np.atleast_2d(np.asarray(mu, dtype=np.float64))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=np.float64))
    if np.any(sigma <= 0):
        raise DataError("kl_divergence: sigma must be positive")
    per_sample = 0.5 * np.sum(mu ** 2 + sigma ** 2 - np.log(sigma ** 2) - 1.0,
                              axis=1)
    return float(np.mean(per_sample))


def loss(x: np.ndarray, xhat: np.ndarray, mu: np.ndarray, sigma: np.ndarray,
         beta: float) -> tuple[float, float, float]:
    """(total, reconstruction, kl); recon = mean squared error per entry."""
    x = np.asarray(x, dtype=np.float64)
    xhat = np.asarray(xhat, dtype=np.float64)
    if x.shape != xhat.shape:
        raise DataError(f"loss: shape mismatch {x.shape} vs {xhat.shape}")
    if beta < 0:
        raise DataError("loss: beta must be >= 0")
    recon = float(np.mean((x - xhat) ** 2))
    kl = kl_divergence(mu, sigma)
    return recon + beta * kl, recon, kl


def forward(params: dict, x: np.ndarray, config: VraeConfig,
            epsilon: np.ndarray, beta: float,
            dropout_mask: np.ndarray | None = None):
    """Full forward pass of a batch; returns losses and the backprop cache."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    h_final, enc_cache = encoder_forward(params, x, config.hidden_units)
    if dropout_mask is not None:
        keep = 1.0 - config.dropout_rate
        drop_scale = dropout_mask / keep
    else:
        drop_scale = np.ones_like(h_final)
    h_drop = h_final * drop_scale
    mu, sigma, s_pre = posterior_params(params, h_drop)
    z = mu + sigma * epsilon
    xhat, dec_cache = decoder_forward(params, z, x.shape[1], config.hidden_units)
    total, recon, kl = loss(x, xhat, mu, sigma, beta)
    cache = {"x": x, "xhat": xhat, "mu": mu, "sigma": sigma, "s_pre": s_pre,
             "epsilon": epsilon, "z": z, "h_final": h_final, "h_drop": h_drop,
             "drop_scale": drop_scale, "enc": enc_cache, "dec": dec_cache,
             "beta": beta}
    return total, recon, kl, cache


def backward(params: dict, cache: dict, config: VraeConfig
             ) -> dict[str, np.ndarray]:
    """Analytic gradients of the total loss for every weight in params."""
    if cache is None or "enc" not in cache:
        raise DataError("backward: forward cache missing")
    n_h = config.hidden_units
    x, xhat = cache["x"], cache["xhat"]
    batch, length, d = x.shape
    beta = cache["beta"]
    grads = {k: np.zeros_like(v) for k, v in params.items()}

    # reconstruction head
    dxhat = 2.0 * (xhat - x) / (batch * length * d)

    # decoder BPTT; h_{t-1} feeds the next cell only through the gate
    # pre-activations, so the carried gradient is da @ W_h^T
    dec = cache["dec"]
    dxhat_flat = dxhat.transpose(1, 0, 2).reshape(length * batch, d)
    dh_step = (dxhat_flat @ params["out_W"].T).reshape(length, batch, n_h)
    zeros = np.zeros((batch, n_h))
    da_all, dh0, dc0 = _kernels.lstm_backward(
        dh_step, zeros, zeros, dec["gates"], dec["tanhc"], dec["c_all"],
        np.ascontiguousarray(params["dec_W"].T))
    da_flat = da_all.reshape(length * batch, 4 * n_h)
    grads["out_W"] += dec["h_all"][1:].reshape(length * batch, n_h).T \
        @ dxhat_flat
    grads["out_b"] += dxhat_flat.sum(axis=0)
    grads["dec_W"] += dec["h_all"][:-1].reshape(length * batch, n_h).T \
        @ da_flat
    grads["dec_b"] += da_flat.sum(axis=0)

    # latent pathway
    z = cache["dec"]["z"]
    dz = dh0 @ params["zh_W"].T + dc0 @ params["zc_W"].T
    grads["zh_W"] += z.T @ dh0
    grads["zh_b"] += dh0.sum(axis=0)
    grads["zc_W"] += z.T @ dc0
    grads["zc_b"] += dc0.sum(axis=0)

    mu, sigma, s_pre = cache["mu"], cache["sigma"], cache["s_pre"]
    dmu = dz.copy()
    dsigma = dz * cache["epsilon"]
    # KL term (batch mean of the per-sample closed form)
    dmu += beta * mu / batch
    dsigma += beta * (sigma - 1.0 / sigma) / batch
    ds_pre = dsigma * sigmoid(s_pre)

    h_drop = cache["h_drop"]
    grads["mu_W"] += h_drop.T @ dmu
    grads["mu_b"] += dmu.sum(axis=0)
    grads["sig_W"] += h_drop.T @ ds_pre
    grads["sig_b"] += ds_pre.sum(axis=0)

    dh = (dmu @ params["mu_W"].T + ds_pre @ params["sig_W"].T)
    dh = dh * cache["drop_scale"]

    # encoder BPTT; the only external gradient enters at the final state
    enc = cache["enc"]
    W_h = params["enc_W"][d:]
    da_all, _, _ = _kernels.lstm_backward(
        np.zeros((length, batch, n_h)), dh, np.zeros((batch, n_h)),
        enc["gates"], enc["tanhc"], enc["c_all"],
        np.ascontiguousarray(W_h.T))
    da_flat = da_all.reshape(length * batch, 4 * n_h)
    x_flat = enc["x"].transpose(1, 0, 2).reshape(length * batch, d)
    grads["enc_W"][:d] += x_flat.T @ da_flat
    grads["enc_W"][d:] += enc["h_all"][:-1].reshape(length * batch, n_h).T \
        @ da_flat
    grads["enc_b"] += da_flat.sum(axis=0)
    return grads


@dataclass
class Checkpoint:
    """Model weights plus optimizer state, config, and training history."""

    config: VraeConfig
    params: dict[str, np.ndarray]
    adam: AdamState
    epoch: int
    history: dict[str, list[float]]

    def save(self, path) -> None:
        arrays = {f"param/{k}": v for k, v in self.params.items()}
        arrays.update({f"adam_m/{k}": v for k, v in self.adam.m.items()})
        arrays.update({f"adam_v/{k}": v for k, v in self.adam.v.items()})
        meta = {"config": self.config.to_dict(), "epoch": self.epoch,
                "adam_step": self.adam.step, "history": self.history}
        artifacts.save_artifact(path, "checkpoint", meta, arrays)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        _, meta, arrays = artifacts.load_artifact(path, expect_kind="checkpoint")
        config = VraeConfig.from_dict(meta["config"])
        params = {k.split("/", 1)[1]: v for k, v in arrays.items()
                  if k.startswith("param/")}
        _check_shapes(config, params)
        adam = AdamState(params)
        adam.step = int(meta["adam_step"])
        adam.m = {k.split("/", 1)[1]: v for k, v in arrays.items()
                  if k.startswith("adam_m/")}
        adam.v = {k.split("/", 1)[1]: v for k, v in arrays.items()
                  if k.startswith("adam_v/")}
        history = {k: list(map(float, v)) for k, v in meta["history"].items()}
        return cls(config, params, adam, int(meta["epoch"]), history)


def _check_shapes(config: VraeConfig, params: dict) -> None:
    rng = SeededRng(0)
    expected = init_weights(config, rng)
    if set(expected) != set(params):
        raise DataError("checkpoint parameter names do not match config")
    for k, v in expected.items():
        if params[k].shape != v.shape:
            raise DataError(f"checkpoint shape mismatch for {k!r}: "
                            f"{params[k].shape} vs {v.shape}")


_HISTORY_KEYS = ("train_total", "train_recon", "train_kl",
                 "val_total", "val_recon", "val_kl")


def train(config: VraeConfig, train_set: WindowedDataset,
          val_set: WindowedDataset | None = None) -> Checkpoint:
    """Seeded mini-batch training with Adam, clipping, and KL annealing."""
    if len(train_set) == 0:
        raise DataError("train: empty training set")
    if train_set.n_features != config.input_dim:
        raise DataError(f"train: dataset has {train_set.n_features} features, "
                        f"config expects {config.input_dim}")
    rng = SeededRng(config.seed)
    params = init_weights(config, rng)
    adam = AdamState(params)
    history: dict[str, list[float]] = {k: [] for k in _HISTORY_KEYS}

    n = len(train_set)
    bs = min(config.batch_size, n)
    n_batches = (n + bs - 1) // bs
    total_steps = config.epochs * n_batches
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        ep_total = ep_recon = ep_kl = 0.0
        beta = 0.0
        for b in range(n_batches):
            idx = order[b * bs:(b + 1) * bs]
            xb = train_set.windows[idx]
            beta = beta_at(config.anneal, step, total_steps)
            eps = rng.standard_normal((len(idx), config.latent_dim))
            mask = None
            if config.dropout_rate > 0:
                keep = 1.0 - config.dropout_rate
                mask = (rng.uniform(0.0, 1.0, (len(idx), config.hidden_units))
                        < keep).astype(np.float64)
            total, recon, kl, cache = forward(params, xb, config, eps, beta,
                                              mask)
            if not np.isfinite(total):
                raise NumericalError(f"non-finite loss at epoch {epoch}, "
                                     f"batch {b}")
            grads = backward(params, cache, config)
            grads = clip_global_norm(grads, config.clip_norm)
            params = adam_step(params, grads, adam, config.learning_rate)
            w = len(idx) / n
            ep_total += total * w
            ep_recon += recon * w
            ep_kl += kl * w
            step += 1
        history["train_total"].append(ep_total)
        history["train_recon"].append(ep_recon)
        history["train_kl"].append(ep_kl)
        if val_set is not None and len(val_set) > 0:
            vt, vr, vk = evaluate(params, val_set, config, beta)
            history["val_total"].append(vt)
            history["val_recon"].append(vr)
            history["val_kl"].append(vk)
    return Checkpoint(config, params, adam, config.epochs, history)


def evaluate(params: dict, dataset: WindowedDataset, config: VraeConfig,
             beta: float) -> tuple[float, float, float]:
    """Deterministic loss on a dataset: epsilon = 0, dropout disabled."""
    total = recon = kl = 0.0
    n = len(dataset)
    bs = min(config.batch_size, n)
    for start in range(0, n, bs):
        xb = dataset.windows[start:start + bs]
        eps = np.zeros((xb.shape[0], config.latent_dim))
        t, r, k = forward(params, xb, config, eps, beta, None)[:3]
        w = xb.shape[0] / n
        total += t * w
        recon += r * w
        kl += k * w
    return total, recon, kl


def encode_dataset(checkpoint: Checkpoint, dataset: WindowedDataset
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Posterior means for every window (dropout off), with aligned labels."""
    config = checkpoint.config
    if dataset.n_features != config.input_dim:
        raise DataError(f"encode: dataset has {dataset.n_features} features, "
                        f"checkpoint expects {config.input_dim}")
    mus = np.zeros((len(dataset), config.latent_dim))
    bs = max(1, config.batch_size)
    for start in range(0, len(dataset), bs):
        xb = dataset.windows[start:start + bs]
        h_final, _ = encoder_forward(checkpoint.params, xb, config.hidden_units)
        mu, _, _ = posterior_params(checkpoint.params, h_final)
        mus[start:start + bs] = mu
    return mus, dataset.labels.copy()


def latent_line_report(latents: np.ndarray, labels: np.ndarray,
                       samples_per_class: int = 15) -> dict:
    """Per-dimension class means, sample traces, and separation ranking.

    Separation of a dimension is the largest pairwise
    |class mean difference| / pooled standard deviation.
    """
    latents = np.asarray(latents, dtype=np.float64)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise DataError("latent_line_report: need at least two classes")
    means = {}
    stds = {}
    counts = {}
    traces = {}
    for cls in classes:
        rows = latents[labels == cls]
        means[int(cls)] = rows.mean(axis=0)
        stds[int(cls)] = rows.std(axis=0, ddof=1) if len(rows) > 1 \
            else np.zeros(latents.shape[1])
        counts[int(cls)] = len(rows)
        take = min(samples_per_class, len(rows))
        if take < samples_per_class:
            warnings.warn(f"class {cls}: only {len(rows)} samples available, "
                          f"requested {samples_per_class}")
        traces[int(cls)] = rows[:take]
    n_dims = latents.shape[1]
    separation = np.zeros(n_dims)
    cls_list = [int(c) for c in classes]
    for ai in range(len(cls_list)):
        for bi in range(ai + 1, len(cls_list)):
            a, b = cls_list[ai], cls_list[bi]
            na, nb = counts[a], counts[b]
            pooled_var = ((max(na - 1, 0) * stds[a] ** 2 +
                           max(nb - 1, 0) * stds[b] ** 2) /
                          max(na + nb - 2, 1))
            pooled = np.sqrt(pooled_var)
            diff = np.abs(means[a] - means[b])
            score = np.where(pooled > 0, diff / np.where(pooled > 0, pooled, 1.0),
                             np.where(diff > 0, np.inf, 0.0))
            separation = np.maximum(separation, score)
    return {"class_means": means, "class_traces": traces,
            "separation": separation,
            "ranked_dimensions": list(np.argsort(-separation))}
