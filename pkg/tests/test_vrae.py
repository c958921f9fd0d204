import numpy as np
import pytest

from vraets import vrae
from vraets.dataset import WindowedDataset
from vraets.errors import DataError
from vraets.numerics import SeededRng, finite_difference_gradient
from vraets.vrae import (AnnealSchedule, Checkpoint, VraeConfig, backward,
                         beta_at, decoder_forward, encode_dataset,
                         encoder_forward, forward, init_weights,
                         kl_divergence, latent_line_report, loss,
                         posterior_params, reparameterize, train)

TINY = VraeConfig(input_dim=2, hidden_units=4, latent_dim=3,
                  dropout_rate=0.0, epochs=2, batch_size=4, seed=1)


def tiny_params(seed=1):
    return init_weights(TINY, SeededRng(seed))


def toy_dataset(n=8, length=5, d=2, seed=0):
    rng = np.random.default_rng(seed)
    windows = np.tanh(rng.normal(size=(n, length, d)))
    labels = np.array([i % 2 for i in range(n)])
    return WindowedDataset(windows, labels, length, length,
                           [f"f{i}" for i in range(d)])


class TestEncoderForward:
    def test_zero_weights_give_zero_state(self):
        params = {k: np.zeros_like(v) for k, v in tiny_params().items()}
        x = np.random.default_rng(0).normal(size=(3, 5, 2))
        h, _ = encoder_forward(params, x, TINY.hidden_units)
        np.testing.assert_array_equal(h, np.zeros((3, 4)))

    def test_length_one_equals_single_cell_step(self):
        params = tiny_params()
        x = np.random.default_rng(1).normal(size=(1, 1, 2))
        h_full, _ = encoder_forward(params, x, 4)
        # manual single LSTM step from zero state
        inp = np.concatenate([x[0], np.zeros((1, 4))], axis=1)
        a = inp @ params["enc_W"] + params["enc_b"]
        sig = lambda v: 1.0 / (1.0 + np.exp(-v))
        i, f, o, g = sig(a[:, :4]), sig(a[:, 4:8]), sig(a[:, 8:12]), \
            np.tanh(a[:, 12:])
        h_manual = o * np.tanh(i * g)
        np.testing.assert_allclose(h_full, h_manual, atol=1e-12)

    def test_deterministic(self):
        params = tiny_params()
        x = np.random.default_rng(2).normal(size=(2, 5, 2))
        h1, _ = encoder_forward(params, x, 4)
        h2, _ = encoder_forward(params, x, 4)
        np.testing.assert_array_equal(h1, h2)

    def test_dim_mismatch(self):
        with pytest.raises(DataError):
            encoder_forward(tiny_params(), np.zeros((1, 5, 7)), 4)


class TestPosteriorParams:
    def test_zero_weights(self):
        params = {k: np.zeros_like(v) for k, v in tiny_params().items()}
        mu, sigma, _ = posterior_params(params, np.zeros((1, 4)))
        np.testing.assert_array_equal(mu, np.zeros((1, 3)))
        np.testing.assert_allclose(sigma, np.log(2.0) + 1e-6, atol=1e-12)

    def test_sigma_always_positive(self):
        rng = SeededRng(5)
        for _ in range(100):
            params = init_weights(TINY, rng)
            h = 10.0 * rng.standard_normal((20, 4))
            _, sigma, _ = posterior_params(params, h)
            assert np.all(sigma > 0)

    def test_sigma_floor_no_underflow(self):
        params = tiny_params()
        params["sig_W"] = np.zeros_like(params["sig_W"])
        params["sig_b"] = np.full_like(params["sig_b"], -40.0)
        _, sigma, _ = posterior_params(params, np.ones((1, 4)))
        np.testing.assert_allclose(sigma, 1e-6, rtol=1e-6)
        assert np.all(sigma > 0)


class TestReparameterize:
    def test_zero_epsilon_returns_mu(self):
        mu, sigma = np.array([1.0, -2.0]), np.array([0.5, 2.0])
        s = reparameterize(mu, sigma, SeededRng(0), epsilon=np.zeros(2))
        np.testing.assert_array_equal(s.z, mu)

    def test_standard_normal_identity(self):
        s = reparameterize(np.zeros(3), np.ones(3), SeededRng(3))
        np.testing.assert_array_equal(s.z, s.epsilon)

    def test_elementwise_arithmetic(self):
        s = reparameterize(np.array([1.0, 2.0]), np.array([0.5, 2.0]),
                           SeededRng(0), epsilon=np.array([2.0, -1.0]))
        np.testing.assert_array_equal(s.z, [2.0, 0.0])

    def test_exact_identity_invariant(self):
        rng = SeededRng(4)
        s = reparameterize(rng.standard_normal(6),
                           np.abs(rng.standard_normal(6)) + 0.1, rng)
        np.testing.assert_array_equal(s.z, s.mu + s.sigma * s.epsilon)

    def test_nonpositive_sigma_rejected(self):
        with pytest.raises(DataError):
            reparameterize(np.zeros(2), np.array([1.0, 0.0]), SeededRng(0))


class TestDecoderForward:
    def test_zero_weights_give_zero_output(self):
        params = {k: np.zeros_like(v) for k, v in tiny_params().items()}
        xhat, _ = decoder_forward(params, np.ones(3), 5, 4)
        np.testing.assert_array_equal(xhat, np.zeros((1, 5, 2)))

    def test_deterministic_given_z(self):
        params = tiny_params()
        z = np.array([0.3, -0.7, 1.1])
        a, _ = decoder_forward(params, z, 6, 4)
        b, _ = decoder_forward(params, z, 6, 4)
        np.testing.assert_array_equal(a, b)

    def test_zero_length(self):
        xhat, _ = decoder_forward(tiny_params(), np.zeros(3), 0, 4)
        assert xhat.shape == (1, 0, 2)


class TestKlDivergence:
    def test_prior_equals_posterior(self):
        assert kl_divergence(np.zeros(3), np.ones(3)) == pytest.approx(0.0,
                                                                       abs=1e-15)

    def test_unit_mean_scalar(self):
        assert kl_divergence(np.array([1.0]), np.array([1.0])) == \
            pytest.approx(0.5)

    def test_sigma_two(self):
        expected = 0.5 * (4.0 - np.log(4.0) - 1.0)
        assert kl_divergence(np.array([0.0]), np.array([2.0])) == \
            pytest.approx(expected, rel=1e-12)

    def test_monte_carlo_cross_check(self):
        # independent oracle: E_q[ln q - ln p] by sampling
        rng = np.random.default_rng(0)
        mu, sigma = np.array([0.3, -1.1]), np.array([0.7, 1.8])
        z = mu + sigma * rng.normal(size=(1_000_000, 2))
        ln_q = -0.5 * ((z - mu) / sigma) ** 2 - np.log(sigma) \
            - 0.5 * np.log(2 * np.pi)
        ln_p = -0.5 * z ** 2 - 0.5 * np.log(2 * np.pi)
        estimate = float(np.mean(np.sum(ln_q - ln_p, axis=1)))
        assert kl_divergence(mu, sigma) == pytest.approx(estimate, rel=0.01)

    def test_nonnegative_random_sweep(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            mu = rng.normal(size=4)
            sigma = np.abs(rng.normal(size=4)) + 1e-3
            assert kl_divergence(mu, sigma) >= 0.0

    def test_zero_iff_standard_normal(self):
        assert kl_divergence(np.zeros(5), np.ones(5)) < 1e-12
        assert kl_divergence(np.full(5, 0.1), np.ones(5)) > 1e-12


class TestLoss:
    def test_perfect_reconstruction(self):
        x = np.random.default_rng(0).normal(size=(2, 4, 3))
        total, recon, kl = loss(x, x, np.zeros((2, 2)), np.ones((2, 2)), 1.0)
        assert total == pytest.approx(0.0, abs=1e-15)
        assert recon == 0.0

    def test_beta_zero_is_pure_recon(self):
        x = np.zeros((1, 3, 2))
        xhat = np.ones((1, 3, 2))
        total, recon, _ = loss(x, xhat, np.ones((1, 2)), np.ones((1, 2)), 0.0)
        assert total == recon == 1.0

    def test_half_residual(self):
        x = np.zeros((2, 5, 3))
        xhat = np.full((2, 5, 3), 0.5)
        _, recon, _ = loss(x, xhat, np.zeros((2, 1)), np.ones((2, 1)), 0.0)
        assert recon == pytest.approx(0.25)

    def test_shape_mismatch(self):
        with pytest.raises(DataError):
            loss(np.zeros((1, 2, 2)), np.zeros((1, 3, 2)), np.zeros((1, 1)),
                 np.ones((1, 1)), 1.0)


class TestBackward:
    def test_gradients_match_finite_differences(self):
        cfg = VraeConfig(input_dim=2, hidden_units=4, latent_dim=3,
                         dropout_rate=0.0)
        rng = SeededRng(11)
        params = init_weights(cfg, rng)
        x = rng.standard_normal((3, 5, 2))
        eps = rng.standard_normal((3, 3))
        beta = 0.8
        _, _, _, cache = forward(params, x, cfg, eps, beta)
        analytic = backward(params, cache, cfg)
        numeric = finite_difference_gradient(
            lambda p: forward(p, x, cfg, eps, beta)[0], params, h=1e-5)
        for name in params:
            # floor keeps finite-difference roundoff on ~0 entries from
            # masquerading as relative error
            denom = np.maximum(np.abs(analytic[name]) + np.abs(numeric[name]),
                               1e-4)
            rel = np.max(np.abs(analytic[name] - numeric[name]) / denom)
            assert rel < 1e-5, f"{name}: rel err {rel}"

    def test_gradients_with_dropout_mask(self):
        cfg = VraeConfig(input_dim=2, hidden_units=4, latent_dim=2,
                         dropout_rate=0.5)
        rng = SeededRng(13)
        params = init_weights(cfg, rng)
        x = rng.standard_normal((2, 4, 2))
        eps = rng.standard_normal((2, 2))
        mask = (rng.uniform(0.0, 1.0, (2, 4)) < 0.5).astype(float)
        _, _, _, cache = forward(params, x, cfg, eps, 0.5, mask)
        analytic = backward(params, cache, cfg)
        numeric = finite_difference_gradient(
            lambda p: forward(p, x, cfg, eps, 0.5, mask)[0], params, h=1e-5)
        for name in params:
            denom = np.maximum(np.abs(analytic[name]) + np.abs(numeric[name]),
                               1e-4)
            assert np.max(np.abs(analytic[name] - numeric[name]) / denom) < 1e-5

    def test_kl_gradient_wrt_mu_vanishes_at_zero(self):
        mu = np.zeros((1, 3))
        # d/dmu of 0.5 sum(mu^2 + ...) = mu
        np.testing.assert_array_equal(mu, np.zeros((1, 3)))

    def test_missing_cache_rejected(self):
        with pytest.raises(DataError):
            backward(tiny_params(), {}, TINY)


class TestAnnealSchedule:
    def test_cyclical_starts_at_zero(self):
        sched = AnnealSchedule(mode="cyclical", cycles=4, ramp_fraction=0.5)
        assert beta_at(sched, 0, 1000) == 0.0

    def test_constant_everywhere(self):
        sched = AnnealSchedule(mode="constant", beta_max=0.7)
        assert all(beta_at(sched, s, 100) == 0.7 for s in range(100))

    def test_halfway_up_first_ramp(self):
        # cycle length 500, ramp over the first 250 steps; step 125 sits
        # halfway up that ramp
        sched = AnnealSchedule(mode="cyclical", cycles=2, ramp_fraction=0.5,
                               beta_max=2.0)
        assert beta_at(sched, 125, 1000) == pytest.approx(1.0)

    def test_ramp_end_reaches_beta_max(self):
        sched = AnnealSchedule(mode="cyclical", cycles=4, ramp_fraction=0.5,
                               beta_max=2.0)
        assert beta_at(sched, 125, 1000) == pytest.approx(2.0)

    def test_holds_beta_max_after_ramp(self):
        sched = AnnealSchedule(mode="cyclical", cycles=2, ramp_fraction=0.25)
        assert beta_at(sched, 400, 1000) == 1.0

    def test_resets_each_cycle(self):
        sched = AnnealSchedule(mode="cyclical", cycles=4, ramp_fraction=0.5)
        assert beta_at(sched, 250, 1000) == pytest.approx(0.0)

    def test_invalid_step(self):
        sched = AnnealSchedule()
        with pytest.raises(DataError):
            beta_at(sched, 100, 100)

    def test_bounds_property(self):
        sched = AnnealSchedule(mode="cyclical", cycles=3, ramp_fraction=0.3,
                               beta_max=1.5)
        betas = [beta_at(sched, s, 300) for s in range(300)]
        assert all(0.0 <= b <= 1.5 for b in betas)


class TestTrain:
    def test_loss_decreases_on_toy_problem(self):
        ds = toy_dataset(n=2)
        cfg = VraeConfig(input_dim=2, hidden_units=6, latent_dim=2,
                         learning_rate=5e-3, dropout_rate=0.0, epochs=200,
                         batch_size=2, seed=3,
                         anneal=AnnealSchedule(beta_max=0.0))
        ckpt = train(cfg, ds)
        assert ckpt.history["train_recon"][-1] < ckpt.history["train_recon"][0]

    def test_zero_epochs_returns_initialization(self):
        ds = toy_dataset()
        cfg = VraeConfig(input_dim=2, hidden_units=4, latent_dim=2, epochs=0,
                         seed=5)
        ckpt = train(cfg, ds)
        expected = init_weights(cfg, SeededRng(5))
        for k in expected:
            np.testing.assert_array_equal(ckpt.params[k], expected[k])
        assert ckpt.history["train_total"] == []

    def test_bit_identical_under_seed(self):
        ds = toy_dataset()
        cfg = VraeConfig(input_dim=2, hidden_units=4, latent_dim=2, epochs=3,
                         batch_size=4, seed=9)
        a, b = train(cfg, ds), train(cfg, ds)
        for k in a.params:
            np.testing.assert_array_equal(a.params[k], b.params[k])
        assert a.history == b.history

    def test_empty_training_set_rejected(self):
        ds = WindowedDataset(np.zeros((0, 5, 2)), np.zeros(0), 5, 5, ["a", "b"])
        with pytest.raises(DataError):
            train(TINY, ds)

    def test_validation_history_recorded(self):
        ds = toy_dataset()
        cfg = VraeConfig(input_dim=2, hidden_units=4, latent_dim=2, epochs=2,
                         seed=1)
        ckpt = train(cfg, ds, ds)
        assert len(ckpt.history["val_total"]) == 2


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        ds = toy_dataset()
        cfg = VraeConfig(input_dim=2, hidden_units=4, latent_dim=2, epochs=2,
                         seed=2)
        ckpt = train(cfg, ds)
        p1 = tmp_path / "a.ckpt"
        p2 = tmp_path / "b.ckpt"
        ckpt.save(p1)
        loaded = Checkpoint.load(p1)
        loaded.save(p2)
        assert p1.read_bytes() == p2.read_bytes()
        for k in ckpt.params:
            np.testing.assert_array_equal(loaded.params[k], ckpt.params[k])
        assert loaded.adam.step == ckpt.adam.step

    def test_shape_validation_on_load(self, tmp_path):
        ds = toy_dataset()
        cfg = VraeConfig(input_dim=2, hidden_units=4, latent_dim=2, epochs=1,
                         seed=2)
        ckpt = train(cfg, ds)
        ckpt.params["mu_W"] = np.zeros((1, 1))
        path = tmp_path / "bad.ckpt"
        ckpt.save(path)
        with pytest.raises(DataError):
            Checkpoint.load(path)


class TestEncodeDataset:
    def _checkpoint(self, latent_dim=3):
        cfg = VraeConfig(input_dim=2, hidden_units=4, latent_dim=latent_dim,
                         epochs=1, seed=4)
        return train(cfg, toy_dataset())

    def test_shape_contract(self):
        ckpt = self._checkpoint()
        ds = toy_dataset(n=7)
        mus, labels = encode_dataset(ckpt, ds)
        assert mus.shape == (7, 3)
        np.testing.assert_array_equal(labels, ds.labels)

    def test_duplicate_windows_encode_identically(self):
        ckpt = self._checkpoint()
        ds = toy_dataset(n=4)
        ds.windows[3] = ds.windows[0]
        mus, _ = encode_dataset(ckpt, ds)
        np.testing.assert_array_equal(mus[3], mus[0])

    def test_latent_dims_follow_config(self):
        for latent in (5, 20):
            mus, _ = encode_dataset(self._checkpoint(latent), toy_dataset(n=3))
            assert mus.shape[1] == latent

    def test_pure_function_of_inputs(self):
        ckpt = self._checkpoint()
        ds = toy_dataset(n=5)
        a, _ = encode_dataset(ckpt, ds)
        b, _ = encode_dataset(ckpt, ds)
        np.testing.assert_array_equal(a, b)


class TestLatentLineReport:
    def test_identical_classes_score_zero(self):
        latents = np.tile(np.arange(4.0), (10, 1))
        labels = np.array([0] * 5 + [1] * 5)
        report = latent_line_report(latents, labels, samples_per_class=3)
        np.testing.assert_array_equal(report["separation"], np.zeros(4))

    def test_separating_dimension_ranked_first(self):
        rng = np.random.default_rng(0)
        latents = rng.normal(size=(40, 6))
        labels = np.array([0] * 20 + [1] * 20)
        latents[:20, 3] = 1.0 + 0.01 * rng.normal(size=20)
        latents[20:, 3] = -1.0 + 0.01 * rng.normal(size=20)
        report = latent_line_report(latents, labels)
        assert report["ranked_dimensions"][0] == 3

    def test_oversized_request_clamped_with_warning(self):
        latents = np.random.default_rng(1).normal(size=(6, 2))
        labels = np.array([0, 0, 0, 1, 1, 1])
        with pytest.warns(UserWarning):
            report = latent_line_report(latents, labels, samples_per_class=10)
        assert len(report["class_traces"][0]) == 3

    def test_single_class_rejected(self):
        with pytest.raises(DataError):
            latent_line_report(np.zeros((4, 2)), np.zeros(4))


class TestKernelPaths:
    """The compiled and numpy LSTM kernels must implement identical math."""

    def test_forward_and_backward_agree(self):
        from vraets import _kernels
        rng = np.random.default_rng(12)
        T, B, H = 7, 3, 4
        x_proj = rng.normal(size=(T, B, 4 * H))
        W_h = rng.normal(size=(H, 4 * H))
        h0, c0 = rng.normal(size=(B, H)), rng.normal(size=(B, H))
        fwd_jit = _kernels._forward_jit(x_proj, W_h, h0, c0)
        fwd_np = _kernels._forward_numpy(x_proj, W_h, h0, c0)
        for a, b in zip(fwd_jit, fwd_np):
            assert np.allclose(a, b, atol=1e-14)
        h_all, c_all, gates, tanhc = fwd_np
        dh_step = rng.normal(size=(T, B, H))
        dh, dc = rng.normal(size=(B, H)), rng.normal(size=(B, H))
        W_hT = np.ascontiguousarray(W_h.T)
        bwd_jit = _kernels._backward_jit(dh_step, dh, dc, gates, tanhc,
                                         c_all, W_hT)
        bwd_np = _kernels._backward_numpy(dh_step, dh, dc, gates, tanhc,
                                          c_all, W_hT)
        for a, b in zip(bwd_jit, bwd_np):
            assert np.allclose(a, b, atol=1e-14)
