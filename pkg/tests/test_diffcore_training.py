import numpy as np
import pytest
import torch

from motionforge.diffcore import (
    DenoiserWeights,
    default_arch,
    load_checkpoint,
    make_schedule,
    save_checkpoint,
    train,
    training_loss,
)
from motionforge.diffcore.checkpoint import arch_hash, checkpoint_file_hash
from motionforge.diffcore.training import TrainConfig, make_blob_dataset
from motionforge.errors import FormatError, StateError, UserInputError

TINY_ARCH = default_arch(img_h=8, img_w=8, base=8, mid=8, coarse=8, embed_dim=8)


def tiny_dataset(n=3, seed=0):
    return make_blob_dataset(n, seed=seed, width=8, height=8, frames=3,
                             velocity_range=(0.0, 0.15), blob_sigma=0.8)


class EchoDenoiser(torch.nn.Module):
    """Returns the true noise: training loss must be exactly zero."""

    def __init__(self, eps):
        super().__init__()
        self.eps = eps
        self.dummy = torch.nn.Parameter(torch.zeros(1))

    def forward(self, z, t, field, strength, ref):
        return self.eps.to(z.dtype).expand_as(z).clone()


class ZeroDenoiser(torch.nn.Module):
    def __init__(self):
        super().__init__()
        self.dummy = torch.nn.Parameter(torch.zeros(1))

    def forward(self, z, t, field, strength, ref):
        return torch.zeros_like(z)


class MicroDenoiser(torch.nn.Module):
    """Five scalar parameters; float64 for clean finite differences."""

    def __init__(self):
        super().__init__()
        self.w = torch.nn.Parameter(torch.tensor(
            [0.3, -0.2, 0.15, 0.05, -0.1], dtype=torch.float64))

    def forward(self, z, t, field, strength, ref):
        t_norm = t.to(z.dtype)[:, None, None, None, None] / 50.0
        s = strength.to(z.dtype)[:, None, None, None, None]
        mean_field = field.mean(dim=(1, 2, 3))[:, None, None, None, None]
        return (
            self.w[0] * z
            + self.w[1] * t_norm
            + self.w[2] * ref[:, None]
            + self.w[3] * s
            + self.w[4] * torch.tanh(mean_field + z)
        )


def micro_batch(dtype=torch.float64):
    rng = np.random.default_rng(0)
    batch = []
    for i in range(3):
        z0 = rng.standard_normal((2, 1, 4, 4))
        eps = rng.standard_normal((2, 1, 4, 4))
        cond = {
            "field": rng.standard_normal((2, 4, 4)) * 0.3,
            "strength": float(rng.uniform(0, 0.3)),
            "ref": rng.random((1, 4, 4)),
        }
        batch.append((z0, int(rng.integers(1, 51)), eps, cond))
    return batch


class TestTrainingLoss:
    def setup_method(self):
        self.schedule = make_schedule(50, 2e-3, 0.25)

    def test_exact_denoiser_gives_zero(self):
        rng = np.random.default_rng(1)
        eps = rng.standard_normal((2, 1, 4, 4)).astype(np.float32)
        model = EchoDenoiser(torch.from_numpy(eps))
        batch = [(
            rng.standard_normal((2, 1, 4, 4)).astype(np.float32), 9, eps,
            {"field": np.zeros((2, 4, 4), np.float32), "strength": 0.1,
             "ref": np.zeros((1, 4, 4), np.float32)},
        )]
        assert training_loss(model, batch, self.schedule).item() == pytest.approx(0.0, abs=1e-10)

    def test_zero_denoiser_gives_mean_squared_norm(self):
        rng = np.random.default_rng(2)
        batch = []
        norms = []
        for _ in range(4):
            eps = rng.standard_normal((2, 1, 4, 4))
            eps /= np.linalg.norm(eps)  # unit norm: loss contribution exactly 1
            norms.append(np.sum(eps ** 2))
            batch.append((
                rng.standard_normal((2, 1, 4, 4)), 5, eps,
                {"field": np.zeros((2, 4, 4)), "strength": 0.0, "ref": np.zeros((1, 4, 4))},
            ))
        loss = training_loss(ZeroDenoiser().double(), batch, self.schedule).item()
        assert loss == pytest.approx(np.mean(norms), rel=1e-9)
        assert loss == pytest.approx(1.0, rel=1e-9)

    def test_gradient_matches_central_differences(self):
        model = MicroDenoiser()
        batch = micro_batch()
        loss = training_loss(model, batch, self.schedule)
        loss.backward()
        autograd = model.w.grad.detach().numpy().copy()
        step = 1e-4
        for i in range(5):
            fd_model = MicroDenoiser()
            with torch.no_grad():
                fd_model.w[i] += step
            up = training_loss(fd_model, batch, self.schedule).item()
            with torch.no_grad():
                fd_model.w[i] -= 2 * step
            down = training_loss(fd_model, batch, self.schedule).item()
            fd = (up - down) / (2 * step)
            assert autograd[i] == pytest.approx(fd, rel=1e-3)

    def test_empty_batch_rejected(self):
        with pytest.raises(UserInputError):
            training_loss(ZeroDenoiser(), [], self.schedule)

    def test_shape_mismatch_rejected(self):
        rng = np.random.default_rng(3)
        batch = [(
            rng.standard_normal((2, 1, 4, 4)), 5, rng.standard_normal((2, 1, 4, 5)),
            {"field": np.zeros((2, 4, 4)), "strength": 0.0, "ref": np.zeros((1, 4, 4))},
        )]
        with pytest.raises(UserInputError):
            training_loss(ZeroDenoiser(), batch, self.schedule)


class TestTrain:
    def test_loss_decreases_under_smoothing(self):
        dataset = tiny_dataset(1, seed=4)
        _, history = train(dataset, TrainConfig(steps=500, batch_size=4, seed=1,
                                                arch=TINY_ARCH))
        losses = np.array([v for _, v in history])
        window = 50
        smoothed = np.convolve(losses, np.ones(window) / window, mode="valid")
        # monotone under the smoothing window: each half improves on the last
        q = len(smoothed) // 4
        quarters = [smoothed[i * q : (i + 1) * q].mean() for i in range(4)]
        assert quarters[0] > quarters[1] > quarters[2] > quarters[3]
        assert smoothed[-1] < smoothed[0]

    def test_same_seed_identical_weights(self):
        dataset = tiny_dataset(2, seed=5)
        cfg = TrainConfig(steps=25, batch_size=4, seed=7, arch=TINY_ARCH)
        w1, _ = train(dataset, cfg)
        w2, _ = train(dataset, cfg)
        assert set(w1.state) == set(w2.state)
        for name in w1.state:
            assert np.array_equal(w1.state[name], w2.state[name]), name

    def test_zero_learning_rate_keeps_init(self):
        from motionforge.diffcore import build_model

        dataset = tiny_dataset(2, seed=6)
        cfg = TrainConfig(steps=20, batch_size=4, seed=3, learning_rate=0.0, arch=TINY_ARCH)
        weights, _ = train(dataset, cfg)
        init = build_model(TINY_ARCH, init_seed=3)
        for name, tensor in init.state_dict().items():
            assert np.array_equal(weights.state[name], tensor.numpy()), name

    def test_empty_dataset_rejected(self):
        with pytest.raises(UserInputError):
            train([], TrainConfig(steps=1))

    def test_divergence_aborts_with_diagnostic(self):
        dataset = tiny_dataset(1, seed=8)
        cfg = TrainConfig(steps=400, batch_size=4, seed=2, learning_rate=1e12,
                          arch=TINY_ARCH)
        with pytest.raises(RuntimeError, match="diverged"):
            train(dataset, cfg)


class TestCheckpoint:
    def make_weights(self):
        from motionforge.diffcore import build_model

        model = build_model(TINY_ARCH, init_seed=5)
        return DenoiserWeights.from_model(model, seed=5, trained=True,
                                          extra={"note": 1})

    def test_round_trip_lossless(self, tmp_path):
        weights = self.make_weights()
        path = tmp_path / "w.ckpt"
        save_checkpoint(weights, path)
        loaded = load_checkpoint(path)
        assert loaded.arch == weights.arch
        assert loaded.seed == weights.seed
        assert loaded.trained == weights.trained
        assert set(loaded.state) == set(weights.state)
        for name in weights.state:
            assert np.array_equal(loaded.state[name], weights.state[name])

    def test_save_is_hash_stable(self, tmp_path):
        weights = self.make_weights()
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(weights, p1)
        save_checkpoint(load_checkpoint(p1), p2)
        assert checkpoint_file_hash(p1) == checkpoint_file_hash(p2)

    def test_arch_hash_mismatch_rejected(self, tmp_path):
        weights = self.make_weights()
        path = tmp_path / "w.ckpt"
        save_checkpoint(weights, path)
        raw = bytearray(path.read_bytes())
        # corrupt one byte of the embedded meta JSON (after the 52-byte header)
        meta_pos = 52 + 10
        raw[meta_pos] = raw[meta_pos] ^ 0x01
        path.write_bytes(bytes(raw))
        with pytest.raises((StateError, FormatError)):
            load_checkpoint(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "w.ckpt"
        path.write_bytes(b"NOPE" + b"\0" * 60)
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_truncated_payload_rejected(self, tmp_path):
        weights = self.make_weights()
        path = tmp_path / "w.ckpt"
        save_checkpoint(weights, path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) - 8])
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_to_model_round_trip(self):
        weights = self.make_weights()
        model = weights.to_model()
        again = DenoiserWeights.from_model(model, seed=weights.seed)
        for name in weights.state:
            assert np.array_equal(again.state[name], weights.state[name])

    def test_arch_hash_sensitivity(self):
        a = arch_hash(TINY_ARCH)
        changed = dict(TINY_ARCH)
        changed["base"] = 999
        assert arch_hash(changed) != a
