import math

import numpy as np
import pytest

from motionforge.errors import ShapeMismatchError, UserInputError
from motionforge.evalkit import (
    SSIM_C1,
    SSIM_C2,
    SyntheticSpec,
    blob_centroid,
    export_dataset,
    frame_difference_energy,
    gen_synthetic,
    mean_centroid_drift,
    psnr,
    ssim,
    temporal_consistency,
    video_frame,
)
from motionforge.fieldcore import Frame, advect_frame, motion_strength


class TestGenSynthetic:
    def test_unit_velocity_flow_and_advection(self):
        spec = SyntheticSpec(width=32, height=32, frames=4, blob_sigma=2.0,
                             velocities=((1.0, 0.0),), velocity_range=(0.0, 1.0), seed=5)
        video, fields, _ = gen_synthetic(spec)
        flow = fields.frames[0]
        support = np.any(flow.data != 0, axis=2)
        assert support.any()
        assert np.all(flow.data[support, 0] == 1.0)
        assert np.all(flow.data[support, 1] == 0.0)
        for k in range(3):
            advected = advect_frame(video_frame(video, k), fields.frames[k])
            target = video_frame(video, k + 1)
            assert np.abs(advected.values - target.values).max() < 0.02

    def test_flow_consistency_general(self):
        # frames and flows stay mutually consistent for blob sigma >= 2
        spec = SyntheticSpec(width=48, height=48, frames=6, blobs=2, blob_sigma=2.0,
                             velocity_range=(0.2, 1.0), seed=9)
        video, fields, _ = gen_synthetic(spec)
        for k in range(5):
            advected = advect_frame(video_frame(video, k), fields.frames[k])
            target = video_frame(video, k + 1)
            assert np.abs(advected.values - target.values).max() < 0.02

    def test_zero_velocity(self):
        spec = SyntheticSpec(velocity_range=(0.0, 0.0), seed=2)
        video, fields, strength = gen_synthetic(spec)
        for k in range(1, video.shape[0]):
            assert np.array_equal(video[k], video[0])
        assert strength == motion_strength(fields)
        assert strength == 0.0

    def test_strength_matches_hand_sum(self):
        spec = SyntheticSpec(width=24, height=24, frames=5, velocity_range=(0.3, 0.8), seed=7)
        _, fields, strength = gen_synthetic(spec)
        total, count = 0.0, 0
        for f in fields:
            for y in range(f.height):
                for x in range(f.width):
                    u, v = float(f.data[y, x, 0]), float(f.data[y, x, 1])
                    total += math.hypot(u, v)
                    count += 1
        assert strength == pytest.approx(total / count, rel=1e-9)

    def test_infeasible_spec_rejected(self):
        # a fast blob cannot stay inside a tiny frame for the clip length
        spec = SyntheticSpec(width=12, height=12, frames=10,
                             velocities=((2.0, 0.0),), velocity_range=(0.0, 2.0), seed=0)
        with pytest.raises(UserInputError):
            gen_synthetic(spec)

    def test_determinism(self):
        a = gen_synthetic(SyntheticSpec(seed=33))
        b = gen_synthetic(SyntheticSpec(seed=33))
        assert np.array_equal(a[0], b[0])
        assert a[2] == b[2]


class TestPsnr:
    def test_identical_inputs_cap(self):
        arr = np.random.default_rng(0).random((4, 4)).astype(np.float32)
        assert psnr(arr, arr) == 100.0

    def test_uniform_difference_closed_form(self):
        a = np.zeros((8, 8))
        b = np.full((8, 8), 0.1)
        assert psnr(a, b) == pytest.approx(20.0, abs=1e-9)

    def test_matches_reference_loop(self):
        rng = np.random.default_rng(1)
        a, b = rng.random((6, 5)), rng.random((6, 5))
        total = 0.0
        for y in range(6):
            for x in range(5):
                total += (a[y, x] - b[y, x]) ** 2
        expected = 10 * math.log10(1.0 / (total / 30))
        assert psnr(a, b) == pytest.approx(expected, rel=1e-9)

    def test_symmetry_and_shapes(self):
        rng = np.random.default_rng(2)
        a, b = rng.random((4, 4)), rng.random((4, 4))
        assert psnr(a, b) == psnr(b, a)
        with pytest.raises(ShapeMismatchError):
            psnr(a, rng.random((4, 5)))

    def test_accepts_frames(self):
        f = Frame(np.full((4, 4, 1), 0.5, dtype=np.float32))
        g = Frame(np.full((4, 4, 1), 0.6, dtype=np.float32))
        assert psnr(f, g) == pytest.approx(20.0, abs=1e-4)


def reference_ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Independent direct-loop implementation of the pinned SSIM definition."""
    h, w = a.shape
    scores = []
    for y in range(h - 7):
        for x in range(w - 7):
            wa = a[y : y + 8, x : x + 8].astype(np.float64)
            wb = b[y : y + 8, x : x + 8].astype(np.float64)
            mu_a, mu_b = wa.mean(), wb.mean()
            var_a = (wa ** 2).mean() - mu_a ** 2
            var_b = (wb ** 2).mean() - mu_b ** 2
            cov = (wa * wb).mean() - mu_a * mu_b
            num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
            den = (mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
            scores.append(num / den)
    return float(np.mean(scores))


class TestSsim:
    def test_identical_is_one(self):
        arr = np.random.default_rng(3).random((12, 12, 1)).astype(np.float32)
        assert ssim(Frame(arr), Frame(arr)) == pytest.approx(1.0, abs=1e-12)

    def test_constant_patch_closed_form(self):
        a = Frame(np.zeros((10, 10, 1), dtype=np.float32))
        b = Frame(np.ones((10, 10, 1), dtype=np.float32))
        expected = (SSIM_C1 * SSIM_C2) / ((1.0 + SSIM_C1) * SSIM_C2)  # = C1 / (1 + C1)
        assert expected == pytest.approx(9.999000099990001e-05, rel=1e-12)
        assert ssim(a, b) == pytest.approx(expected, rel=1e-9)

    def test_matches_reference_loop(self):
        rng = np.random.default_rng(4)
        a, b = rng.random((14, 11)), rng.random((14, 11))
        got = ssim(Frame(a[:, :, None].astype(np.float32)), Frame(b[:, :, None].astype(np.float32)))
        want = reference_ssim(
            Frame(a[:, :, None].astype(np.float32)).values[:, :, 0],
            Frame(b[:, :, None].astype(np.float32)).values[:, :, 0],
        )
        assert got == pytest.approx(want, abs=1e-6)

    def test_symmetry(self):
        rng = np.random.default_rng(5)
        a = Frame(rng.random((9, 9, 1)).astype(np.float32))
        b = Frame(rng.random((9, 9, 1)).astype(np.float32))
        assert ssim(a, b) == pytest.approx(ssim(b, a), rel=1e-12)

    def test_transpose_invariance_square(self):
        rng = np.random.default_rng(6)
        a = rng.random((10, 10)).astype(np.float32)
        b = rng.random((10, 10)).astype(np.float32)
        direct = ssim(Frame(a[:, :, None]), Frame(b[:, :, None]))
        transposed = ssim(Frame(a.T[:, :, None]), Frame(b.T[:, :, None]))
        assert direct == pytest.approx(transposed, rel=1e-9)

    def test_small_frame_rejected(self):
        with pytest.raises(UserInputError):
            ssim(Frame(np.zeros((4, 4, 1), dtype=np.float32)),
                 Frame(np.zeros((4, 4, 1), dtype=np.float32)))


class TestTemporalConsistency:
    def test_constant_video(self):
        video = np.full((5, 1, 16, 16), 0.25, dtype=np.float32)
        assert temporal_consistency(video) == 1.0

    def test_antipodal_frames(self):
        base = np.zeros((16, 16), dtype=np.float32)
        base[2:6, 2:6] = 1.0
        # after mean subtraction the complement is the exact negative
        video = np.stack([base, 1.0 - base, base, 1.0 - base])[:, None]
        assert temporal_consistency(video) == pytest.approx(-1.0, abs=1e-9)

    def test_translating_blob_beats_shuffled(self):
        from motionforge.evalkit import gen_synthetic

        video, _, _ = gen_synthetic(
            SyntheticSpec(width=32, height=32, frames=8, blob_sigma=2.0,
                          velocities=((0.5, 0.2),), velocity_range=(0, 1), seed=8)
        )
        ordered = temporal_consistency(video)
        rng = np.random.default_rng(0)
        shuffled = video[rng.permutation(8)]
        assert ordered > temporal_consistency(shuffled)

    def test_bounds(self):
        rng = np.random.default_rng(7)
        video = rng.random((6, 1, 16, 16)).astype(np.float32)
        value = temporal_consistency(video)
        assert -1.0 <= value <= 1.0

    def test_needs_two_frames(self):
        with pytest.raises(UserInputError):
            temporal_consistency(np.zeros((1, 1, 16, 16), dtype=np.float32))


class TestHelpers:
    def test_blob_centroid_exact(self):
        plane = np.zeros((9, 9))
        plane[4, 6] = 2.0
        assert blob_centroid(plane) == (6.0, 4.0)

    def test_mean_centroid_drift_sign(self):
        video, _, _ = gen_synthetic(
            SyntheticSpec(width=32, height=32, frames=6, blob_sigma=2.0,
                          velocities=((0.8, 0.0),), velocity_range=(0, 1), seed=4)
        )
        du, dv = mean_centroid_drift(video)
        assert du == pytest.approx(0.8, abs=0.1)
        assert abs(dv) < 0.1

    def test_frame_difference_energy_monotone_in_speed(self):
        energies = []
        for speed in (0.0, 0.4, 0.8):
            video, _, _ = gen_synthetic(
                SyntheticSpec(width=32, height=32, frames=6, blob_sigma=2.0,
                              velocities=((speed, 0.0),), velocity_range=(0, 1), seed=6)
            )
            energies.append(frame_difference_energy(video))
        assert energies[0] < energies[1] < energies[2]

    def test_export_dataset(self, tmp_path):
        video, fields, strength = gen_synthetic(SyntheticSpec(seed=1))
        export_dataset(tmp_path / "ds", video, fields, strength)
        assert (tmp_path / "ds" / "manifest.json").exists()
        assert len(list((tmp_path / "ds").glob("frame_*.ppm"))) == video.shape[0]
        assert len(list((tmp_path / "ds").glob("flow_*.flo"))) == len(fields)

    def test_metrics_csv(self, tmp_path):
        from motionforge.evalkit import write_metrics_csv

        rows = [{"clip_id": "a", "psnr": 30.0, "ssim": 0.9, "temcons": 0.99}]
        write_metrics_csv(tmp_path / "m.csv", rows)
        lines = (tmp_path / "m.csv").read_text().strip().splitlines()
        assert lines[0] == "clip_id,psnr,ssim,temcons"
        assert lines[1].startswith("a,30.0")

    def test_psnr_permutation_invariance(self):
        rng = np.random.default_rng(9)
        a, b = rng.random((5, 6)), rng.random((5, 6))
        perm = rng.permutation(30)
        pa = a.ravel()[perm].reshape(5, 6)
        pb = b.ravel()[perm].reshape(5, 6)
        assert psnr(a, b) == pytest.approx(psnr(pa, pb), rel=1e-12)
