import numpy as np
import pytest
from oracles import dense_poisson as dense_poisson_oracle
from oracles import gradient_energy as energy_oracle

from istdkit.dataset_io import LabeledSample
from istdkit.patch_match import MatchConfig, extract_patches, ssim
from istdkit.poisson_fusion import (
    PoissonConvergenceError,
    fuse_dataset,
    fusion_energy,
    guidance_field,
    seamless_clone,
    solve_poisson,
)


def random_rect(rng, min_side=3, max_side=16):
    h = int(rng.integers(min_side, max_side + 1))
    w = int(rng.integers(min_side, max_side + 1))
    rhs = rng.uniform(-50, 50, (h - 2, w - 2))
    boundary = rng.uniform(0, 255, (h, w))
    return rhs, boundary


# ---------------------------------------------------------------- solver

class TestSolvePoisson:
    def test_zero_rhs_constant_boundary_is_constant(self):
        boundary = np.full((7, 9), 42.0)
        u = solve_poisson(np.zeros((5, 7)), boundary, tolerance=1e-10)
        assert np.max(np.abs(u - 42.0)) <= 1e-6

    def test_planar_boundary_reproduced_exactly(self):
        ys, xs = np.mgrid[0:8, 0:11].astype(float)
        plane = xs + 2.0 * ys
        u = solve_poisson(np.zeros((6, 9)), plane, tolerance=1e-10)
        assert np.max(np.abs(u - plane)) <= 1e-6

    def test_random_8x8_matches_dense_oracle(self):
        rng = np.random.default_rng(71)
        rhs = rng.uniform(-20, 20, (6, 6))
        boundary = rng.uniform(0, 255, (8, 8))
        u = solve_poisson(rhs, boundary, tolerance=1e-10)
        oracle = dense_poisson_oracle(rhs, boundary)
        assert np.max(np.abs(u - oracle)) <= 1e-4

    def test_random_rectangles_match_dense_oracle(self):
        rng = np.random.default_rng(72)
        for _ in range(30):
            rhs, boundary = random_rect(rng)
            u = solve_poisson(rhs, boundary, tolerance=1e-10)
            oracle = dense_poisson_oracle(rhs, boundary)
            assert np.max(np.abs(u - oracle)) <= 1e-4

    def test_border_values_pass_through(self):
        rng = np.random.default_rng(73)
        rhs, boundary = random_rect(rng)
        u = solve_poisson(rhs, boundary, tolerance=1e-8)
        assert np.array_equal(u[0, :], boundary[0, :])
        assert np.array_equal(u[-1, :], boundary[-1, :])
        assert np.array_equal(u[:, 0], boundary[:, 0])
        assert np.array_equal(u[:, -1], boundary[:, -1])

    def test_stencil_residual_meets_tolerance(self):
        rng = np.random.default_rng(74)
        rhs = rng.uniform(-30, 30, (10, 12))
        boundary = rng.uniform(0, 255, (12, 14))
        tol = 1e-7
        u = solve_poisson(rhs, boundary, tolerance=tol)
        lap = u[:-2, 1:-1] + u[2:, 1:-1] + u[1:-1, :-2] + u[1:-1, 2:] - 4.0 * u[1:-1, 1:-1]
        rel = np.linalg.norm(lap - rhs) / np.linalg.norm(rhs)
        assert rel <= tol

    def test_converges_on_larger_grids_within_iteration_budget(self):
        rng = np.random.default_rng(75)
        for side in (32, 48, 64):
            rhs = rng.uniform(-10, 10, (side - 2, side - 2))
            boundary = rng.uniform(0, 255, (side, side))
            n = (side - 2) ** 2
            u = solve_poisson(rhs, boundary, tolerance=1e-5, max_iters=10 * n)
            lap = u[:-2, 1:-1] + u[2:, 1:-1] + u[1:-1, :-2] + u[1:-1, 2:] - 4.0 * u[1:-1, 1:-1]
            assert np.linalg.norm(lap - rhs) / np.linalg.norm(rhs) <= 1e-5

    def test_too_small_rectangle_rejected(self):
        with pytest.raises(ValueError):
            solve_poisson(np.zeros((0, 1)), np.zeros((2, 3)), tolerance=1e-6)

    def test_bad_tolerance_rejected(self):
        with pytest.raises(ValueError):
            solve_poisson(np.zeros((2, 2)), np.zeros((4, 4)), tolerance=0.0)

    def test_non_convergence_error_carries_residual(self):
        rng = np.random.default_rng(76)
        rhs = rng.uniform(-30, 30, (14, 14))
        boundary = rng.uniform(0, 255, (16, 16))
        with pytest.raises(PoissonConvergenceError) as err:
            solve_poisson(rhs, boundary, tolerance=1e-12, max_iters=2)
        assert err.value.residual > 0.0

    def test_deterministic_output(self):
        rng = np.random.default_rng(77)
        rhs, boundary = random_rect(rng)
        a = solve_poisson(rhs, boundary, tolerance=1e-8)
        b = solve_poisson(rhs, boundary, tolerance=1e-8)
        assert np.array_equal(a, b)


# ---------------------------------------------------------------- cloning

def make_patch_from(img, mask_region, sample_id="donor", padding=1):
    mask = np.zeros(img.shape, bool)
    mask[mask_region] = True
    sample = LabeledSample(sample_id, img, mask)
    (patch,) = extract_patches(sample, padding=padding)
    return patch


class TestSeamlessClone:
    def test_constant_patch_into_constant_background(self):
        background = np.full((20, 20), 80.0)
        patch_img = np.full((9, 9), 200.0)
        patch = make_patch_from(patch_img, (slice(3, 6), slice(3, 6)))
        result = seamless_clone(background, patch, (5, 5), tolerance=1e-8)
        rect = result.image[5 : 5 + patch.image.shape[0], 5 : 5 + patch.image.shape[1]]
        assert np.max(np.abs(rect - 80.0)) <= 1e-6

    def test_patch_identical_to_region_is_noop(self):
        rng = np.random.default_rng(81)
        background = rng.uniform(10, 240, (24, 24))
        x, y = 6, 8
        region = background[y : y + 9, x : x + 9]
        # padding 4 grows the 2x2 centre blob's bbox to the full 9x9 region
        patch = make_patch_from(region.copy(), (slice(4, 6), slice(4, 6)), padding=4)
        assert patch.image.shape == (9, 9)
        result = seamless_clone(background, patch, (x, y), tolerance=1e-10)
        assert np.max(np.abs(result.image - background)) <= 1e-4

    def test_background_preserved_outside_rectangle(self):
        rng = np.random.default_rng(82)
        background = rng.uniform(0, 255, (30, 28))
        patch = make_patch_from(
            rng.uniform(0, 255, (7, 8)), (slice(2, 5), slice(3, 6))
        )
        result = seamless_clone(background, patch, (10, 12), tolerance=1e-6)
        ph, pw = patch.image.shape
        inside = np.zeros((30, 28), bool)
        inside[12 : 12 + ph, 10 : 10 + pw] = True
        assert np.array_equal(result.image[~inside], background[~inside])

    def test_mask_translated_and_count_preserved(self):
        rng = np.random.default_rng(83)
        background = rng.uniform(0, 255, (26, 26))
        patch = make_patch_from(rng.uniform(0, 255, (8, 8)), (slice(3, 6), slice(2, 7)))
        result = seamless_clone(background, patch, (9, 4), tolerance=1e-6)
        ph, pw = patch.image.shape
        assert int(result.mask.sum()) == int(patch.mask.sum())
        assert np.array_equal(result.mask[4 : 4 + ph, 9 : 9 + pw], patch.mask)
        outside = result.mask.copy()
        outside[4 : 4 + ph, 9 : 9 + pw] = False
        assert not outside.any()

    def test_out_of_bounds_rejected(self):
        rng = np.random.default_rng(84)
        background = rng.uniform(0, 255, (12, 12))
        patch = make_patch_from(rng.uniform(0, 255, (6, 6)), (slice(2, 4), slice(2, 4)))
        assert patch.image.shape == (4, 4)
        with pytest.raises(ValueError):
            seamless_clone(background, patch, (10, 10), tolerance=1e-6)
        with pytest.raises(ValueError):
            seamless_clone(background, patch, (-1, 0), tolerance=1e-6)

    def test_result_clamped_to_intensity_range(self):
        background = np.zeros((20, 20))
        background[:, 10:] = 255.0
        rng = np.random.default_rng(85)
        patch = make_patch_from(rng.uniform(0, 255, (9, 9)), (slice(3, 6), slice(3, 6)))
        result = seamless_clone(background, patch, (6, 6), tolerance=1e-6)
        assert result.image.min() >= 0.0
        assert result.image.max() <= 255.0

    def test_energy_not_worse_than_alternatives(self):
        rng = np.random.default_rng(86)
        for _ in range(10):
            background = rng.uniform(0, 255, (24, 24))
            patch = make_patch_from(
                rng.uniform(0, 255, (9, 10)), (slice(3, 6), slice(4, 7)),
                sample_id=f"d{rng.integers(100)}",
            )
            ph, pw = patch.image.shape
            x, y = int(rng.integers(0, 24 - pw)), int(rng.integers(0, 24 - ph))
            field = guidance_field(patch.image)
            region = background[y : y + ph, x : x + pw]

            solved = solve_poisson(
                _lap_interior(patch.image), region, tolerance=1e-10
            )
            e_solved = energy_oracle(solved, field.gx, field.gy)

            copy_paste = region.copy()
            copy_paste[1:-1, 1:-1] = patch.image[1:-1, 1:-1]
            e_copy = energy_oracle(copy_paste, field.gx, field.gy)
            e_background = energy_oracle(region, field.gx, field.gy)

            assert e_solved <= e_copy
            assert e_solved <= e_background

    def test_fusion_energy_matches_scalar_oracle(self):
        rng = np.random.default_rng(87)
        values = rng.uniform(0, 255, (7, 9))
        field = guidance_field(rng.uniform(0, 255, (7, 9)))
        assert fusion_energy(values, field) == pytest.approx(
            energy_oracle(values, field.gx, field.gy), rel=1e-12
        )


def _lap_interior(patch_image):
    p = patch_image
    return (
        p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:] - 4.0 * p[1:-1, 1:-1]
    )


# ---------------------------------------------------------------- driver

def build_backgrounds(rng, n, shape=(40, 40)):
    out = []
    for i in range(n):
        img = rng.uniform(20, 230, shape)
        out.append(LabeledSample(f"bg{i}", img, np.zeros(shape, bool)))
    return out


def build_donor_patch(rng, sample_id="donor"):
    img = rng.uniform(20, 230, (30, 30))
    mask = np.zeros((30, 30), bool)
    mask[12:16, 12:15] = True
    sample = LabeledSample(sample_id, img, mask)
    (patch,) = extract_patches(sample, padding=2)
    return patch


class TestFuseDataset:
    def test_single_pairing_takes_argmax_window(self):
        rng = np.random.default_rng(91)
        (background,) = build_backgrounds(rng, 1)
        patch = build_donor_patch(rng)
        config = MatchConfig(k=1, min_separation=None, stride=2)
        results = fuse_dataset([background], [patch], config, seed=7)
        assert len(results) == 1
        r = results[0]
        # recompute the best window directly
        ph, pw = patch.image.shape
        best = max(
            (
                (ssim(background.image[yy : yy + ph, xx : xx + pw], patch.image), xx, yy)
                for yy in range(0, 40 - ph + 1, 2)
                for xx in range(0, 40 - pw + 1, 2)
            ),
        )
        assert (r.provenance["paste_x"], r.provenance["paste_y"]) == (best[1], best[2])
        assert r.provenance["ssim_score"] == best[0]

    def test_top3_results_ordered_and_separated(self):
        rng = np.random.default_rng(92)
        (background,) = build_backgrounds(rng, 1, shape=(64, 64))
        patch = build_donor_patch(rng)
        config = MatchConfig(k=3, min_separation=10.0, stride=2)
        results = fuse_dataset([background], [patch], config, seed=3)
        assert len(results) == 3
        scores = [r.provenance["ssim_score"] for r in results]
        assert scores == sorted(scores, reverse=True)
        positions = [(r.provenance["paste_x"], r.provenance["paste_y"]) for r in results]
        for i, a in enumerate(positions):
            for b in positions[i + 1 :]:
                assert (a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 >= 100.0
        ranks = [r.provenance["k_rank"] for r in results]
        assert ranks == [1, 2, 3]

    def test_same_seed_reproduces_images(self):
        rng = np.random.default_rng(93)
        backgrounds = build_backgrounds(rng, 3)
        patch = build_donor_patch(rng)
        config = MatchConfig(k=2, min_separation=8.0, stride=4)
        first = fuse_dataset(backgrounds, [patch], config, seed=11)
        second = fuse_dataset(backgrounds, [patch], config, seed=11)
        assert len(first) == len(second)
        for a, b in zip(first, second):
            assert np.array_equal(a.image, b.image)
            assert np.array_equal(a.mask, b.mask)
            assert a.provenance == b.provenance

    def test_fully_masked_background_yields_no_results(self):
        rng = np.random.default_rng(94)
        img = rng.uniform(0, 255, (30, 30))
        blocked = LabeledSample("blocked", img, np.ones((30, 30), bool))
        patch = build_donor_patch(rng)
        config = MatchConfig(k=1, min_separation=5.0, stride=2)
        assert fuse_dataset([blocked], [patch], config, seed=1) == []

    def test_empty_inputs_rejected(self):
        rng = np.random.default_rng(95)
        patch = build_donor_patch(rng)
        config = MatchConfig(k=1, min_separation=5.0)
        with pytest.raises(ValueError):
            fuse_dataset([], [patch], config, seed=0)
        with pytest.raises(ValueError):
            fuse_dataset(build_backgrounds(rng, 1), [], config, seed=0)
