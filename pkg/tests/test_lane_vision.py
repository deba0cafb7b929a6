import colorsys

import numpy as np
import pytest
from scipy import ndimage

from core.imageio import encode_ppm, read_pgm, read_ppm, write_pgm
from core.lane_vision import (
    RED,
    CameraModel,
    LanePipeline,
    apply_homography,
    birdeye,
    filter_components,
    fit_lane,
    fit_lane_points,
    hsv_mask,
    morph_open_close,
    render_view,
    solve_homography,
)
from core.schemas import CameraConfig, LaneVisionConfig, Pose2D, TrackConfig
from core.track import Track
from core.vehicle import inverse_transform_points

RED_LO = (340.0, 0.5, 0.4)
RED_HI = (20.0, 1.0, 1.0)


def _straight_track() -> Track:
    return Track(TrackConfig(control_points=[(0.0, 0.0), (10.0, 0.0)]))


class TestHomography:
    def test_maps_correspondences(self):
        config = CameraConfig()
        h = solve_homography(config.ground_points, config.image_points)
        mapped = apply_homography(h, np.asarray(config.ground_points))
        np.testing.assert_allclose(mapped, config.image_points, atol=1e-6)

    def test_needs_four_pairs(self):
        square = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
        with pytest.raises(ValueError):
            solve_homography(square[:3], square[:3])
        with pytest.raises(ValueError):
            solve_homography(square, square[:3])

    def test_camera_sees_ahead_only(self):
        camera = CameraModel(CameraConfig())
        ground, sees_ground = camera.pixel_ground
        assert sees_ground.all()
        assert ground[..., 0].min() > 0.3


class TestHsvMask:
    def test_palette(self):
        palette = {
            (255, 0, 0): 1,
            (200, 30, 30): 1,
            (255, 0, 60): 1,
            (128, 128, 128): 0,
            (0, 0, 0): 0,
            (255, 170, 0): 0,
            (100, 0, 0): 0,
            (255, 128, 128): 0,
            (0, 255, 0): 0,
        }
        image = np.array([list(palette)], dtype=np.uint8)
        mask = hsv_mask(image, RED_LO, RED_HI)
        assert mask[0].tolist() == list(palette.values())

    def test_non_wrapping_range(self):
        image = np.array([[[0, 255, 0], [255, 0, 0]]], dtype=np.uint8)
        mask = hsv_mask(image, (100.0, 0.5, 0.5), (140.0, 1.0, 1.0))
        assert mask.tolist() == [[1, 0]]

    @pytest.mark.parametrize(
        "lo, hi", [(RED_LO, RED_HI), ((90.0, 0.2, 0.3), (200.0, 0.9, 0.95))]
    )
    def test_matches_per_pixel_conversion(self, rng, lo, hi):
        image = rng.integers(0, 256, (40, 40, 3), dtype=np.uint8)
        mask = hsv_mask(image, lo, hi)

        compared = 0
        for row, col in np.ndindex(image.shape[:2]):
            r, g, b = (int(c) / 255.0 for c in image[row, col])
            h, s, v = colorsys.rgb_to_hsv(r, g, b)
            hue = h * 360.0
            bounds = zip((hue, s, v) * 2, lo + hi, strict=True)
            if min(abs(value - bound) for value, bound in bounds) < 1e-6:
                continue
            if lo[0] <= hi[0]:
                in_hue = lo[0] <= hue <= hi[0]
            else:
                in_hue = hue >= lo[0] or hue <= hi[0]
            inside = in_hue and lo[1] <= s <= hi[1] and lo[2] <= v <= hi[2]
            assert mask[row, col] == int(inside), (row, col)
            compared += 1
        assert compared > 1400


class TestMorphology:
    def test_removes_speckle_keeps_block(self):
        mask = np.zeros((30, 30), dtype=np.uint8)
        mask[2, 2] = 1
        mask[10:20, 10:20] = 1
        cleaned = morph_open_close(mask, 3)
        assert cleaned[2, 2] == 0
        np.testing.assert_array_equal(cleaned[10:20, 10:20], 1)
        assert cleaned.sum() == 100

    def test_matches_min_max_filters(self, rng):
        for _ in range(20):
            mask = (rng.random((25, 25)) < 0.5).astype(np.uint8)
            opened = ndimage.maximum_filter(
                ndimage.minimum_filter(mask, 3, mode="constant", cval=0),
                3,
                mode="constant",
                cval=0,
            )
            expected = ndimage.minimum_filter(
                ndimage.maximum_filter(opened, 3, mode="constant", cval=0),
                3,
                mode="constant",
                cval=0,
            )
            np.testing.assert_array_equal(morph_open_close(mask, 3), expected)

    def test_rejects_even_kernel(self):
        with pytest.raises(ValueError):
            morph_open_close(np.zeros((5, 5)), 4)


class TestComponents:
    def test_empty(self):
        assert not filter_components(np.zeros((10, 10)), 1, 100, 1.1).any()

    def test_area_and_elongation(self):
        mask = np.zeros((40, 40), dtype=np.uint8)
        mask[1:3, 1:21] = 1  # thin line
        mask[10:15, 10:15] = 1  # square
        mask[30, 30:33] = 1  # speck
        kept = filter_components(mask, 10, 1000, 1.1)
        assert kept[1:3, 1:21].all()
        assert not kept[10:15, 10:15].any()
        assert not kept[30, 30:33].any()


class TestBirdeye:
    def test_identity(self, rng):
        image = rng.integers(0, 256, size=(12, 16, 3), dtype=np.uint8)
        np.testing.assert_array_equal(birdeye(image, np.eye(3)), image)

    def test_shift(self):
        image = np.zeros((5, 5), dtype=np.uint8)
        image[2, 1] = 9
        shift = np.array([[1.0, 0.0, 2.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        warped = birdeye(image, shift)
        assert warped[2, 3] == 9
        assert warped[:, :2].sum() == 0


class TestFit:
    lookahead = (0.9, 0.5)

    def test_exact_quadratic(self):
        forward = np.linspace(0.4, 3.0, 100)
        lateral = 0.1 * forward**2 - 0.05 * forward + 0.2
        target = fit_lane_points(forward, lateral, 0.0, self.lookahead)
        assert target.valid
        np.testing.assert_allclose(target.poly, (0.1, -0.05, 0.2), atol=1e-6)
        assert target.point[0] == pytest.approx(0.9)
        expected = 0.1 * 0.81 - 0.05 * 0.9 + 0.2
        assert target.point[1] == pytest.approx(expected, abs=1e-6)

    def test_lookahead_grows_with_speed(self):
        forward = np.linspace(0.4, 3.0, 100)
        target = fit_lane_points(forward, np.zeros(100), 0.8, self.lookahead)
        assert target.lookahead == pytest.approx(1.3)

    def test_too_few_pixels(self):
        target = fit_lane_points(np.arange(5.0), np.zeros(5), 0.0, self.lookahead)
        assert not target.valid
        assert target.n_pixels == 5

    def test_single_row_falls_back(self):
        forward = np.full(40, 1.0)
        target = fit_lane_points(forward, np.full(40, 0.3), 0.0, self.lookahead)
        assert target.valid
        assert target.poly[0] == 0.0
        assert target.residual_rms == pytest.approx(0.0, abs=1e-12)

    def test_noisy_fit_rejected(self, rng):
        forward = np.linspace(0.4, 3.0, 100)
        lateral = rng.choice([-1.0, 1.0], size=100)
        target = fit_lane_points(forward, lateral, 0.0, self.lookahead)
        assert not target.valid

    def test_straight_birdeye_column(self):
        mask = np.zeros((160, 160), dtype=np.uint8)
        mask[:, 79:81] = 1
        target = fit_lane(mask, 0.02, 0.0, self.lookahead)
        assert target.valid
        assert target.point[1] == pytest.approx(0.0, abs=1e-9)


class TestRenderer:
    def test_centred_view_is_symmetric(self):
        camera = CameraModel(CameraConfig())
        image = render_view(Pose2D(x=2.0), _straight_track(), camera)
        red = np.all(image == RED, axis=-1)
        for row in range(0, 120, 10):
            cols = np.flatnonzero(red[row])
            assert cols.size > 0
            assert cols.mean() == pytest.approx(79.5, abs=0.5)

    def test_offset_line_lands_on_projection(self):
        camera = CameraModel(CameraConfig())
        image = render_view(Pose2D(x=2.0, y=-0.2), _straight_track(), camera)
        red = np.flatnonzero(np.all(image[119] == RED, axis=-1))
        ground_row = camera.pixel_ground[0][119, 80, 0]
        expected = camera.project(np.array([ground_row, 0.2]))[0]
        assert red.mean() == pytest.approx(expected, abs=1.0)

    def test_lighting_noise_is_seeded(self):
        camera = CameraModel(CameraConfig())
        track = _straight_track()
        first = render_view(
            Pose2D(x=2.0), track, camera, 0.3, rng=np.random.default_rng(4)
        )
        second = render_view(
            Pose2D(x=2.0), track, camera, 0.3, rng=np.random.default_rng(4)
        )
        np.testing.assert_array_equal(first, second)
        with pytest.raises(ValueError):
            render_view(Pose2D(x=2.0), track, camera, 0.3)


class TestPipeline:
    def _centreline_lateral(
        self, track: Track, pose: Pose2D, forward: float
    ) -> float:
        local = inverse_transform_points(pose, track.samples)
        near = np.abs(local[:, 1]) < 1.5
        index = np.argmin(np.abs(local[near, 0] - forward))
        return float(local[near][index, 1])

    def test_recovers_reference_track(self, reference_scenario, rng):
        track = Track(reference_scenario.track)
        pipeline = LanePipeline(reference_scenario.vision, reference_scenario.camera)
        errors = []
        for s in np.linspace(3.0, 37.0, 50):
            lateral = rng.choice([-0.5, 0.5]) + rng.uniform(-0.1, 0.1)
            base = track.pose_at(float(s), float(lateral))
            heading = base.theta + rng.uniform(-0.05, 0.05)
            pose = Pose2D(x=base.x, y=base.y, theta=heading)
            image = render_view(pose, track, pipeline.camera)

            target = pipeline.detect(image, 0.0)
            assert target.valid
            truth = self._centreline_lateral(track, pose, target.point[0])
            errors.append(abs(target.point[1] - truth))
        assert max(errors) < 2 * reference_scenario.vision.meters_per_pixel

    def test_deterministic(self, reference_scenario):
        track = Track(reference_scenario.track)
        pipeline = LanePipeline(reference_scenario.vision, reference_scenario.camera)
        image = render_view(track.pose_at(5.0, -0.5), track, pipeline.camera)
        assert pipeline.detect(image, 0.5) == pipeline.detect(image, 0.5)

    def test_blank_image_is_invalid(self):
        pipeline = LanePipeline(LaneVisionConfig(), CameraConfig())
        image = np.full((120, 160, 3), 128, dtype=np.uint8)
        assert not pipeline.detect(image, 0.0).valid


class TestImageFiles:
    def test_ppm_bytes(self, rng):
        image = rng.integers(0, 256, size=(4, 5, 3), dtype=np.uint8)
        data = encode_ppm(image)
        assert data.startswith(b"P6")
        np.testing.assert_array_equal(read_ppm(data), image)

    def test_mask_is_stretched(self, tmp_path):
        mask = np.array([[0, 1], [1, 0]], dtype=np.uint8)
        path = write_pgm(tmp_path / "mask.pgm", mask)
        assert read_pgm(path).tolist() == [[0, 255], [255, 0]]
