"""
Lane detection pipeline and the synthetic camera that feeds it.

The pipeline only looks for the red centre line: HSV threshold, morphological
open/close, connected-component filtering, bird's-eye warp and a quadratic
least-squares fit whose value at a speed-dependent lookahead becomes the lane
target. The renderer draws the ground plane seen by a fixed camera whose
homography is solved from four ground/image correspondences.
"""

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from matplotlib.colors import rgb_to_hsv
from scipy import ndimage

from core.schemas import CameraConfig, LaneTarget, LaneVisionConfig, Pose2D
from core.track import Track
from core.vehicle import transform_points

logger = logging.getLogger(__name__)

RED = (255, 0, 0)
BLACK = (0, 0, 0)
FLOOR = (128, 128, 128)

_DET_EPS = 1e-12


def solve_homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """
    Direct linear transform from four (or more) point correspondences.

    Args:
        src: Source points of shape ``(n, 2)``.
        dst: Destination points of shape ``(n, 2)``.

    Returns:
        The 3x3 matrix ``H`` with ``dst ~ H @ src`` normalised to ``H[2, 2] = 1``.

    Raises:
        ValueError: Fewer than four points or a degenerate configuration.
    """
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    if len(src) < 4 or len(src) != len(dst):
        raise ValueError("a homography needs at least four matching point pairs")
    rows = []
    for (x, y), (u, v) in zip(src, dst, strict=True):
        rows.append([-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u])
        rows.append([0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v])
    _, _, vt = np.linalg.svd(np.asarray(rows))
    h = vt[-1].reshape(3, 3)
    if abs(h[2, 2]) < _DET_EPS or abs(np.linalg.det(h)) < _DET_EPS:
        raise ValueError("degenerate point correspondences")
    return h / h[2, 2]


def apply_homography(h: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Map ``(..., 2)`` points through ``h``; points at infinity become NaN."""
    points = np.asarray(points, dtype=float)
    ones = np.ones(points.shape[:-1] + (1,))
    mapped = np.concatenate([points, ones], axis=-1) @ np.asarray(h).T
    w = mapped[..., 2:]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = mapped[..., :2] / np.where(np.abs(w) > _DET_EPS, w, np.nan)
    return out


class CameraModel:
    """
    Fixed forward-looking camera.

    The homography maps vehicle-frame ground metres (forward, left) onto image
    pixels (column, row) with pixel centres at integer coordinates.
    """

    def __init__(self, config: CameraConfig):
        self.config = config
        self.width = config.width
        self.height = config.height
        self.homography = solve_homography(config.ground_points, config.image_points)

    @cached_property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.homography)

    @cached_property
    def pixel_ground(self) -> tuple[np.ndarray, np.ndarray]:
        """Ground point seen by every pixel and the mask of pixels that see ground."""
        rows, cols = np.mgrid[0 : self.height, 0 : self.width]
        pixels = np.stack([cols, rows], axis=-1).astype(float)
        ground = apply_homography(self.inverse, pixels)
        sees_ground = np.isfinite(ground).all(axis=-1) & (ground[..., 0] > 0.0)
        return ground, sees_ground

    def project(self, ground: np.ndarray) -> np.ndarray:
        """Pixel coordinates of vehicle-frame ground points."""
        return apply_homography(self.homography, ground)


def lighting_field(
    shape: tuple[int, int], amplitude: float, sigma: float, rng: np.random.Generator
) -> np.ndarray:
    """Smooth additive brightness field in ``[-amplitude*255, amplitude*255]``."""
    field = ndimage.gaussian_filter(rng.uniform(-1.0, 1.0, size=shape), sigma)
    peak = float(np.max(np.abs(field)))
    if peak > 0.0:
        field = field / peak
    return field * amplitude * 255.0


def render_view(
    pose: Pose2D,
    track: Track,
    camera: CameraModel,
    lighting_noise: float = 0.0,
    noise_sigma: float = 6.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """
    Synthetic camera image of the road.

    Every pixel is inverse-mapped to the ground and coloured by its lateral
    offset from the centre line: red on the centre marking, black on the outer
    lines at ``±lane_width``, gray floor elsewhere.

    Args:
        pose: Vehicle pose.
        track: Road geometry.
        camera: Camera model.
        lighting_noise: Amplitude of the additive lighting field in ``[0, 1]``.
        noise_sigma: Smoothing of the lighting field in pixels.
        rng: Random generator for the lighting field; required when the
            amplitude is positive.

    Returns:
        ``(height, width, 3)`` uint8 RGB image.
    """
    ground, sees_ground = camera.pixel_ground
    image = np.empty((camera.height, camera.width, 3), dtype=np.uint8)
    image[...] = FLOOR

    world = transform_points(pose, ground[sees_ground])
    _, lateral = track.project(world)
    half = track.marking_width / 2.0
    centre = np.abs(lateral) <= half
    outer = np.abs(np.abs(lateral) - track.lane_width) <= half

    colours = np.tile(np.asarray(FLOOR, dtype=np.uint8), (len(lateral), 1))
    colours[outer] = BLACK
    colours[centre] = RED
    image[sees_ground] = colours

    if lighting_noise > 0.0:
        if rng is None:
            raise ValueError("a random generator is required for lighting noise")
        field = lighting_field(image.shape[:2], lighting_noise, noise_sigma, rng)
        noisy = image.astype(float) + field[..., None]
        image = np.clip(np.rint(noisy), 0, 255).astype(np.uint8)
    return image


def hsv_mask(
    image: np.ndarray,
    lo: tuple[float, float, float],
    hi: tuple[float, float, float],
) -> np.ndarray:
    """
    Binary mask of pixels inside an HSV box.

    Hue is in degrees ``[0, 360)``; saturation and value in ``[0, 1]``. A hue
    range with ``lo > hi`` wraps around zero, which is how red is selected.
    """
    hsv = rgb_to_hsv(np.asarray(image, dtype=float) / 255.0)
    hue = hsv[..., 0] * 360.0
    if lo[0] <= hi[0]:
        in_hue = (hue >= lo[0]) & (hue <= hi[0])
    else:
        in_hue = (hue >= lo[0]) | (hue <= hi[0])
    in_sat = (hsv[..., 1] >= lo[1]) & (hsv[..., 1] <= hi[1])
    in_val = (hsv[..., 2] >= lo[2]) & (hsv[..., 2] <= hi[2])
    return (in_hue & in_sat & in_val).astype(np.uint8)


def morph_open_close(mask: np.ndarray, kernel: int) -> np.ndarray:
    """Opening then closing with a square structuring element, zero border."""
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError(f"kernel must be a positive odd size, got {kernel}")
    structure = np.ones((kernel, kernel), dtype=bool)
    binary = np.asarray(mask).astype(bool)
    opened = ndimage.binary_dilation(
        ndimage.binary_erosion(binary, structure, border_value=0),
        structure,
        border_value=0,
    )
    closed = ndimage.binary_erosion(
        ndimage.binary_dilation(opened, structure, border_value=0),
        structure,
        border_value=0,
    )
    return closed.astype(np.uint8)


def filter_components(
    mask: np.ndarray, min_area: int, max_area: int, min_aspect: float
) -> np.ndarray:
    """
    Keep elongated 8-connected components within an area range.

    Elongation is the ratio of the longer to the shorter bounding-box side.
    """
    if min_area > max_area:
        raise ValueError("min_area must not exceed max_area")
    labels, n = ndimage.label(np.asarray(mask) > 0, structure=np.ones((3, 3)))
    if n == 0:
        return np.zeros(labels.shape, dtype=np.uint8)
    areas = np.bincount(labels.ravel(), minlength=n + 1)
    keep = np.zeros(n + 1, dtype=bool)
    for label, box in enumerate(ndimage.find_objects(labels), start=1):
        height = box[0].stop - box[0].start
        width = box[1].stop - box[1].start
        elongation = max(height, width) / min(height, width)
        keep[label] = min_area <= areas[label] <= max_area and elongation >= min_aspect
    return keep[labels].astype(np.uint8)


def birdeye(
    image: np.ndarray, h: np.ndarray, out_shape: tuple[int, int] | None = None
) -> np.ndarray:
    """
    Nearest-neighbour perspective warp.

    Args:
        image: Source image, single or multi channel.
        h: Homography from source pixels (column, row) to output pixels.
        out_shape: Output ``(height, width)``; defaults to the source size.

    Returns:
        The warped image; output pixels that map outside the source are zero.
    """
    image = np.asarray(image)
    out_h, out_w = out_shape if out_shape is not None else image.shape[:2]
    rows, cols = np.mgrid[0:out_h, 0:out_w]
    source = apply_homography(
        np.linalg.inv(h), np.stack([cols, rows], axis=-1).astype(float)
    )
    finite = np.isfinite(source).all(axis=-1)
    src = np.where(finite[..., None], np.rint(source), -1).astype(int)
    u, v = src[..., 0], src[..., 1]
    inside = finite & (u >= 0) & (u < image.shape[1]) & (v >= 0) & (v < image.shape[0])
    out = np.zeros((out_h, out_w) + image.shape[2:], dtype=image.dtype)
    out[inside] = image[v[inside], u[inside]]
    return out


def metric_to_birdeye(
    out_shape: tuple[int, int], meters_per_pixel: float
) -> np.ndarray:
    """Homography from vehicle-frame metres to bird's-eye pixels."""
    out_h, out_w = out_shape
    scale = 1.0 / meters_per_pixel
    return np.array(
        [
            [0.0, -scale, out_w / 2.0 - 0.5],
            [-scale, 0.0, out_h - 0.5],
            [0.0, 0.0, 1.0],
        ]
    )


def birdeye_homography(
    camera_h: np.ndarray, out_shape: tuple[int, int], meters_per_pixel: float
) -> np.ndarray:
    """Compose the camera-to-bird's-eye pixel homography."""
    return metric_to_birdeye(out_shape, meters_per_pixel) @ np.linalg.inv(camera_h)


def birdeye_metric_points(mask: np.ndarray, meters_per_pixel: float) -> np.ndarray:
    """Vehicle-frame ``(forward, left)`` coordinates of every set bird's-eye pixel."""
    out_h, out_w = mask.shape
    rows, cols = np.nonzero(mask)
    forward = (out_h - rows - 0.5) * meters_per_pixel
    left = (out_w / 2.0 - cols - 0.5) * meters_per_pixel
    return np.column_stack([forward, left])


def lookahead_distance(v: float, lookahead: tuple[float, float]) -> float:
    """``L_min + k_v * v`` for forward speeds."""
    l_min, k_v = lookahead
    return l_min + k_v * max(v, 0.0)


def fit_lane_points(
    forward: np.ndarray,
    lateral: np.ndarray,
    v: float,
    lookahead: tuple[float, float],
    min_pixels: int = 30,
    max_residual: float = 0.15,
) -> LaneTarget:
    """
    Quadratic least-squares fit of lane points and its lookahead target.

    Falls back to a line when every point shares one forward coordinate.
    """
    forward = np.asarray(forward, dtype=float).ravel()
    lateral = np.asarray(lateral, dtype=float).ravel()
    distance = lookahead_distance(v, lookahead)
    n = len(forward)
    if n < min_pixels or n == 0:
        return LaneTarget(point=(distance, 0.0), lookahead=distance, n_pixels=n)

    design = np.column_stack([forward**2, forward, np.ones(n)])
    coef, _, rank, _ = np.linalg.lstsq(design, lateral, rcond=None)
    if rank < 3:
        line, _, _, _ = np.linalg.lstsq(design[:, 1:], lateral, rcond=None)
        coef = np.array([0.0, line[0], line[1]])
    poly = np.poly1d(coef)
    residual = float(np.sqrt(np.mean((lateral - poly(forward)) ** 2)))
    return LaneTarget(
        point=(distance, float(poly(distance))),
        lookahead=distance,
        poly=(float(coef[0]), float(coef[1]), float(coef[2])),
        valid=residual <= max_residual,
        n_pixels=n,
        residual_rms=residual,
    )


def fit_lane(
    mask: np.ndarray,
    meters_per_pixel: float,
    v: float,
    lookahead: tuple[float, float],
    min_pixels: int = 30,
    max_residual: float = 0.15,
) -> LaneTarget:
    """
    Fit the lane in a bird's-eye mask.

    Args:
        mask: Bird's-eye binary image with the vehicle at the bottom centre.
        meters_per_pixel: Scale of the bird's-eye image.
        v: Current speed.
        lookahead: ``(L_min, k_v)`` of the lookahead law.
        min_pixels: Fewer set pixels make the target invalid.
        max_residual: Larger RMS residuals make the target invalid.

    Returns:
        The lane target in the vehicle frame.
    """
    points = birdeye_metric_points(np.asarray(mask), meters_per_pixel)
    return fit_lane_points(
        points[:, 0], points[:, 1], v, lookahead, min_pixels, max_residual
    )


@dataclass
class LaneStages:
    """Intermediate images of one pipeline pass."""

    mask: np.ndarray
    cleaned: np.ndarray
    components: np.ndarray
    birdeye: np.ndarray


class LanePipeline:
    """
    Pre-processing, warp and fit bound to one camera and configuration.

    Args:
        vision: Thresholds, morphology and fit settings.
        camera: Camera geometry.
    """

    def __init__(self, vision: LaneVisionConfig, camera: CameraConfig):
        self.vision = vision
        self.camera = CameraModel(camera)
        self.out_shape = (vision.birdeye_height, vision.birdeye_width)
        self.warp = birdeye_homography(
            self.camera.homography, self.out_shape, vision.meters_per_pixel
        )

    def stages(self, image: np.ndarray) -> LaneStages:
        cfg = self.vision
        mask = hsv_mask(image, cfg.hsv_lo, cfg.hsv_hi)
        cleaned = morph_open_close(mask, cfg.kernel)
        components = filter_components(
            cleaned, cfg.min_area, cfg.max_area, cfg.min_aspect
        )
        return LaneStages(
            mask=mask,
            cleaned=cleaned,
            components=components,
            birdeye=birdeye(components, self.warp, self.out_shape),
        )

    def detect(self, image: np.ndarray, v: float) -> LaneTarget:
        """Lane target for one camera image at speed ``v``."""
        cfg = self.vision
        target = fit_lane(
            self.stages(image).birdeye,
            cfg.meters_per_pixel,
            v,
            (cfg.lookahead_min, cfg.lookahead_gain),
            cfg.min_pixels,
            cfg.max_residual,
        )
        if not target.valid:
            logger.debug(
                "Lane fit rejected: %d pixels, rms %.3f m",
                target.n_pixels,
                target.residual_rms,
            )
        return target
