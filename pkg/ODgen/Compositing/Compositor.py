import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from ODgen.Compositing.Background import BackgroundPool, augment_background
from ODgen.Core.BBox import BBox2D
from ODgen.Core.Camera import Pose
from ODgen.Errors.InvalidRangeError import InvalidRangeError
from ODgen.Errors.NoValidPlacementError import NoValidPlacementError
from ODgen.Rendering.Rasterizer import RenderLayer

PLACEMENTS = ('full_inside', 'min_visibility')


@dataclass(frozen=True)
class ComposeSpec:
    noise_sigma_range: tuple = (0.0, 8.0)
    blur_sigma_range: tuple = (0.5, 2.0)
    placement: str = 'full_inside'
    min_visibility: float = 1.0
    channel_swap: bool = True
    flips: bool = True
    rotations: tuple = (0, 90, 180, 270)

    def __post_init__(self):
        for name in ('noise_sigma_range', 'blur_sigma_range'):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise InvalidRangeError("{} requires 0 <= lo <= hi, got [{}, {}]".format(name, lo, hi))
            object.__setattr__(self, name, (float(lo), float(hi)))
        if self.placement not in PLACEMENTS:
            raise InvalidRangeError("placement must be one of {}, got {}".format(PLACEMENTS, self.placement))
        if not 0 < self.min_visibility <= 1:
            raise InvalidRangeError("min_visibility must be in (0, 1], got {}".format(self.min_visibility))
        rotations = tuple(int(r) for r in self.rotations)
        if not rotations or any(r not in (0, 90, 180, 270) for r in rotations):
            raise InvalidRangeError("rotations must be a non-empty subset of 0, 90, 180, 270")
        object.__setattr__(self, 'rotations', rotations)


@dataclass(eq=False)
class CompositeSample:
    image: np.ndarray
    mask: np.ndarray
    bbox: BBox2D
    class_id: int
    pose: Pose = None
    provenance: dict = field(default_factory=dict)
    background: np.ndarray = None
    offset: tuple = (0, 0)
    visible_fraction: float = 1.0
    noise_sigma: float = 0.0
    blur_sigma: float = 0.0


def place_object(layer: RenderLayer, background: np.ndarray, spec: ComposeSpec, rng: np.random.Generator) -> tuple:
    """
    Uniformly random integer offset of the layer inside the background.

    full_inside admits offsets that keep the whole mask in the frame; min_visibility admits
    offsets that keep at least that fraction of the mask pixels in the frame.

    :param layer: rendered object layer
    :param background: (H, W, 3) target-sized background
    :param spec: placement policy
    :param rng: random stream
    :return: ((dx, dy), visible_fraction)
    """
    box = layer.bbox()
    if box is None:
        raise NoValidPlacementError("the rendered layer is empty")
    x0, y0, x1, y1 = int(box.x_min), int(box.y_min), int(box.x_max), int(box.y_max)
    height, width = background.shape[:2]

    if spec.placement == 'full_inside':
        dx_lo, dx_hi, dy_lo, dy_hi = -x0, width - x1, -y0, height - y1
        if dx_lo > dx_hi or dy_lo > dy_hi:
            raise NoValidPlacementError("object of {}x{} px does not fit a {}x{} frame".format(
                x1 - x0, y1 - y0, width, height))
        dx = int(rng.integers(dx_lo, dx_hi + 1))
        dy = int(rng.integers(dy_lo, dy_hi + 1))
        return (dx, dy), 1.0

    mask = layer.mask[y0:y1, x0:x1]
    total = int(mask.sum())
    integral = np.zeros((mask.shape[0] + 1, mask.shape[1] + 1), dtype=np.int64)
    integral[1:, 1:] = mask.cumsum(axis=0).cumsum(axis=1)

    dxs = np.arange(1 - x1, width - x0)
    dys = np.arange(1 - y1, height - y0)
    c_lo = np.clip(-x0 - dxs, 0, mask.shape[1])[None, :]
    c_hi = np.clip(width - x0 - dxs, 0, mask.shape[1])[None, :]
    r_lo = np.clip(-y0 - dys, 0, mask.shape[0])[:, None]
    r_hi = np.clip(height - y0 - dys, 0, mask.shape[0])[:, None]
    visible = integral[r_hi, c_hi] - integral[r_lo, c_hi] - integral[r_hi, c_lo] + integral[r_lo, c_lo]
    fraction = visible / total

    candidates = np.argwhere(fraction >= spec.min_visibility)
    if not len(candidates):
        raise NoValidPlacementError("no offset keeps {:.0%} of the object visible".format(spec.min_visibility))
    row, column = candidates[int(rng.integers(len(candidates)))]
    return (int(dxs[column]), int(dys[row])), float(fraction[row, column])


def shift_layer(layer: RenderLayer, offset: tuple, shape: tuple) -> tuple:
    """
    Layer rgb and alpha moved by offset onto a canvas of the given (height, width).
    """
    dx, dy = offset
    height, width = shape
    rgb = np.zeros((height, width, 3), dtype=np.uint8)
    alpha = np.zeros((height, width), dtype=np.uint8)
    sx0, sx1 = max(0, -dx), min(layer.width, width - dx)
    sy0, sy1 = max(0, -dy), min(layer.height, height - dy)
    if sx0 < sx1 and sy0 < sy1:
        rgb[sy0 + dy:sy1 + dy, sx0 + dx:sx1 + dx] = layer.rgb[sy0:sy1, sx0:sx1]
        alpha[sy0 + dy:sy1 + dy, sx0 + dx:sx1 + dx] = layer.alpha[sy0:sy1, sx0:sx1]
    return rgb, alpha


def alpha_composite(rgb: np.ndarray, alpha: np.ndarray, background: np.ndarray) -> np.ndarray:
    a = alpha[..., None].astype(np.uint32)
    blended = (rgb.astype(np.uint32) * a + background.astype(np.uint32) * (255 - a) + 127) // 255
    return blended.astype(np.uint8)


def add_object_noise(image: np.ndarray, mask: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """
    Adds i.i.d. N(0, sigma^2) to every channel of the masked pixels, rounded and clamped to [0, 255].
    """
    out = image.copy()
    if sigma == 0:
        return out
    selected = mask.astype(bool)
    noise = rng.normal(0.0, sigma, size=(int(selected.sum()), image.shape[2]))
    out[selected] = np.clip(np.rint(image[selected].astype(np.float64) + noise), 0, 255).astype(np.uint8)
    return out


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-x * x / (2 * sigma * sigma))
    return kernel / kernel.sum()


def blur_object_boundary(image: np.ndarray, mask: np.ndarray, sigma: float) -> np.ndarray:
    """
    Gaussian blur of the object and its surroundings.

    The truncated kernel has radius ceil(3 sigma) and is renormalized; only pixels of the mask
    dilated by the same radius (square neighbourhood) change. Image borders repeat the edge pixel.

    :param image: (H, W, 3) composite
    :param mask: (H, W) object mask
    :param sigma: standard deviation in pixels, 0 leaves the image unchanged
    :return: blurred copy
    """
    out = image.copy()
    if sigma == 0 or not mask.any():
        return out
    kernel = gaussian_kernel(sigma)
    radius = len(kernel) // 2
    blurred = ndimage.correlate1d(image.astype(np.float64), kernel, axis=0, mode='nearest')
    blurred = ndimage.correlate1d(blurred, kernel, axis=1, mode='nearest')
    region = ndimage.binary_dilation(mask.astype(bool), structure=np.ones((3, 3), dtype=bool), iterations=radius)
    out[region] = np.clip(np.rint(blurred[region]), 0, 255).astype(np.uint8)
    return out


def compose_sample(layer: RenderLayer, pool: BackgroundPool, spec: ComposeSpec, class_id: int,
                   rng: np.random.Generator, pose: Pose = None, provenance: dict = None) -> CompositeSample:
    """
    Pastes the object layer into an augmented background.

    Steps: pick a background uniformly, augment it, place the object, alpha-composite, add noise
    to the object (sigma uniform in range), blur the object boundary (sigma uniform in range), and
    derive mask and bounding box from the placed alpha.

    :param layer: rendered object layer, its size is the output size
    :param pool: background images
    :param spec: composition parameters
    :param class_id: category of the object
    :param rng: random stream of this sample
    :param pose: pose the layer was rendered with
    :param provenance: seed and sample index
    :return: CompositeSample
    """
    index = int(rng.integers(len(pool)))
    background = augment_background(pool[index], (layer.width, layer.height), rng,
                                    spec.rotations, spec.flips, spec.channel_swap)
    offset, visible_fraction = place_object(layer, background, spec, rng)
    rgb, alpha = shift_layer(layer, offset, background.shape[:2])
    image = alpha_composite(rgb, alpha, background)
    mask = alpha > 0

    noise_sigma = float(rng.uniform(*spec.noise_sigma_range))
    image = add_object_noise(image, mask, noise_sigma, rng)
    blur_sigma = float(rng.uniform(*spec.blur_sigma_range))
    image = blur_object_boundary(image, mask, blur_sigma)

    provenance = dict(provenance or {}, background=index)
    return CompositeSample(image, mask, BBox2D.from_mask(mask), class_id, pose, provenance, background,
                           offset, visible_fraction, noise_sigma, blur_sigma)
