import itertools
import logging
import os

import numpy as np
from PIL import Image, ImageDraw, UnidentifiedImageError

from ODgen.Errors.BackgroundTooSmallError import BackgroundTooSmallError
from ODgen.Errors.InvalidParamError import InvalidParamError
from ODgen.utils import readonly

logger = logging.getLogger(__name__)

IMAGE_EXTENSIONS = ('.png', '.jpg', '.jpeg', '.bmp', '.tif', '.tiff', '.ppm')
CHANNEL_PERMUTATIONS = list(itertools.permutations(range(3)))


def procedural_background(width: int, height: int, rng: np.random.Generator, polygons: int = 40) -> np.ndarray:
    """
    Cluttered stand-in background: bicubic value noise overdrawn with random colored polygons.
    """
    grid = rng.integers(0, 256, size=(max(2, height // 24), max(2, width // 24), 3), dtype=np.uint8)
    image = Image.fromarray(grid).resize((width, height), Image.Resampling.BICUBIC)
    draw = ImageDraw.Draw(image)
    scale = min(width, height)
    for _ in range(polygons):
        cx, cy = rng.uniform(0, width), rng.uniform(0, height)
        radius = rng.uniform(0.02, 0.25) * scale
        corners = int(rng.integers(3, 8))
        angles = np.sort(rng.uniform(0, 2 * np.pi, size=corners))
        points = [(float(cx + radius * np.cos(a)), float(cy + radius * np.sin(a))) for a in angles]
        draw.polygon(points, fill=tuple(int(c) for c in rng.integers(0, 256, size=3)))
    return np.asarray(image, dtype=np.uint8)


def constant_background(width: int, height: int, rng: np.random.Generator) -> np.ndarray:
    color = rng.integers(0, 256, size=3, dtype=np.uint8)
    return np.tile(color, (height, width, 1))


class BackgroundPool:
    def __init__(self, images: list, source: str = None):
        """
        Read-only collection of RGB background images.

        :param images: list of (H, W, 3) uint8 arrays
        :param source: description of where the images came from
        """
        if not images:
            raise InvalidParamError("backgrounds", 0, "at least one background image")
        self.images = [readonly(np.asarray(image, dtype=np.uint8)) for image in images]
        self.source = source

    def __len__(self):
        return len(self.images)

    def __getitem__(self, index: int) -> np.ndarray:
        return self.images[index]

    def __str__(self):
        return "BackgroundPool({} images from {})".format(len(self.images), self.source)

    def __repr__(self):
        return str(self)

    def check_size(self, width: int, height: int, rotations=(0,)):
        """
        Every image must hold a width x height crop in each orientation the rotations produce.
        """
        shapes = {(width, height) if (rotation // 90) % 2 == 0 else (height, width) for rotation in rotations}
        for image in self.images:
            for crop_w, crop_h in shapes:
                if image.shape[1] < crop_w or image.shape[0] < crop_h:
                    raise BackgroundTooSmallError((image.shape[1], image.shape[0]), (crop_w, crop_h))

    @staticmethod
    def from_directory(path: str) -> 'BackgroundPool':
        """
        Loads all raster images of the directory in file name order; unreadable files are skipped.
        """
        images = []
        for name in sorted(os.listdir(path)):
            if not name.lower().endswith(IMAGE_EXTENSIONS):
                continue
            try:
                with Image.open(os.path.join(path, name)) as image:
                    images.append(np.asarray(image.convert("RGB"), dtype=np.uint8))
            except (UnidentifiedImageError, OSError) as error:
                logger.warning("skipping background %s: %s", name, error)
        logger.info("loaded %d backgrounds from %s", len(images), path)
        return BackgroundPool(images, path)

    @staticmethod
    def procedural(count: int, width: int, height: int, seed: int) -> 'BackgroundPool':
        rng = np.random.default_rng(seed)
        side = max(width, height)
        return BackgroundPool([procedural_background(side, side, rng) for _ in range(count)],
                              "procedural(seed={})".format(seed))

    @staticmethod
    def constant(count: int, width: int, height: int, seed: int) -> 'BackgroundPool':
        rng = np.random.default_rng(seed)
        side = max(width, height)
        return BackgroundPool([constant_background(side, side, rng) for _ in range(count)],
                              "constant(seed={})".format(seed))


def augment_background(img: np.ndarray, target: tuple, rng: np.random.Generator, rotations=(0, 90, 180, 270),
                       flips: bool = True, channel_swap: bool = True) -> np.ndarray:
    """
    Random crop, rotation, horizontal flip and channel permutation, applied in this order.

    The rotation is drawn first because it decides the crop shape. Rotation by k * 90 degrees
    follows numpy.rot90: for k = 1 the last column becomes the first row, so [[a, b]] turns
    into [[b], [a]].

    :param img: (H, W, 3) background
    :param target: output (width, height)
    :param rng: random stream
    :param rotations: enabled rotations in degrees, subset of {0, 90, 180, 270}
    :param flips: enable random horizontal flips
    :param channel_swap: enable random channel permutations
    :return: (height, width, 3) image
    """
    width, height = target
    rotations = tuple(rotations) or (0,)
    k = (rotations[int(rng.integers(len(rotations)))] // 90) % 4
    crop_w, crop_h = (width, height) if k % 2 == 0 else (height, width)
    h, w = img.shape[:2]
    if h < crop_h or w < crop_w:
        raise BackgroundTooSmallError((w, h), (crop_w, crop_h))

    x0 = int(rng.integers(0, w - crop_w + 1))
    y0 = int(rng.integers(0, h - crop_h + 1))
    out = np.rot90(img[y0:y0 + crop_h, x0:x0 + crop_w], k)
    if flips and rng.random() < 0.5:
        out = out[:, ::-1]
    if channel_swap:
        out = out[..., list(CHANNEL_PERMUTATIONS[int(rng.integers(len(CHANNEL_PERMUTATIONS)))])]
    return np.ascontiguousarray(out)
