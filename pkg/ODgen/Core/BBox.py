from dataclasses import dataclass

import numpy as np

from ODgen.Errors.InvalidParamError import InvalidParamError


@dataclass(frozen=True, order=True)
class BBox2D:
    """
    Axis-aligned box in pixel coordinates, origin top-left.
    Pixel (x, y) covers [x, x+1] x [y, y+1].
    """
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min <= self.x_max and self.y_min <= self.y_max):
            raise InvalidParamError("bbox", (self.x_min, self.y_min, self.x_max, self.y_max), "min <= max")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple:
        return (self.x_min + self.x_max) / 2, (self.y_min + self.y_max) / 2

    def clip(self, width: float, height: float) -> 'BBox2D':
        x_min = min(max(self.x_min, 0.0), width)
        y_min = min(max(self.y_min, 0.0), height)
        x_max = min(max(self.x_max, 0.0), width)
        y_max = min(max(self.y_max, 0.0), height)
        return BBox2D(x_min, y_min, x_max, y_max)

    def expand(self, pixels: float) -> 'BBox2D':
        return BBox2D(self.x_min - pixels, self.y_min - pixels, self.x_max + pixels, self.y_max + pixels)

    def contains(self, other: 'BBox2D') -> bool:
        return self.x_min <= other.x_min and self.y_min <= other.y_min and \
               other.x_max <= self.x_max and other.y_max <= self.y_max

    def shift(self, dx: float, dy: float) -> 'BBox2D':
        return BBox2D(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)

    def to_xywh(self) -> list:
        return [float(self.x_min), float(self.y_min), float(self.width), float(self.height)]

    @staticmethod
    def from_xywh(values) -> 'BBox2D':
        x, y, w, h = values
        return BBox2D(x, y, x + w, y + h)

    @staticmethod
    def from_mask(mask: np.ndarray):
        """
        Tight pixel-edge bounds of the nonzero pixels.

        :param mask: (H, W) array
        :return: BBox2D or None for an empty mask
        """
        rows = np.flatnonzero(np.any(mask, axis=1))
        cols = np.flatnonzero(np.any(mask, axis=0))
        if not len(rows):
            return None
        return BBox2D(float(cols[0]), float(rows[0]), float(cols[-1] + 1), float(rows[-1] + 1))
