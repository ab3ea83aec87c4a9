import logging
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from ODgen.Core.BBox import BBox2D
from ODgen.Core.Camera import CameraIntrinsics, Pose
from ODgen.Core.Mesh import Mesh
from ODgen.Errors.BehindCameraError import BehindCameraError
from ODgen.Errors.ZeroAreaImageError import ZeroAreaImageError
from ODgen.Rendering.Phong import LightSpec, PhongMaterial, shade

logger = logging.getLogger(__name__)

NEAR_PLANE = 1e-6


@dataclass
class RenderLayer:
    """
    Object layer before compositing: rgb and alpha are 8-bit, depth is in meters (+inf where empty).
    """
    rgb: np.ndarray
    alpha: np.ndarray
    depth: np.ndarray

    @property
    def width(self) -> int:
        return self.alpha.shape[1]

    @property
    def height(self) -> int:
        return self.alpha.shape[0]

    @property
    def mask(self) -> np.ndarray:
        return self.alpha > 0

    def bbox(self):
        return BBox2D.from_mask(self.mask)

    def is_consistent(self) -> bool:
        covered = self.alpha > 0
        return bool(np.array_equal(covered, np.isfinite(self.depth)) and not self.rgb[~covered].any())

    def save(self, prefix: str):
        """
        Debug dump as <prefix>_rgb.png, <prefix>_alpha.png and <prefix>_depth.png,
        depth scaled so that the nearest pixel is white.
        """
        Image.fromarray(self.rgb).save(prefix + "_rgb.png")
        Image.fromarray(self.alpha).save(prefix + "_alpha.png")
        depth = np.zeros(self.alpha.shape, dtype=np.uint8)
        covered = self.mask
        if covered.any():
            near, far = self.depth[covered].min(), self.depth[covered].max()
            span = far - near if far > near else 1.0
            depth[covered] = np.rint(255 - 200 * (self.depth[covered] - near) / span).astype(np.uint8)
        Image.fromarray(depth).save(prefix + "_depth.png")

    @staticmethod
    def empty(width: int, height: int) -> 'RenderLayer':
        return RenderLayer(np.zeros((height, width, 3), dtype=np.uint8), np.zeros((height, width), dtype=np.uint8),
                           np.full((height, width), np.inf))


def edge_function(a, b, px, py):
    """
    Twice the signed area of (a, b, p); positive when p is left of a->b in y-down pixel coordinates.
    """
    return (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0])


def is_top_left(a, b) -> bool:
    """
    Top-left coverage rule for an edge of a triangle with positive edge_function area.
    """
    dx, dy = b[0] - a[0], b[1] - a[1]
    return dy < 0 or (dy == 0 and dx > 0)


def covers(e, top_left: bool):
    return (e > 0) | ((e == 0) & top_left)


def rasterize(screen: np.ndarray, depth: np.ndarray, triangles: np.ndarray, width: int, height: int,
              backface_culling: bool = False) -> tuple:
    """
    Z-buffered coverage of projected triangles, pixel centers at (x + 0.5, y + 0.5).

    :param screen: (N, 2) projected vertex positions
    :param depth: (N,) camera-frame depth of the vertices
    :param triangles: (M, 3) vertex indices
    :param width: image width
    :param height: image height
    :param backface_culling: skip triangles wound clockwise on screen (facing away from the camera)
    :return: z-buffer (H, W), per-pixel vertex indices (H, W, 3), perspective-correct weights (H, W, 3)
    """
    zbuffer = np.full((height, width), np.inf)
    vertex_ids = np.full((height, width, 3), -1, dtype=np.int64)
    weights = np.zeros((height, width, 3))

    for triangle in triangles:
        ids = [int(i) for i in triangle]
        p0, p1, p2 = (screen[i] for i in ids)
        area = edge_function(p0, p1, p2[0], p2[1])
        if area == 0 or (backface_culling and area > 0):
            continue
        if area < 0:
            ids = [ids[0], ids[2], ids[1]]
            p1, p2 = p2, p1
            area = -area

        xs = [p0[0], p1[0], p2[0]]
        ys = [p0[1], p1[1], p2[1]]
        x_lo = max(0, math.ceil(min(xs) - 0.5))
        x_hi = min(width - 1, math.floor(max(xs) - 0.5))
        y_lo = max(0, math.ceil(min(ys) - 0.5))
        y_hi = min(height - 1, math.floor(max(ys) - 0.5))
        if x_lo > x_hi or y_lo > y_hi:
            continue

        px = (np.arange(x_lo, x_hi + 1) + 0.5)[None, :]
        py = (np.arange(y_lo, y_hi + 1) + 0.5)[:, None]
        e0 = edge_function(p1, p2, px, py)
        e1 = edge_function(p2, p0, px, py)
        e2 = edge_function(p0, p1, px, py)
        inside = covers(e0, is_top_left(p1, p2)) & covers(e1, is_top_left(p2, p0)) & \
            covers(e2, is_top_left(p0, p1))
        if not inside.any():
            continue

        w0 = (e0 / area) / depth[ids[0]]
        w1 = (e1 / area) / depth[ids[1]]
        w2 = (e2 / area) / depth[ids[2]]
        total = w0 + w1 + w2
        with np.errstate(divide='ignore', invalid='ignore'):
            z = 1.0 / total

        window = (slice(y_lo, y_hi + 1), slice(x_lo, x_hi + 1))
        closer = inside & (z < zbuffer[window])
        zbuffer[window][closer] = z[closer]
        vertex_ids[window][closer] = ids
        weights[window][closer] = np.stack([w0 / total, w1 / total, w2 / total], axis=-1)[closer]

    return zbuffer, vertex_ids, weights


def render(mesh: Mesh, pose: Pose, K: CameraIntrinsics, material: PhongMaterial, light: LightSpec,
           backface_culling: bool = False) -> RenderLayer:
    """
    Software rasterization of the mesh with Phong shading.

    Normals, colors and positions are interpolated with perspective-correct barycentric
    weights. Triangles are two-sided: normals facing away from the viewer are flipped before
    shading, unless backface culling drops those triangles altogether.

    :param mesh: object mesh
    :param pose: object-to-camera pose
    :param K: camera intrinsics
    :param material: surface material
    :param light: directional light in the camera frame
    :param backface_culling: drop triangles facing away from the camera
    :return: RenderLayer of size K.width x K.height
    """
    if K.width * K.height == 0:
        raise ZeroAreaImageError(K.width, K.height)
    layer = RenderLayer.empty(K.width, K.height)
    if not mesh.triangle_count:
        return layer

    camera_points = pose.transform(mesh.vertices)
    if camera_points[:, 2].min() <= NEAR_PLANE:
        raise BehindCameraError(float(camera_points[:, 2].min()))
    z = camera_points[:, 2]
    screen = np.stack([K.fx * camera_points[:, 0] / z + K.cx, K.fy * camera_points[:, 1] / z + K.cy], axis=1)

    zbuffer, vertex_ids, weights = rasterize(screen, z, mesh.triangles, K.width, K.height, backface_culling)
    covered = vertex_ids[:, :, 0] >= 0
    if not covered.any():
        return layer

    ids = vertex_ids[covered]
    lam = weights[covered][:, :, None]
    normals = np.sum(lam * pose.rotate(mesh.normals)[ids], axis=1)
    positions = np.sum(lam * camera_points[ids], axis=1)
    colors = np.sum(lam * mesh.colors[ids], axis=1)

    views = -positions / np.linalg.norm(positions, axis=1, keepdims=True)
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = np.where(lengths > 1e-12, normals / np.where(lengths > 1e-12, lengths, 1.0), views)
    facing_away = np.sum(normals * views, axis=1) < 0
    normals[facing_away] *= -1

    intensity = shade(normals, views, light, material, np.clip(colors, 0.0, 1.0))
    layer.rgb[covered] = np.rint(intensity * 255).astype(np.uint8)
    layer.alpha[covered] = 255
    layer.depth[covered] = zbuffer[covered]
    logger.debug("rendered %d triangles onto %d pixels", mesh.triangle_count, int(covered.sum()))
    return layer
