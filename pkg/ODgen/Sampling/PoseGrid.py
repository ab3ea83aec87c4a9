import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from ODgen.Core.Camera import CameraIntrinsics, Pose
from ODgen.Core.Mesh import Mesh
from ODgen.Errors.InvalidRangeError import InvalidRangeError
from ODgen.Errors.NonUnitDirectionError import NonUnitDirectionError
from ODgen.Sampling.ViewSphere import subdivide_icosahedron

UP = np.array([0.0, 0.0, 1.0])
FALLBACK_UP = np.array([1.0, 0.0, 0.0])


@dataclass(frozen=True)
class PoseGridSpec:
    subdivision_level: int = 2
    in_plane_count: int = 8
    in_plane_range: tuple = (0.0, 360.0)
    distance_min: float = 0.5
    distance_max: float = 1.0
    scale_levels: int = 3
    hemisphere_only: bool = False

    def __post_init__(self):
        if not self.distance_min > 0:
            raise InvalidRangeError("distance_min must be > 0, got {}".format(self.distance_min))
        if self.distance_max < self.distance_min:
            raise InvalidRangeError("distance_max {} < distance_min {}".format(self.distance_max, self.distance_min))
        if self.in_plane_count < 1:
            raise InvalidRangeError("in_plane_count must be >= 1, got {}".format(self.in_plane_count))
        if self.scale_levels < 1:
            raise InvalidRangeError("scale_levels must be >= 1, got {}".format(self.scale_levels))
        lo, hi = self.in_plane_range
        if lo > hi:
            raise InvalidRangeError("in_plane_range [{}, {}] is reversed".format(lo, hi))

    @property
    def size(self) -> int:
        return len(view_directions(self)) * self.in_plane_count * self.scale_levels


def log_distances(d_min: float, d_max: float, n: int) -> list:
    """
    Geometrically spaced camera distances, d_i = d_min * (d_max / d_min)^(i / (n - 1)).

    :param d_min: nearest distance in meters
    :param d_max: farthest distance in meters
    :param n: number of scale levels
    :return: list of n distances, first d_min and last d_max
    """
    if not 0 < d_min <= d_max:
        raise InvalidRangeError("require 0 < d_min <= d_max, got d_min={} d_max={}".format(d_min, d_max))
    if n < 1:
        raise InvalidRangeError("require n >= 1, got {}".format(n))
    if n == 1:
        if d_min != d_max:
            raise InvalidRangeError("a single scale level requires d_min == d_max")
        return [float(d_min)]
    ratio = d_max / d_min
    distances = [d_min * ratio ** (i / (n - 1)) for i in range(n)]
    distances[-1] = float(d_max)
    return distances


def in_plane_angles(spec: PoseGridSpec) -> list:
    """
    Equally spaced in-plane angles in radians over [lo, hi), the upper end excluded.
    """
    lo, hi = spec.in_plane_range
    return [math.radians(lo + (hi - lo) * k / spec.in_plane_count) for k in range(spec.in_plane_count)]


def view_directions(spec: PoseGridSpec) -> np.ndarray:
    directions = subdivide_icosahedron(spec.subdivision_level).directions
    if spec.hemisphere_only:
        directions = directions[directions[:, 2] >= 0]
    return directions


def look_at_pose(direction, in_plane: float, distance: float) -> Pose:
    """
    Pose of an object seen along `direction`.

    `direction` is the camera viewing ray in the object frame: the camera sits at
    -distance * direction and its optical axis (+Z) maps onto `direction`. Image x follows
    direction x up, where up is world +Z, or +X when the view is within 1e-6 of vertical.
    The result is then rotated by `in_plane` radians about the optical axis.

    :param direction: unit 3-vector
    :param in_plane: rotation about the optical axis in radians
    :param distance: distance of the object origin from the camera in meters
    :return: Pose with the object origin at (0, 0, distance)
    """
    direction = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(direction) - 1.0) > 1e-6:
        raise NonUnitDirectionError(direction)
    if not distance > 0:
        raise InvalidRangeError("distance must be > 0, got {}".format(distance))

    forward = direction / np.linalg.norm(direction)
    up = FALLBACK_UP if abs(forward @ UP) > 1 - 1e-6 else UP
    right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])

    c, s = math.cos(in_plane), math.sin(in_plane)
    roll = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return Pose(roll @ rotation, (0.0, 0.0, distance))


def enumerate_poses(spec: PoseGridSpec) -> list:
    """
    Cartesian product of view directions, in-plane angles and distances.

    Order: sphere vertex index major, then in-plane angle, then distance.

    :param spec: PoseGridSpec
    :return: list of Pose
    """
    distances = log_distances(spec.distance_min, spec.distance_max, spec.scale_levels)
    angles = in_plane_angles(spec)
    return [look_at_pose(direction, angle, distance)
            for direction in view_directions(spec)
            for angle in angles
            for distance in distances]


def pixel_coverage_report(mesh: Mesh, K: CameraIntrinsics, spec: PoseGridSpec) -> pd.DataFrame:
    """
    Projected object size per scale level.

    Diameter is 2 * f * radius / d with f the mean focal length, coverage is the projected
    disc area relative to the image area. Ratios compare each level with the previous one.

    :param mesh: object mesh
    :param K: camera intrinsics
    :param spec: pose grid whose distances are reported
    :return: DataFrame with one row per scale level
    """
    radius = mesh.bounding_radius()
    focal = (K.fx + K.fy) / 2
    rows = []
    for level, distance in enumerate(log_distances(spec.distance_min, spec.distance_max, spec.scale_levels)):
        diameter = 2 * focal * radius / distance
        coverage = math.pi * (diameter / 2) ** 2 / (K.width * K.height)
        rows.append([level, distance, diameter, coverage])
    report = pd.DataFrame(rows, columns=["level", "distance", "diameter_px", "coverage"])
    report["diameter_ratio"] = report["diameter_px"] / report["diameter_px"].shift(1)
    report["coverage_ratio"] = report["coverage"] / report["coverage"].shift(1)
    return report
