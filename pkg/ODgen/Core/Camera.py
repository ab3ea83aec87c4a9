from dataclasses import dataclass

import numpy as np

from ODgen.Core.BBox import BBox2D
from ODgen.Core.Mesh import Mesh
from ODgen.Errors.BehindCameraError import BehindCameraError
from ODgen.Errors.InvalidParamError import InvalidParamError
from ODgen.Errors.ZeroAreaImageError import ZeroAreaImageError
from ODgen.utils import readonly

MIN_DEPTH = 1e-9


class Pose:
    def __init__(self, rotation, translation):
        """
        Rigid transform from the object frame to the camera frame: q = R p + t.

        :param rotation: 3x3 orthonormal matrix with determinant +1
        :param translation: 3-vector in meters
        """
        rotation = np.asarray(rotation, dtype=np.float64).reshape(3, 3)
        translation = np.asarray(translation, dtype=np.float64).reshape(3)
        if np.abs(rotation.T @ rotation - np.eye(3)).max() >= 1e-9 or np.linalg.det(rotation) <= 0:
            raise InvalidParamError("rotation", rotation.tolist(), "orthonormal with determinant +1")
        self.rotation = readonly(rotation)
        self.translation = readonly(translation)

    def __eq__(self, other: 'Pose') -> bool:
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(self.translation, other.translation)

    def __str__(self):
        return "Pose(R={}, t={})".format(self.rotation.tolist(), self.translation.tolist())

    def __repr__(self):
        return str(self)

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.translation.tobytes()))

    def transform(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    def rotate(self, directions) -> np.ndarray:
        return np.asarray(directions, dtype=np.float64) @ self.rotation.T

    def to_dict(self) -> dict:
        return {'rotation': [float(value) for value in self.rotation.ravel()],
                'translation': [float(value) for value in self.translation]}

    @staticmethod
    def from_dict(data: dict) -> 'Pose':
        return Pose(np.array(data['rotation']).reshape(3, 3), data['translation'])

    @staticmethod
    def identity() -> 'Pose':
        return Pose(np.eye(3), np.zeros(3))


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidParamError("focal length", (self.fx, self.fy), "fx, fy > 0")
        if self.width < 1 or self.height < 1:
            raise ZeroAreaImageError(self.width, self.height)

    def to_dict(self) -> dict:
        return {'fx': self.fx, 'fy': self.fy, 'cx': self.cx, 'cy': self.cy,
                'width': self.width, 'height': self.height}


def project_points(K: CameraIntrinsics, pose: Pose, points) -> np.ndarray:
    """
    Pinhole projection of many points.

    :param K: camera intrinsics
    :param pose: object-to-camera pose
    :param points: (N, 3) object-frame points
    :return: (N, 3) array of (u, v, z)
    """
    q = pose.transform(np.asarray(points, dtype=np.float64).reshape(-1, 3))
    if len(q) and q[:, 2].min() <= MIN_DEPTH:
        raise BehindCameraError(float(q[:, 2].min()))
    u = K.fx * q[:, 0] / q[:, 2] + K.cx
    v = K.fy * q[:, 1] / q[:, 2] + K.cy
    return np.stack([u, v, q[:, 2]], axis=1)


def project_point(K: CameraIntrinsics, pose: Pose, p) -> tuple:
    u, v, z = project_points(K, pose, [p])[0]
    return float(u), float(v), float(z)


def vertex_bbox(mesh: Mesh, pose: Pose, K: CameraIntrinsics) -> BBox2D:
    """
    Bounding box of all projected vertices, clipped to the image rectangle.
    """
    uvz = project_points(K, pose, mesh.vertices)
    box = BBox2D(float(uvz[:, 0].min()), float(uvz[:, 1].min()), float(uvz[:, 0].max()), float(uvz[:, 1].max()))
    return box.clip(K.width, K.height)
