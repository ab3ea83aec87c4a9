import numpy as np

from ODgen.Errors.InvalidParamError import InvalidParamError
from ODgen.utils import readonly

DEFAULT_COLOR = (0.7, 0.7, 0.7)
FALLBACK_NORMAL = (0.0, 0.0, 1.0)


def compute_vertex_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """
    Per-vertex normals as the normalized sum of the adjacent face normals weighted by face area.

    The unnormalized cross product of two triangle edges has length twice the triangle area,
    so summing raw cross products gives the area weighting directly.
    Vertices without an adjacent non-degenerate face get +Z.

    :param vertices: (N, 3) positions
    :param triangles: (M, 3) vertex indices
    :return: (N, 3) unit normals
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    accumulated = np.zeros_like(vertices)
    if len(triangles):
        v0, v1, v2 = (vertices[triangles[:, k]] for k in range(3))
        face_normals = np.cross(v1 - v0, v2 - v0)
        for k in range(3):
            np.add.at(accumulated, triangles[:, k], face_normals)
    lengths = np.linalg.norm(accumulated, axis=1)
    normals = np.tile(np.array(FALLBACK_NORMAL), (len(vertices), 1))
    valid = lengths > 0
    normals[valid] = accumulated[valid] / lengths[valid, None]
    return normals


class Mesh:
    def __init__(self, vertices, triangles, normals=None, colors=None):
        """
        Triangle mesh with per-vertex normals and colors, immutable after construction.

        :param vertices: (N, 3) positions in meters
        :param triangles: (M, 3) indices into vertices
        :param normals: (N, 3) unit normals, computed from the faces when omitted
        :param colors: (N, 3) RGB in [0, 1], uniform gray when omitted
        """
        vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
        triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)

        if len(triangles) and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise InvalidParamError("triangles", int(triangles.max()), "indices < {}".format(len(vertices)))

        if normals is None:
            normals = compute_vertex_normals(vertices, triangles)
        normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
        if normals.shape != vertices.shape:
            raise InvalidParamError("normals", normals.shape, "one normal per vertex")
        if len(normals) and np.abs(np.linalg.norm(normals, axis=1) - 1.0).max() > 1e-6:
            raise InvalidParamError("normals", "non-unit", "length 1 +- 1e-6")

        if colors is None:
            colors = np.tile(np.array(DEFAULT_COLOR), (len(vertices), 1))
        colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
        if colors.shape != vertices.shape:
            raise InvalidParamError("colors", colors.shape, "one color per vertex")
        if len(colors) and (colors.min() < 0.0 or colors.max() > 1.0):
            raise InvalidParamError("colors", "out of range", "within [0, 1]")

        self.vertices = readonly(vertices)
        self.triangles = readonly(triangles)
        self.normals = readonly(normals)
        self.colors = readonly(colors)

    def __eq__(self, other: 'Mesh') -> bool:
        return np.array_equal(self.vertices, other.vertices) and \
               np.array_equal(self.triangles, other.triangles) and \
               np.array_equal(self.normals, other.normals) and \
               np.array_equal(self.colors, other.colors)

    def __str__(self):
        return "Mesh({} vertices, {} triangles)".format(len(self.vertices), len(self.triangles))

    def __repr__(self):
        return str(self)

    def __hash__(self):
        return hash((self.vertices.tobytes(), self.triangles.tobytes()))

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)

    def bounding_radius(self) -> float:
        """
        Largest distance of a vertex from the origin.
        """
        if not len(self.vertices):
            return 0.0
        return float(np.linalg.norm(self.vertices, axis=1).max())

    def signed_volume(self) -> float:
        """
        Enclosed volume by the divergence theorem; positive for outward-wound closed meshes.
        """
        if not len(self.triangles):
            return 0.0
        v0, v1, v2 = (self.vertices[self.triangles[:, k]] for k in range(3))
        return float(np.einsum('ij,ij->i', v0, np.cross(v1, v2)).sum() / 6.0)

    def with_color(self, color) -> 'Mesh':
        colors = np.tile(np.asarray(color, dtype=np.float64), (len(self.vertices), 1))
        return Mesh(self.vertices, self.triangles, self.normals, colors)
