import numpy as np

from ODgen.Errors.InvalidRangeError import InvalidRangeError
from ODgen.Errors.LevelTooLargeError import LevelTooLargeError
from ODgen.utils import readonly

MAX_LEVEL = 6
GOLDEN_RATIO = (1 + 5 ** 0.5) / 2

CORNERS = [
    [-1, GOLDEN_RATIO, 0], [1, GOLDEN_RATIO, 0], [-1, -GOLDEN_RATIO, 0], [1, -GOLDEN_RATIO, 0],
    [0, -1, GOLDEN_RATIO], [0, 1, GOLDEN_RATIO], [0, -1, -GOLDEN_RATIO], [0, 1, -GOLDEN_RATIO],
    [GOLDEN_RATIO, 0, -1], [GOLDEN_RATIO, 0, 1], [-GOLDEN_RATIO, 0, -1], [-GOLDEN_RATIO, 0, 1],
]

# counter-clockwise seen from outside
FACES = [
    [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
    [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
    [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
    [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
]


class ViewSphere:
    def __init__(self, level: int, directions, faces):
        self.level = level
        self.directions = readonly(np.asarray(directions, dtype=np.float64))
        self.faces = readonly(np.asarray(faces, dtype=np.int64))

    def __eq__(self, other: 'ViewSphere') -> bool:
        return self.level == other.level and np.array_equal(self.directions, other.directions)

    def __str__(self):
        return "ViewSphere(level={}, {} directions)".format(self.level, len(self.directions))

    def __repr__(self):
        return str(self)

    def __hash__(self):
        return hash((self.level, self.directions.tobytes()))

    def __len__(self):
        return len(self.directions)


def _project(vertex) -> list:
    length = np.sqrt(sum(c * c for c in vertex))
    return [c / length for c in vertex]


def subdivide_icosahedron(level: int) -> ViewSphere:
    """
    Vertices of the regular icosahedron refined `level` times.

    Each pass splits every triangle into four at the edge midpoints and pushes the midpoints
    onto the unit sphere. Midpoints of shared edges are created once, so the result has
    exactly 10 * 4^level + 2 directions.

    :param level: number of refinement passes, 0 <= level <= 6
    :return: ViewSphere with directions and the refined faces
    """
    if level < 0:
        raise InvalidRangeError("subdivision level must be >= 0, got {}".format(level))
    if level > MAX_LEVEL:
        raise LevelTooLargeError(level, MAX_LEVEL)

    vertices = [_project(corner) for corner in CORNERS]
    faces = [list(face) for face in FACES]

    for _ in range(level):
        midpoints = dict()

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in midpoints:
                vertices.append(_project([(a + b) / 2 for a, b in zip(vertices[i], vertices[j])]))
                midpoints[key] = len(vertices) - 1
            return midpoints[key]

        refined = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            refined += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = refined

    return ViewSphere(level, vertices, faces)
