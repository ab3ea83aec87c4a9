import math

import numpy as np

from ODgen.Core.Mesh import Mesh, DEFAULT_COLOR
from ODgen.Errors.InvalidParamError import InvalidParamError
from ODgen.Sampling.ViewSphere import subdivide_icosahedron

DIMENSIONS = {
    'cube': {'edge': 0.1},
    'cylinder': {'radius': 0.05, 'height': 0.1},
    'cone': {'radius': 0.05, 'height': 0.1},
    'torus': {'major_radius': 0.05, 'minor_radius': 0.015},
    'icosphere': {'radius': 0.05},
}

TESSELLATION = {
    'cube': {},
    'cylinder': {'segments': 24},
    'cone': {'segments': 24},
    'torus': {'major_segments': 32, 'minor_segments': 16},
    'icosphere': {'level': 2},
}


def resolve_params(kind: str, params: dict = None) -> dict:
    """
    Merges given parameters into the defaults of the primitive and validates them.

    :param kind: one of cube, cylinder, cone, torus, icosphere
    :param params: dimensions (meters) and tessellation counts
    :return: complete parameter dictionary
    """
    if kind not in DIMENSIONS:
        raise InvalidParamError("kind", kind, "one of {}".format(", ".join(DIMENSIONS)))
    resolved = dict(DIMENSIONS[kind], **TESSELLATION[kind])
    for name, value in (params or {}).items():
        if name not in resolved:
            raise InvalidParamError(name, value, "known parameter of {}".format(kind))
        resolved[name] = value

    for name in DIMENSIONS[kind]:
        if not resolved[name] > 0:
            raise InvalidParamError(name, resolved[name], "> 0")
    for name in TESSELLATION[kind]:
        value = resolved[name]
        if int(value) != value:
            raise InvalidParamError(name, value, "integer")
        if name == 'level':
            if not 0 <= value <= 6:
                raise InvalidParamError(name, value, "0 <= level <= 6")
        elif value < 3:
            raise InvalidParamError(name, value, ">= 3")
        resolved[name] = int(value)
    return resolved


def torus_radii(major_radius, minor_radius, major_segments, minor_segments):
    """
    Ring and tube radii of the tessellated torus.

    The tube polygon is scaled to the area of the circular tube section and the ring is pushed
    out so that the polygonal sectors keep the swept volume, hence the mesh encloses 2 pi^2 R r^2.
    """
    theta = 2 * math.pi / minor_segments
    tube = minor_radius * math.sqrt(theta / math.sin(theta))
    phi = 2 * math.pi / major_segments
    ring = major_radius * phi / math.sin(phi)
    return ring, tube


def primitive_radius(kind: str, params: dict = None) -> float:
    """
    Bounding radius of the primitive about its center.

    For the torus this is the radius of the tessellated mesh, ring + tube from torus_radii,
    which exceeds the nominal major_radius + minor_radius.
    """
    p = resolve_params(kind, params)
    if kind == 'cube':
        return math.sqrt(3) / 2 * p['edge']
    if kind in ('cylinder', 'cone'):
        return math.hypot(p['radius'], p['height'] / 2)
    if kind == 'torus':
        ring, tube = torus_radii(p['major_radius'], p['minor_radius'], p['major_segments'], p['minor_segments'])
        return ring + tube
    return p['radius']


def _cube(edge):
    h = edge / 2
    vertices = [((h if i & 1 else -h), (h if i & 2 else -h), (h if i & 4 else -h)) for i in range(8)]
    quads = [(0, 4, 6, 2), (1, 3, 7, 5), (0, 1, 5, 4), (2, 6, 7, 3), (0, 2, 3, 1), (4, 5, 7, 6)]
    triangles = []
    for a, b, c, d in quads:
        triangles += [(a, b, c), (a, c, d)]
    return vertices, triangles


def _ring(radius, z, segments):
    angles = 2 * np.pi * np.arange(segments) / segments
    return np.stack([radius * np.cos(angles), radius * np.sin(angles), np.full(segments, z)], axis=1)


def _cylinder(radius, height, segments):
    s = segments
    vertices = np.vstack([_ring(radius, -height / 2, s), _ring(radius, height / 2, s),
                          [(0.0, 0.0, -height / 2), (0.0, 0.0, height / 2)]])
    bottom, top = 2 * s, 2 * s + 1
    triangles = []
    for k in range(s):
        k1 = (k + 1) % s
        triangles += [(k, k1, s + k1), (k, s + k1, s + k)]
        triangles += [(top, s + k, s + k1), (bottom, k1, k)]
    return vertices, triangles


def _cone(radius, height, segments):
    s = segments
    vertices = np.vstack([_ring(radius, -height / 2, s), [(0.0, 0.0, height / 2), (0.0, 0.0, -height / 2)]])
    apex, bottom = s, s + 1
    triangles = []
    for k in range(s):
        k1 = (k + 1) % s
        triangles += [(k, k1, apex), (bottom, k1, k)]
    return vertices, triangles


def _torus(major_radius, minor_radius, major_segments, minor_segments):
    ring, tube = torus_radii(major_radius, minor_radius, major_segments, minor_segments)
    n, m = major_segments, minor_segments
    phi = 2 * np.pi * np.arange(n) / n
    theta = 2 * np.pi * np.arange(m) / m
    rho = ring + tube * np.cos(theta)
    vertices = np.stack([np.outer(np.cos(phi), rho), np.outer(np.sin(phi), rho),
                         np.tile(tube * np.sin(theta), (n, 1))], axis=2).reshape(-1, 3)
    triangles = []
    for i in range(n):
        i1 = (i + 1) % n
        for j in range(m):
            j1 = (j + 1) % m
            a, b, c, d = i * m + j, i1 * m + j, i1 * m + j1, i * m + j1
            triangles += [(a, b, c), (a, c, d)]
    return vertices, triangles


def _icosphere(radius, level):
    sphere = subdivide_icosahedron(level)
    return np.asarray(sphere.directions) * radius, sphere.faces


def make_primitive_mesh(kind: str, params: dict = None, color=DEFAULT_COLOR) -> Mesh:
    """
    Closed, outward-wound mesh of a primitive solid centered at the origin.

    :param kind: one of cube, cylinder, cone, torus, icosphere
    :param params: dimensions in meters and tessellation counts, defaults in DIMENSIONS and TESSELLATION
    :param color: uniform vertex color
    :return: Mesh with area-weighted vertex normals
    """
    p = resolve_params(kind, params)
    if kind == 'cube':
        vertices, triangles = _cube(p['edge'])
    elif kind == 'cylinder':
        vertices, triangles = _cylinder(p['radius'], p['height'], p['segments'])
    elif kind == 'cone':
        vertices, triangles = _cone(p['radius'], p['height'], p['segments'])
    elif kind == 'torus':
        vertices, triangles = _torus(p['major_radius'], p['minor_radius'], p['major_segments'], p['minor_segments'])
    else:
        vertices, triangles = _icosphere(p['radius'], p['level'])
    vertices = np.asarray(vertices, dtype=np.float64)
    colors = np.tile(np.asarray(color, dtype=np.float64), (len(vertices), 1))
    return Mesh(vertices, triangles, colors=colors)
