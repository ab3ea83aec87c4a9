import math
from dataclasses import dataclass

import numpy as np

from ODgen.Errors.InvalidParamError import InvalidParamError
from ODgen.Errors.NonUnitDirectionError import NonUnitDirectionError

DEFAULT_LIGHT_DIRECTION = tuple(np.array([0.3, -0.5, -0.8]) / np.linalg.norm([0.3, -0.5, -0.8]))


def _rgb(name, value) -> tuple:
    value = np.broadcast_to(np.asarray(value, dtype=np.float64), (3,))
    if value.min() < 0.0 or value.max() > 1.0:
        raise InvalidParamError(name, value.tolist(), "within [0, 1]")
    return tuple(float(c) for c in value)


@dataclass(frozen=True)
class PhongMaterial:
    k_a: tuple = (0.3, 0.3, 0.3)
    k_d: tuple = (0.7, 0.7, 0.7)
    k_s: tuple = (0.2, 0.2, 0.2)
    shininess: float = 16.0

    def __post_init__(self):
        for name in ('k_a', 'k_d', 'k_s'):
            object.__setattr__(self, name, _rgb(name, getattr(self, name)))
        if not self.shininess > 0:
            raise InvalidParamError("shininess", self.shininess, "> 0")


@dataclass(frozen=True)
class LightSpec:
    """
    Directional light; `direction` points from the surface toward the light, in the camera frame.
    """
    direction: tuple = DEFAULT_LIGHT_DIRECTION
    color: tuple = (1.0, 1.0, 1.0)
    ambient_color: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        direction = np.asarray(self.direction, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(direction) - 1.0) > 1e-6:
            raise NonUnitDirectionError(direction)
        object.__setattr__(self, 'direction', tuple(float(c) for c in direction))
        object.__setattr__(self, 'color', _rgb('color', self.color))
        object.__setattr__(self, 'ambient_color', _rgb('ambient_color', self.ambient_color))


@dataclass(frozen=True)
class JitterSpec:
    material_jitter: float = 0.1
    light_color_jitter: float = 0.1
    light_cone_angle: float = 15.0

    def __post_init__(self):
        for name in ('material_jitter', 'light_color_jitter', 'light_cone_angle'):
            if getattr(self, name) < 0:
                raise InvalidParamError(name, getattr(self, name), ">= 0")

    @staticmethod
    def none() -> 'JitterSpec':
        return JitterSpec(0.0, 0.0, 0.0)


def shade(normals, views, light: LightSpec, material: PhongMaterial, base_colors) -> np.ndarray:
    """
    Phong illumination for arrays of surface points.

    I = k_a * ambient * base + k_d * max(N.L, 0) * light * base + k_s * max(R.V, 0)^alpha * light,
    with R = 2 (N.L) N - L. The specular term is dropped where N.L <= 0.

    :param normals: (..., 3) unit normals
    :param views: (..., 3) unit vectors toward the camera
    :param light: light specification
    :param material: material coefficients
    :param base_colors: (..., 3) surface colors
    :return: (..., 3) intensities clamped to [0, 1]
    """
    normals = np.asarray(normals, dtype=np.float64)
    views = np.asarray(views, dtype=np.float64)
    base_colors = np.asarray(base_colors, dtype=np.float64)
    to_light = np.asarray(light.direction)
    light_color = np.asarray(light.color)

    n_dot_l = normals @ to_light
    reflected = 2 * n_dot_l[..., None] * normals - to_light
    r_dot_v = np.maximum(np.sum(reflected * views, axis=-1), 0.0)
    lit = n_dot_l > 0
    specular = np.where(lit, r_dot_v ** material.shininess, 0.0)
    diffuse = np.maximum(n_dot_l, 0.0)

    intensity = np.asarray(material.k_a) * np.asarray(light.ambient_color) * base_colors \
        + np.asarray(material.k_d) * diffuse[..., None] * light_color * base_colors \
        + np.asarray(material.k_s) * specular[..., None] * light_color
    return np.clip(intensity, 0.0, 1.0)


def phong_shade(normal, view, light: LightSpec, material: PhongMaterial, base_color) -> np.ndarray:
    return shade(np.asarray(normal, dtype=np.float64).reshape(3), np.asarray(view, dtype=np.float64).reshape(3),
                 light, material, np.asarray(base_color, dtype=np.float64).reshape(3))


def _sample_cone(axis: np.ndarray, angle_degrees: float, rng: np.random.Generator) -> np.ndarray:
    """
    Direction drawn uniformly from the spherical cap of the given half-angle around axis.
    """
    u, v = rng.random(2)
    cos_alpha = 1.0 - u * (1.0 - math.cos(math.radians(angle_degrees)))
    sin_alpha = math.sqrt(max(0.0, 1.0 - cos_alpha * cos_alpha))
    helper = np.array([0.0, 1.0, 0.0]) if abs(axis[0]) > 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    phi = 2 * math.pi * v
    return cos_alpha * axis + sin_alpha * (math.cos(phi) * e1 + math.sin(phi) * e2)


def perturb_params(material: PhongMaterial, light: LightSpec, jitter: JitterSpec,
                   rng: np.random.Generator) -> tuple:
    """
    Randomly perturbed copies of the material and light.

    Coefficients are scaled by factors from U[1 - j, 1 + j] and clamped to [0, 1], the light
    color is shifted by U[-h, h] per channel and clamped, the light direction is drawn uniformly
    from the cone around the given one. The number of draws does not depend on the jitter values.

    :param material: reference material
    :param light: reference light
    :param jitter: perturbation magnitudes
    :param rng: random stream
    :return: (PhongMaterial, LightSpec)
    """
    j = jitter.material_jitter
    factors = rng.uniform(1.0 - j, 1.0 + j, size=(3, 3))
    coefficients = [np.clip(np.asarray(getattr(material, name)) * factor, 0.0, 1.0)
                    for name, factor in zip(('k_a', 'k_d', 'k_s'), factors)]
    h = jitter.light_color_jitter
    color = np.clip(np.asarray(light.color) + rng.uniform(-h, h, size=3), 0.0, 1.0)
    direction = _sample_cone(np.asarray(light.direction), jitter.light_cone_angle, rng)

    return PhongMaterial(*coefficients, shininess=material.shininess), \
        LightSpec(direction, color, light.ambient_color)
