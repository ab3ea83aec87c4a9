import os
import tempfile
import unittest

import numpy as np

from ODgen.Core.Camera import CameraIntrinsics, Pose, vertex_bbox
from ODgen.Core.Mesh import Mesh
from ODgen.Core.Primitives import make_primitive_mesh
from ODgen.Errors.BehindCameraError import BehindCameraError
from ODgen.Errors.InvalidParamError import InvalidParamError
from ODgen.Errors.NonUnitDirectionError import NonUnitDirectionError
from ODgen.Rendering.Phong import JitterSpec, LightSpec, PhongMaterial, perturb_params, phong_shade, shade
from ODgen.Rendering.Rasterizer import RenderLayer, edge_function, is_top_left, rasterize, render
from ODgen.Sampling.PoseGrid import look_at_pose

import Testing.objects_testing as objects


def unit(rng: np.random.Generator) -> np.ndarray:
    vector = rng.normal(size=3)
    return vector / np.linalg.norm(vector)


def brute_force_depth(screen, depth, triangles, width, height) -> np.ndarray:
    """
    Minimum perspective-correct depth over all triangles covering each pixel center.
    """
    result = np.full((height, width), np.inf)
    for y in range(height):
        for x in range(width):
            p = np.array([x + 0.5, y + 0.5])
            for triangle in triangles:
                a, b, c = (screen[k] for k in triangle)
                matrix = np.array([[a[0] - c[0], b[0] - c[0]], [a[1] - c[1], b[1] - c[1]]])
                if abs(np.linalg.det(matrix)) < 1e-12:
                    continue
                l0, l1 = np.linalg.solve(matrix, p - c)
                lam = np.array([l0, l1, 1.0 - l0 - l1])
                if (lam < 0).any():
                    continue
                z = 1.0 / np.sum(lam / depth[list(triangle)])
                result[y, x] = min(result[y, x], z)
    return result


class TestPhong(unittest.TestCase):
    def test_unlit(self):
        material = PhongMaterial((0.1, 0.2, 0.3), (0.6, 0.6, 0.6), (0.3, 0.3, 0.3), 8.0)
        light = LightSpec((0.0, 0.0, -1.0), (1.0, 1.0, 1.0), (0.5, 0.5, 0.5))
        result = phong_shade((0.0, 0.0, 1.0), (0.0, 0.0, 1.0), light, material, (1.0, 0.5, 1.0))
        np.testing.assert_allclose(result, [0.1 * 0.5 * 1.0, 0.2 * 0.5 * 0.5, 0.3 * 0.5 * 1.0])

    def test_mirror(self):
        material = PhongMaterial((0.1, 0.1, 0.1), (0.6, 0.6, 0.6), (0.3, 0.3, 0.3), 16.0)
        light = LightSpec((0.0, 0.0, 1.0), (1.0, 1.0, 1.0), (1.0, 1.0, 1.0))
        result = phong_shade((0.0, 0.0, 1.0), (0.0, 0.0, 1.0), light, material, (1.0, 1.0, 1.0))
        np.testing.assert_allclose(result, [1.0, 1.0, 1.0])

    def test_clamped(self):
        material = PhongMaterial((1.0, 1.0, 1.0), (1.0, 1.0, 1.0), (1.0, 1.0, 1.0), 1.0)
        light = LightSpec((0.0, 0.0, 1.0))
        result = phong_shade((0.0, 0.0, 1.0), (0.0, 0.0, 1.0), light, material, (1.0, 1.0, 1.0))
        np.testing.assert_array_equal(result, [1.0, 1.0, 1.0])

    def test_rotation_equivariance(self):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            material = PhongMaterial(rng.random(3), rng.random(3), rng.random(3), rng.uniform(1.0, 64.0))
            normal, view, to_light = unit(rng), unit(rng), unit(rng)
            base = rng.random(3)
            light = LightSpec(to_light, rng.random(3), rng.random(3))
            rotation = objects.random_rotation(rng)
            rotated = LightSpec(rotation @ to_light, light.color, light.ambient_color)
            expected = phong_shade(normal, view, light, material, base)
            result = phong_shade(rotation @ normal, rotation @ view, rotated, material, base)
            np.testing.assert_allclose(result, expected, rtol=0, atol=1e-12)

    def test_vectorized(self):
        rng = np.random.default_rng(6)
        normals = np.array([unit(rng) for _ in range(20)])
        views = np.array([unit(rng) for _ in range(20)])
        colors = rng.random((20, 3))
        batch = shade(normals, views, objects.light, objects.material, colors)
        for k in range(20):
            np.testing.assert_allclose(batch[k], phong_shade(normals[k], views[k], objects.light,
                                                             objects.material, colors[k]))

    def test_invalid(self):
        with self.assertRaises(InvalidParamError):
            PhongMaterial(k_a=(1.5, 0.0, 0.0))
        with self.assertRaises(InvalidParamError):
            PhongMaterial(shininess=0.0)
        with self.assertRaises(NonUnitDirectionError):
            LightSpec((0.0, 0.0, 2.0))
        with self.assertRaises(InvalidParamError):
            JitterSpec(material_jitter=-0.1)


class TestPerturb(unittest.TestCase):
    def test_zero_jitter(self):
        rng = np.random.default_rng(0)
        material, light = perturb_params(objects.material, objects.light, JitterSpec.none(), rng)
        self.assertEqual(material, objects.material)
        self.assertEqual(light, objects.light)

    def test_material_range(self):
        rng = np.random.default_rng(1)
        reference = PhongMaterial((0.3, 0.5, 0.95), (0.7, 0.1, 0.0), (0.2, 0.2, 0.2), 16.0)
        jitter = JitterSpec(0.1, 0.1, 15.0)
        for _ in range(1000):
            material, light = perturb_params(reference, objects.light, jitter, rng)
            for name in ('k_a', 'k_d', 'k_s'):
                value, base = np.array(getattr(material, name)), np.array(getattr(reference, name))
                self.assertTrue((value >= np.minimum(0.9 * base, 1.0) - 1e-12).all())
                self.assertTrue((value <= np.minimum(1.1 * base, 1.0) + 1e-12).all())
            angle = np.degrees(np.arccos(np.clip(np.dot(light.direction, objects.light.direction), -1, 1)))
            self.assertLessEqual(angle, 15.0 + 1e-6)
            self.assertAlmostEqual(np.linalg.norm(light.direction), 1.0)

    def test_deterministic(self):
        jitter = JitterSpec(0.2, 0.2, 30.0)
        first = perturb_params(objects.material, objects.light, jitter, np.random.default_rng(9))
        second = perturb_params(objects.material, objects.light, jitter, np.random.default_rng(9))
        self.assertEqual(first, second)

    def test_draw_count_independent_of_jitter(self):
        first, second = np.random.default_rng(3), np.random.default_rng(3)
        perturb_params(objects.material, objects.light, JitterSpec.none(), first)
        perturb_params(objects.material, objects.light, JitterSpec(0.3, 0.3, 40.0), second)
        self.assertEqual(first.random(), second.random())


class TestRasterizer(unittest.TestCase):
    def test_triangle_area(self):
        K = CameraIntrinsics(128.0, 128.0, 128.0, 128.0, 256, 256)
        rng = np.random.default_rng(2)
        checked = 0
        while checked < 50:
            screen = rng.uniform(0, 256, size=(3, 2))
            area = abs(edge_function(screen[0], screen[1], screen[2][0], screen[2][1])) / 2
            if area < 2000:
                continue
            vertices = np.column_stack([(screen[:, 0] - K.cx) / K.fx, (screen[:, 1] - K.cy) / K.fy, np.ones(3)])
            layer = render(Mesh(vertices, [[0, 1, 2]]), objects.identity, K, objects.material, objects.light)
            self.assertLess(abs(layer.mask.sum() - area) / area, 0.02)
            checked += 1

    def test_frontal_triangle(self):
        vertices = [[-0.3, -0.3, 1.0], [0.3, -0.3, 1.0], [0.0, 0.3, 1.0]]
        layer = render(Mesh(vertices, [[0, 1, 2]]), objects.identity, objects.K100, objects.material,
                       objects.light)
        area = 0.5 * 60 * 60
        self.assertLess(abs(layer.mask.sum() - area) / area, 0.02)
        self.assertTrue(layer.mask[50, 50])
        self.assertAlmostEqual(float(layer.depth[50, 50]), 1.0)

    def test_empty_mesh(self):
        layer = render(objects.empty, objects.identity, objects.K100, objects.material, objects.light)
        self.assertFalse(layer.alpha.any())
        self.assertTrue(np.isinf(layer.depth).all())
        self.assertIsNone(layer.bbox())

    def test_z_order(self):
        near = [[-0.2, -0.2, 1.0], [0.2, -0.2, 1.0], [0.0, 0.2, 1.0]]
        far = [[-0.6, -0.6, 2.0], [0.6, -0.6, 2.0], [0.0, 0.6, 2.0]]
        colors = [[1.0, 0.0, 0.0]] * 3 + [[0.0, 1.0, 0.0]] * 3
        for triangles in ([[0, 1, 2], [3, 4, 5]], [[3, 4, 5], [0, 1, 2]]):
            mesh = Mesh(near + far, triangles, colors=colors)
            layer = render(mesh, objects.identity, objects.K100, objects.flat_material, objects.light)
            near_only = render(Mesh(near, [[0, 1, 2]]), objects.identity, objects.K100, objects.flat_material,
                               objects.light).mask
            self.assertTrue(near_only.any())
            np.testing.assert_allclose(layer.depth[near_only], 1.0)
            self.assertTrue((layer.rgb[near_only] == [255, 0, 0]).all())
            outside = layer.mask & ~near_only
            self.assertTrue(outside.any())
            np.testing.assert_allclose(layer.depth[outside], 2.0)
            self.assertTrue((layer.rgb[outside] == [0, 255, 0]).all())

    def test_depth_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            count = 6
            z = rng.uniform(1.0, 3.0, size=count * 3)
            xy = rng.uniform(-0.6, 0.6, size=(count * 3, 2)) * z[:, None]
            vertices = np.column_stack([xy, z])
            triangles = np.arange(count * 3).reshape(count, 3)
            screen = np.column_stack([objects.K32.fx * xy[:, 0] / z + objects.K32.cx,
                                      objects.K32.fy * xy[:, 1] / z + objects.K32.cy])
            zbuffer, _, _ = rasterize(screen, z, triangles, 32, 32)
            expected = brute_force_depth(screen, z, triangles, 32, 32)
            np.testing.assert_array_equal(np.isinf(zbuffer), np.isinf(expected))
            finite = np.isfinite(expected)
            np.testing.assert_allclose(zbuffer[finite], expected[finite], rtol=1e-9)

            layer = render(Mesh(vertices, triangles), objects.identity, objects.K32, objects.material,
                           objects.light)
            np.testing.assert_allclose(layer.depth[finite], expected[finite], rtol=1e-9)

    def test_shared_edge(self):
        # two triangles of a square share the diagonal; every pixel is covered exactly once
        screen = np.array([[2.0, 2.0], [10.0, 2.0], [10.0, 10.0], [2.0, 10.0]])
        depth = np.ones(4)
        first, ids_first, _ = rasterize(screen, depth, np.array([[0, 1, 2]]), 12, 12)
        second, ids_second, _ = rasterize(screen, depth, np.array([[0, 2, 3]]), 12, 12)
        covered_first, covered_second = np.isfinite(first), np.isfinite(second)
        self.assertFalse((covered_first & covered_second).any())
        self.assertEqual(int((covered_first | covered_second).sum()), 64)

    def test_top_left(self):
        self.assertTrue(is_top_left((0.0, 1.0), (0.0, 0.0)))
        self.assertTrue(is_top_left((0.0, 0.0), (1.0, 0.0)))
        self.assertFalse(is_top_left((1.0, 0.0), (0.0, 0.0)))
        self.assertFalse(is_top_left((0.0, 0.0), (0.0, 1.0)))

    def test_mask_within_vertex_bbox(self):
        rng = np.random.default_rng(8)
        meshes = [objects.small_cube, objects.small_ball, make_primitive_mesh('torus'),
                  make_primitive_mesh('cone'), make_primitive_mesh('cylinder')]
        checked = 0
        for _ in range(100):
            mesh = meshes[int(rng.integers(len(meshes)))]
            pose = look_at_pose(unit(rng), rng.uniform(0, 2 * np.pi), rng.uniform(0.2, 1.0))
            pose = Pose(pose.rotation, pose.translation + np.append(rng.uniform(-0.1, 0.1, size=2), 0.0))
            layer = render(mesh, pose, objects.K_small, objects.material, objects.light)
            box = layer.bbox()
            if box is None:
                continue
            self.assertTrue(vertex_bbox(mesh, pose, objects.K_small).expand(1).contains(box))
            self.assertTrue(layer.is_consistent())
            checked += 1
        self.assertGreater(checked, 90)

    def test_backface_culling(self):
        pose = look_at_pose(np.array([0.3, 0.5, 0.81]) / np.linalg.norm([0.3, 0.5, 0.81]), 0.4, 0.5)
        both = render(objects.small_cube, pose, objects.K_small, objects.material, objects.light)
        front = render(objects.small_cube, pose, objects.K_small, objects.material, objects.light,
                       backface_culling=True)
        np.testing.assert_array_equal(both.mask, front.mask)
        np.testing.assert_allclose(both.depth[both.mask], front.depth[front.mask])

    def test_deterministic(self):
        pose = look_at_pose((0.0, 0.6, 0.8), 1.0, 0.5)
        first = render(objects.small_ball, pose, objects.K_small, objects.material, objects.light)
        second = render(objects.small_ball, pose, objects.K_small, objects.material, objects.light)
        np.testing.assert_array_equal(first.rgb, second.rgb)
        np.testing.assert_array_equal(first.alpha, second.alpha)
        np.testing.assert_array_equal(first.depth, second.depth)

    def test_behind_camera(self):
        with self.assertRaises(BehindCameraError):
            render(objects.unit_cube, Pose(np.eye(3), (0.0, 0.0, 0.2)), objects.K100,
                   objects.material, objects.light)

    def test_save(self):
        layer = render(objects.small_cube, look_at_pose((0.0, 0.6, 0.8), 0.0, 0.5), objects.K_small,
                       objects.material, objects.light)
        with tempfile.TemporaryDirectory() as directory:
            prefix = os.path.join(directory, "000000")
            layer.save(prefix)
            for suffix in ("_rgb.png", "_alpha.png", "_depth.png"):
                self.assertTrue(os.path.exists(prefix + suffix))

    def test_empty_layer(self):
        layer = RenderLayer.empty(4, 3)
        self.assertEqual((layer.width, layer.height), (4, 3))
        self.assertTrue(layer.is_consistent())
