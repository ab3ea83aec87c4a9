import json
import os
import tempfile
import threading
import unittest

import numpy as np
from PIL import Image

from ODgen.Core.BBox import BBox2D
from ODgen.Errors.AnnotationParsingError import AnnotationParsingError
from ODgen.Errors.GenerationFailedError import GenerationFailedError
from ODgen.Errors.InvalidParamError import InvalidParamError
from ODgen.Errors.SchemaVersionMismatchError import SchemaVersionMismatchError
from ODgen.Generation.Annotations import AnnotationRecord, DatasetManifest, annotations_to_text, \
    read_annotations, write_annotations
from ODgen.Generation.Generator import ANNOTATION_FILE, SampleContext, generate_dataset, generate_samples, \
    synthesize_sample
from ODgen.Generation.Worker import run_parallel
from ODgen.Sampling.PoseGrid import PoseGridSpec

import Testing.objects_testing as objects


def golden_manifest(total: int = 1) -> DatasetManifest:
    return DatasetManifest({'note': 'golden'}, {'cube': total}, total, "1.0.0", 7, 64, 48,
                           [{'id': 1, 'name': 'cube'}])


def golden_record(index: int = 0) -> AnnotationRecord:
    return AnnotationRecord(index, "images/{:06d}.png".format(index), 1, (10, 12, 20, 16),
                            np.eye(3).ravel(), (0, 0, 0.5), "masks/{:06d}.png".format(index))


def read_files(directory: str) -> dict:
    contents = dict()
    for root, _, names in os.walk(directory):
        for name in names:
            path = os.path.join(root, name)
            with open(path, 'rb') as handle:
                contents[os.path.relpath(path, directory)] = handle.read()
    return contents


class TestAnnotations(unittest.TestCase):
    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.directory.name, ANNOTATION_FILE)

    def tearDown(self):
        self.directory.cleanup()

    def test_golden(self):
        with open(objects.data_path("annotations_golden.json")) as golden:
            expected = golden.read()
        self.assertEqual(annotations_to_text([golden_record()], golden_manifest()), expected)

        write_annotations([golden_record()], golden_manifest(), self.path)
        with open(self.path) as written:
            self.assertEqual(written.read(), expected)
        self.assertEqual(os.listdir(self.directory.name), [ANNOTATION_FILE])

    def test_read_golden(self):
        records, manifest = read_annotations(objects.data_path("annotations_golden.json"))
        self.assertEqual(records, [golden_record()])
        self.assertEqual(manifest, golden_manifest())
        self.assertEqual(records[0].box, BBox2D(10.0, 12.0, 30.0, 28.0))
        self.assertEqual(records[0].pose, objects.Pose(np.eye(3), (0.0, 0.0, 0.5)))

    def test_empty(self):
        write_annotations([], golden_manifest(0), self.path)
        records, manifest = read_annotations(self.path)
        self.assertEqual(records, [])
        self.assertEqual(manifest.total_images, 0)

    def test_many_records(self):
        rng = np.random.default_rng(4)
        records = []
        for index in range(1000):
            x, y = rng.uniform(0, 600, size=2)
            w, h = rng.uniform(1, 40, size=2)
            rotation = objects.random_rotation(rng)
            records.append(AnnotationRecord(index, "images/{:06d}.png".format(index), int(rng.integers(1, 4)),
                                            (x, y, w, h), rotation.ravel(), rng.uniform(-1, 1, size=3)))
        write_annotations(records, golden_manifest(1000), self.path)
        loaded, _ = read_annotations(self.path)
        self.assertEqual(loaded, records)
        with open(self.path) as written:
            self.assertEqual(len(json.load(written)['images']), 1000)

    def test_rewrite_identical(self):
        rng = np.random.default_rng(9)
        records = [AnnotationRecord(index, "images/{:06d}.png".format(index), 1,
                                    tuple(rng.uniform(1, 50, size=4)), objects.random_rotation(rng).ravel(),
                                    rng.uniform(-1, 1, size=3), "masks/{:06d}.png".format(index))
                   for index in range(20)]
        write_annotations(records, golden_manifest(20), self.path)
        with open(self.path, 'rb') as first:
            written = first.read()
        loaded, manifest = read_annotations(self.path)
        rewritten = os.path.join(self.directory.name, "rewritten.json")
        write_annotations(loaded, manifest, rewritten)
        with open(rewritten, 'rb') as second:
            self.assertEqual(second.read(), written)

    def test_schema_mismatch(self):
        manifest = golden_manifest()
        manifest.schema_version = 2
        write_annotations([golden_record()], manifest, self.path)
        with self.assertRaises(SchemaVersionMismatchError) as context:
            read_annotations(self.path)
        self.assertEqual(context.exception.found, 2)

    def test_malformed(self):
        with open(self.path, 'w') as broken:
            broken.write('{"manifest": {"schema_version": 1},\n  "annotations": [}')
        with self.assertRaises(AnnotationParsingError) as context:
            read_annotations(self.path)
        self.assertEqual(context.exception.line, 2)

        with open(self.path, 'w') as broken:
            json.dump({'annotations': []}, broken)
        with self.assertRaises(AnnotationParsingError):
            read_annotations(self.path)

        document = json.loads(annotations_to_text([golden_record()], golden_manifest()))
        del document['annotations'][0]['bbox']
        with open(self.path, 'w') as broken:
            json.dump(document, broken)
        with self.assertRaises(AnnotationParsingError):
            read_annotations(self.path)

        document['annotations'][0]['bbox'] = [0, 0, -1, 4]
        with open(self.path, 'w') as broken:
            json.dump(document, broken)
        with self.assertRaises(AnnotationParsingError):
            read_annotations(self.path)

    def test_invalid_record(self):
        with self.assertRaises(InvalidParamError):
            AnnotationRecord(0, "images/000000.png", 1, (0, 0, 0, 5), np.eye(3).ravel(), (0, 0, 1))


class TestWorker(unittest.TestCase):
    def test_order(self):
        self.assertEqual(run_parallel(lambda index: index * index, [5, 3, 1, 4], jobs=1), [1, 9, 16, 25])
        self.assertEqual(run_parallel(lambda index: index * index, range(50), jobs=4),
                         [index * index for index in range(50)])

    def test_threads(self):
        names = set()
        lock = threading.Lock()

        def task(index):
            with lock:
                names.add(threading.current_thread().name)
            return index

        self.assertEqual(run_parallel(task, range(20), jobs=3), list(range(20)))
        self.assertNotIn(threading.main_thread().name, names)

    def test_error(self):
        def task(index):
            if index in (7, 12):
                raise ValueError(index)
            return index

        with self.assertRaises(ValueError):
            run_parallel(task, range(20), jobs=1)
        with self.assertRaises(ValueError) as context:
            run_parallel(task, range(20), jobs=4)
        self.assertEqual(context.exception.args, (7,))


class TestSynthesis(unittest.TestCase):
    def setUp(self):
        self.ctx = SampleContext.from_config(objects.small_config())

    def test_round_robin(self):
        for index in range(6):
            sample, layer = synthesize_sample(index, self.ctx)
            self.assertEqual(sample.class_id, index % 2 + 1)
            self.assertEqual(sample.provenance['index'], index)
            self.assertEqual(sample.provenance['master_seed'], 3)
            self.assertIn(sample.pose, self.ctx.poses)
            self.assertTrue(layer.is_consistent())

    def test_independent_of_jobs(self):
        first = generate_samples(self.ctx, range(8), jobs=1)
        second = generate_samples(self.ctx, reversed(range(8)), jobs=4)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.image, b.image)
            self.assertEqual(a.bbox, b.bbox)
            self.assertEqual(a.pose, b.pose)

    def test_sample_count(self):
        self.assertEqual(self.ctx.sample_count, 10)
        exhaustive = SampleContext.from_config(objects.small_config(exhaustive=True))
        self.assertEqual(exhaustive.sample_count, 2 * 48)

    def test_too_close(self):
        grid = PoseGridSpec(subdivision_level=0, in_plane_count=1, distance_min=0.1, distance_max=0.1,
                            scale_levels=1)
        ctx = SampleContext.from_config(objects.small_config(pose_grid=grid))
        with self.assertRaises(GenerationFailedError) as context:
            synthesize_sample(0, ctx)
        self.assertEqual(context.exception.attempts, 32)

        ctx = SampleContext.from_config(objects.small_config(pose_grid=grid, exhaustive=True))
        with self.assertRaises(GenerationFailedError) as context:
            synthesize_sample(0, ctx)
        self.assertEqual(context.exception.attempts, 1)


class TestGenerateDataset(unittest.TestCase):
    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.directory.cleanup()

    def output(self, name: str) -> str:
        return os.path.join(self.directory.name, name)

    def test_layout(self):
        config = objects.small_config(self.output("run"))
        manifest = generate_dataset(config)
        self.assertEqual(manifest.per_class_counts, {'cube': 5, 'ball': 5})
        self.assertEqual(manifest.total_images, 10)
        self.assertEqual(manifest.master_seed, 3)

        records, loaded = read_annotations(self.output(os.path.join("run", ANNOTATION_FILE)))
        self.assertEqual(loaded, manifest)
        self.assertEqual([record.image_id for record in records], list(range(10)))
        self.assertNotIn('output_dir', manifest.config)
        for record in records:
            with Image.open(self.output(os.path.join("run", record.file_name))) as image:
                self.assertEqual(image.size, (96, 72))
                self.assertEqual(image.mode, 'RGB')
            with Image.open(self.output(os.path.join("run", record.mask_file))) as mask:
                covered = np.asarray(mask) > 0
            self.assertEqual(list(record.bbox), BBox2D.from_mask(covered).to_xywh())
        self.assertFalse(os.path.exists(self.output(os.path.join("run", "layers"))))

    def test_reproducible(self):
        generate_dataset(objects.small_config(self.output("first")))
        generate_dataset(objects.small_config(self.output("second")), jobs=4)
        self.assertEqual(read_files(self.output("first")), read_files(self.output("second")))

        generate_dataset(objects.small_config(self.output("other"), master_seed=4))
        self.assertNotEqual(read_files(self.output("first")), read_files(self.output("other")))

    def test_without_masks(self):
        generate_dataset(objects.quiet_config(self.output("run"), emit_masks=False, debug_layers=True,
                                              sample_count=4))
        records, _ = read_annotations(self.output(os.path.join("run", ANNOTATION_FILE)))
        self.assertTrue(all(record.mask_file is None for record in records))
        self.assertFalse(os.path.exists(self.output(os.path.join("run", "masks"))))
        layers = sorted(os.listdir(self.output(os.path.join("run", "layers"))))
        self.assertEqual(layers[:3], ["000000_alpha.png", "000000_depth.png", "000000_rgb.png"])
        self.assertEqual(len(layers), 12)

    def test_exhaustive(self):
        manifest = generate_dataset(objects.small_config(self.output("run"), exhaustive=True), jobs=2)
        self.assertEqual(manifest.per_class_counts, {'cube': 48, 'ball': 48})
        records, _ = read_annotations(self.output(os.path.join("run", ANNOTATION_FILE)))
        ctx = SampleContext.from_config(objects.small_config())
        cube_poses = [record.pose for record in records if record.category_id == 1]
        for pose, expected in zip(cube_poses, ctx.poses):
            np.testing.assert_allclose(pose.rotation, expected.rotation)
            np.testing.assert_allclose(pose.translation, expected.translation)
