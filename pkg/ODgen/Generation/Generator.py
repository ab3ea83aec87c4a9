import logging
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

import ODgen
from ODgen.Compositing.Background import BackgroundPool
from ODgen.Compositing.Compositor import CompositeSample, compose_sample
from ODgen.Core.Camera import CameraIntrinsics, Pose, project_points
from ODgen.Core.Mesh import Mesh
from ODgen.Errors.BehindCameraError import BehindCameraError
from ODgen.Errors.GenerationFailedError import GenerationFailedError
from ODgen.Errors.NoValidPlacementError import NoValidPlacementError
from ODgen.Generation.Annotations import AnnotationRecord, DatasetManifest, write_annotations
from ODgen.Generation.Config import GenerationConfig
from ODgen.Generation.Worker import run_parallel
from ODgen.Rendering.Phong import perturb_params
from ODgen.Rendering.Rasterizer import RenderLayer, render
from ODgen.Sampling.PoseGrid import enumerate_poses
from ODgen.utils import substream

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 32
ANNOTATION_FILE = "annotations.json"


@dataclass
class SampleContext:
    """
    Read-only state shared by all samples of one dataset.
    """
    config: GenerationConfig
    meshes: list
    poses: list
    pool: BackgroundPool

    @staticmethod
    def from_config(config: GenerationConfig) -> 'SampleContext':
        meshes = [spec.load() for spec in config.objects]
        poses = enumerate_poses(config.pose_grid)
        pool = config.backgrounds.build(config.camera.width, config.camera.height)
        pool.check_size(config.camera.width, config.camera.height, config.compose.rotations)
        logger.info("%d classes, %d grid poses, %s", len(meshes), len(poses), pool)
        return SampleContext(config, meshes, poses, pool)

    @property
    def sample_count(self) -> int:
        if self.config.exhaustive:
            return len(self.meshes) * len(self.poses)
        return self.config.sample_count


def check_in_frame(mesh: Mesh, pose: Pose, camera: CameraIntrinsics):
    """
    The render layer must hold the whole object, otherwise its mask would be truncated before placement.
    """
    uvz = project_points(camera, pose, mesh.vertices)
    if uvz[:, 0].min() < 0 or uvz[:, 1].min() < 0 or uvz[:, 0].max() > camera.width or \
            uvz[:, 1].max() > camera.height:
        raise NoValidPlacementError("object extends beyond the {}x{} render frame".format(camera.width,
                                                                                         camera.height))


def synthesize_sample(index: int, ctx: SampleContext) -> tuple:
    """
    Renders and composes sample `index`.

    The class is chosen round-robin. The pose is drawn uniformly from the grid with the sample's
    own random stream (in exhaustive mode it is the next grid pose of that class). When the object
    cannot be placed or reaches behind the camera, a new pose is drawn, up to MAX_ATTEMPTS times.

    :param index: sample index
    :param ctx: shared dataset state
    :return: (CompositeSample, RenderLayer)
    """
    config = ctx.config
    class_index = index % len(ctx.meshes)
    spec = config.objects[class_index]
    rng = substream(config.master_seed, index)

    reason = None
    for attempt in range(1, MAX_ATTEMPTS + 1):
        if config.exhaustive:
            pose = ctx.poses[index // len(ctx.meshes)]
        else:
            pose = ctx.poses[int(rng.integers(len(ctx.poses)))]
        material, light = perturb_params(config.material, config.light, config.jitter, rng)
        try:
            if config.compose.placement == 'full_inside':
                check_in_frame(ctx.meshes[class_index], pose, config.camera)
            layer = render(ctx.meshes[class_index], pose, config.camera, material, light, config.backface_culling)
            sample = compose_sample(layer, ctx.pool, config.compose, spec.class_id, rng, pose,
                                    {'master_seed': config.master_seed, 'index': index, 'attempt': attempt})
            return sample, layer
        except (NoValidPlacementError, BehindCameraError) as error:
            reason = str(error).splitlines()[-1]
            if config.exhaustive:
                raise GenerationFailedError(index, attempt, reason)
            logger.debug("sample %d attempt %d redraws the pose: %s", index, attempt, reason)

    logger.warning("sample %d: giving up after %d poses", index, MAX_ATTEMPTS)
    raise GenerationFailedError(index, MAX_ATTEMPTS, reason)


def write_sample(index: int, sample: CompositeSample, layer: RenderLayer, config: GenerationConfig) -> AnnotationRecord:
    """
    Writes image (and mask, debug layers) of one sample and returns its annotation.
    """
    file_name = "images/{:06d}.png".format(index)
    Image.fromarray(sample.image, 'RGB').save(os.path.join(config.output_dir, file_name))

    mask_file = None
    if config.emit_masks:
        mask_file = "masks/{:06d}.png".format(index)
        mask = sample.mask.astype(np.uint8) * 255
        Image.fromarray(mask, 'L').save(os.path.join(config.output_dir, mask_file))

    if config.debug_layers:
        layer.save(os.path.join(config.output_dir, "layers", "{:06d}".format(index)))

    pose = sample.pose.to_dict()
    return AnnotationRecord(index, file_name, sample.class_id, sample.bbox.to_xywh(),
                            pose['rotation'], pose['translation'], mask_file)


def generate_samples(ctx: SampleContext, indices, jobs: int = 1) -> list:
    """
    In-memory samples for the given indices, ordered by index.

    :return: list of CompositeSample
    """
    return [sample for sample, _ in run_parallel(lambda index: synthesize_sample(index, ctx), indices, jobs)]


def generate_dataset(config: GenerationConfig, jobs: int = 1) -> DatasetManifest:
    """
    Generates the whole dataset into config.output_dir.

    Layout: images/NNNNNN.png, masks/NNNNNN.png (if enabled), layers/ (if debug_layers) and a
    single annotations.json. The output is independent of the number of jobs.

    :param config: GenerationConfig
    :param jobs: number of worker threads
    :return: DatasetManifest
    """
    ctx = SampleContext.from_config(config)
    for directory in ("images", "masks" if config.emit_masks else None, "layers" if config.debug_layers else None):
        if directory is not None:
            os.makedirs(os.path.join(config.output_dir, directory), exist_ok=True)

    total = ctx.sample_count
    progress_step = max(1, total // 10)

    def task(index):
        sample, layer = synthesize_sample(index, ctx)
        record = write_sample(index, sample, layer, config)
        if (index + 1) % progress_step == 0:
            logger.info("generated sample %d of %d", index + 1, total)
        return record

    records = run_parallel(task, range(total), jobs)

    names = {spec.class_id: spec.class_name for spec in config.objects}
    per_class_counts = {spec.class_name: 0 for spec in config.objects}
    for record in records:
        per_class_counts[names[record.category_id]] += 1

    manifest = DatasetManifest(config.to_dict(), per_class_counts, len(records), ODgen.__version__,
                               config.master_seed, config.camera.width, config.camera.height, config.categories)
    path = os.path.join(config.output_dir, ANNOTATION_FILE)
    write_annotations(records, manifest, path)
    logger.info("wrote %d images and %s", len(records), path)
    return manifest
