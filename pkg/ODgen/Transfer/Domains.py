from dataclasses import dataclass, replace

import numpy as np

from ODgen.Compositing.Compositor import ComposeSpec, alpha_composite, shift_layer
from ODgen.Core.Camera import CameraIntrinsics
from ODgen.Errors.InvalidParamError import InvalidParamError
from ODgen.Generation.Config import BACKGROUND_MODES, BackgroundSpec, GenerationConfig
from ODgen.Generation.Generator import SampleContext, generate_samples
from ODgen.Rendering.Phong import JitterSpec
from ODgen.Rendering.Rasterizer import render


@dataclass(frozen=True)
class DomainSpec:
    """
    Pipeline toggles that define an image domain of the transfer experiments.
    """
    name: str
    light_jitter: bool = True
    noise_sigma_range: tuple = (0.0, 8.0)
    blur_sigma_range: tuple = (0.5, 2.0)
    background_mode: str = 'procedural'
    channel_swap: bool = True

    def __post_init__(self):
        spec = ComposeSpec(noise_sigma_range=self.noise_sigma_range, blur_sigma_range=self.blur_sigma_range)
        object.__setattr__(self, 'noise_sigma_range', spec.noise_sigma_range)
        object.__setattr__(self, 'blur_sigma_range', spec.blur_sigma_range)
        if self.background_mode not in BACKGROUND_MODES:
            raise InvalidParamError("background_mode", self.background_mode,
                                    "one of {}".format(", ".join(BACKGROUND_MODES)))

    @staticmethod
    def real_proxy() -> 'DomainSpec':
        return DomainSpec('real_proxy')

    @staticmethod
    def plain_synthetic() -> 'DomainSpec':
        return DomainSpec('plain_synthetic', light_jitter=False, noise_sigma_range=(0.0, 0.0),
                          blur_sigma_range=(0.0, 0.0), background_mode='constant', channel_swap=False)

    def generation_config(self, base: GenerationConfig, crop_size: int, focal_length: float, count: int,
                          master_seed: int, background_count: int) -> GenerationConfig:
        """
        Generation settings producing crop_size x crop_size images of this domain from the
        objects, poses and materials of the base configuration.
        """
        half = crop_size / 2.0
        camera = CameraIntrinsics(focal_length, focal_length, half, half, crop_size, crop_size)
        compose = replace(base.compose, noise_sigma_range=self.noise_sigma_range,
                          blur_sigma_range=self.blur_sigma_range, channel_swap=self.channel_swap,
                          placement='full_inside', min_visibility=1.0)
        backgrounds = BackgroundSpec(self.background_mode, base.backgrounds.path, background_count, master_seed)
        return replace(base, camera=camera, compose=compose, backgrounds=backgrounds,
                       jitter=base.jitter if self.light_jitter else JitterSpec.none(), sample_count=count,
                       master_seed=master_seed, exhaustive=False, emit_masks=False, debug_layers=False)


@dataclass
class CropDataset:
    images: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.labels)


def class_index(ctx: SampleContext, class_id: int) -> int:
    return [spec.class_id for spec in ctx.config.objects].index(class_id)


def build_crops(ctx: SampleContext, indices, jobs: int = 1) -> CropDataset:
    """
    Labelled images of the given sample indices; labels are positions in the object list.
    """
    samples = generate_samples(ctx, indices, jobs)
    images = np.stack([sample.image for sample in samples])
    labels = np.array([class_index(ctx, sample.class_id) for sample in samples], dtype=np.int64)
    return CropDataset(images, labels)


def plain_counterpart(sample, ctx: SampleContext) -> np.ndarray:
    """
    The object of `sample` rendered with the unperturbed material and light and pasted at the
    same place of the same background, without noise or blur.
    """
    config = ctx.config
    mesh = ctx.meshes[class_index(ctx, sample.class_id)]
    layer = render(mesh, sample.pose, config.camera, config.material, config.light, config.backface_culling)
    rgb, alpha = shift_layer(layer, sample.offset, sample.background.shape[:2])
    return alpha_composite(rgb, alpha, sample.background)


def distance_pairs(ctx: SampleContext, indices, jobs: int = 1) -> list:
    """
    (full pipeline image, plain render on the same background) for every sample index.
    """
    return [(sample.image, plain_counterpart(sample, ctx)) for sample in generate_samples(ctx, indices, jobs)]
