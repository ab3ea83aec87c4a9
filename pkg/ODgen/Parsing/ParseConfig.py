import json
import os
import re

import numpy as np

from ODgen.Compositing.Compositor import ComposeSpec
from ODgen.Core.Camera import CameraIntrinsics
from ODgen.Core.Primitives import resolve_params
from ODgen.Errors.BackgroundTooSmallError import BackgroundTooSmallError
from ODgen.Errors.ConfigValidationError import ConfigValidationError
from ODgen.Errors.InvalidParamError import InvalidParamError
from ODgen.Errors.InvalidRangeError import InvalidRangeError
from ODgen.Errors.LevelTooLargeError import LevelTooLargeError
from ODgen.Errors.NonUnitDirectionError import NonUnitDirectionError
from ODgen.Errors.ZeroAreaImageError import ZeroAreaImageError
from ODgen.Generation.Config import BackgroundSpec, GenerationConfig, ObjectSpec
from ODgen.Rendering.Phong import JitterSpec, LightSpec, PhongMaterial
from ODgen.Sampling.PoseGrid import PoseGridSpec, log_distances
from ODgen.Transfer.Domains import DomainSpec
from ODgen.Transfer.Experiment import ExperimentConfig
from ODgen.Transfer.Training import FreezeSchedule, TrainConfig

SCHEMA_VERSION = 1

DOMAIN_ERRORS = (InvalidParamError, InvalidRangeError, LevelTooLargeError, NonUnitDirectionError,
                 ZeroAreaImageError, BackgroundTooSmallError)

PATH_SYNTAX = re.compile(r"[^.\[\]=]+(\.[^.\[\]=]+|\[\d+\])*")
PATH_STEP = re.compile(r"([^.\[\]=]+)|\[(\d+)\]")

RGB = ('list', float, 3)
RANGE = ('list', float, 2)


def _join(path: str, key) -> str:
    if isinstance(key, int):
        return "{}[{}]".format(path, key)
    return key if not path else "{}.{}".format(path, key)


def _detail(error: Exception) -> str:
    return str(error).split("\n\n", 1)[-1]


class Section:
    def __init__(self, build, fields: dict, required: tuple = ()):
        """
        One object of the configuration document.

        :param build: callable receiving the checked fields as keyword arguments
        :param fields: key -> kind, where kind is a type, a Section or a tuple
            ('list', kind[, length]), ('optional', kind), ('dict', kind)
        :param required: keys that must be present
        """
        self.build = build
        self.fields = fields
        self.required = required

    def parse(self, data, path: str):
        if not isinstance(data, dict):
            raise ConfigValidationError(path or "<root>", "expected an object")
        for key in data:
            if key not in self.fields:
                raise ConfigValidationError(_join(path, key), "unknown key")
        for key in self.required:
            if key not in data:
                raise ConfigValidationError(_join(path, key), "missing required key")

        values = {key: check(value, self.fields[key], _join(path, key)) for key, value in data.items()}
        try:
            return self.build(**values)
        except DOMAIN_ERRORS as error:
            name = getattr(error, 'name', None)
            where = _join(path, name) if name in self.fields else (path or "<root>")
            raise ConfigValidationError(where, _detail(error))


def check(value, kind, path: str):
    """
    Checks the value against its kind and converts lists to tuples and integers to floats
    where floats are expected.
    """
    if isinstance(kind, Section):
        return kind.parse(value, path)
    if isinstance(kind, tuple):
        if kind[0] == 'optional':
            return None if value is None else check(value, kind[1], path)
        if kind[0] == 'dict':
            if not isinstance(value, dict):
                raise ConfigValidationError(path, "expected an object")
            return {key: check(item, kind[1], _join(path, key)) for key, item in value.items()}
        if not isinstance(value, list):
            raise ConfigValidationError(path, "expected a list")
        if len(kind) == 3 and len(value) != kind[2]:
            raise ConfigValidationError(path, "expected {} items, got {}".format(kind[2], len(value)))
        return tuple(check(item, kind[1], _join(path, k)) for k, item in enumerate(value))
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigValidationError(path, "expected true or false")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigValidationError(path, "expected an integer")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigValidationError(path, "expected a number")
        return float(value)
    if kind == 'number':
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigValidationError(path, "expected a number")
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ConfigValidationError(path, "expected a string")
        return value
    raise TypeError("unknown kind {}".format(kind))


def _light(direction=None, **values) -> LightSpec:
    if direction is not None:
        norm = float(np.linalg.norm(direction))
        if norm == 0:
            raise InvalidParamError("direction", list(direction), "nonzero vector")
        values['direction'] = tuple(np.asarray(direction) / norm)
    return LightSpec(**values)


def _pose_grid(**values) -> PoseGridSpec:
    spec = PoseGridSpec(**values)
    spec.size  # validates the subdivision level
    try:
        log_distances(spec.distance_min, spec.distance_max, spec.scale_levels)
    except InvalidRangeError as error:
        raise InvalidParamError("scale_levels", spec.scale_levels, _detail(error))
    return spec


def _schema(base_dir: str) -> Section:
    def resolve(path):
        if path is None or os.path.isabs(path):
            return path
        return os.path.normpath(os.path.join(base_dir, path))

    def objects(**values) -> ObjectSpec:
        if 'mesh' in values:
            values['mesh'] = resolve(values['mesh'])
        spec = ObjectSpec(**values)
        if spec.primitive is not None:
            resolve_params(spec.primitive, spec.params)
        return spec

    def backgrounds(**values) -> BackgroundSpec:
        if 'path' in values:
            values['path'] = resolve(values['path'])
        return BackgroundSpec(**values)

    train = Section(TrainConfig, {'learning_rate': float, 'momentum': float, 'steps': int, 'batch_size': int,
                                  'seed': int})
    domain = Section(DomainSpec, {'name': str, 'light_jitter': bool, 'noise_sigma_range': RANGE,
                                  'blur_sigma_range': RANGE, 'background_mode': str, 'channel_swap': bool},
                     required=('name',))
    schedule = Section(FreezeSchedule, {'name': str, 'frozen_prefix_layers': int,
                                        'unfreeze_at_step': ('optional', int)}, required=('name',))
    experiment = Section(dict, {'crop_size': int, 'focal_length': float, 'train_crops': int, 'test_crops': int,
                                'pair_count': int, 'histogram_bins': int, 'background_count': int,
                                'channels': ('list', int, 2), 'data_seed': int, 'seeds': ('list', int),
                                'stage1': train, 'stage2': train, 'schedules': ('list', schedule),
                                'real_domain': domain, 'synthetic_domain': domain, 'output_dir': str})

    return Section(_root, {
        'schema_version': int,
        'objects': ('list', Section(objects, {'class_id': int, 'class_name': str, 'mesh': str, 'primitive': str,
                                              'params': ('dict', 'number'), 'color': RGB},
                                    required=('class_id', 'class_name'))),
        'camera': Section(CameraIntrinsics, {'fx': float, 'fy': float, 'cx': float, 'cy': float, 'width': int,
                                             'height': int}, required=('fx', 'fy', 'cx', 'cy', 'width', 'height')),
        'pose_grid': Section(_pose_grid, {'subdivision_level': int, 'in_plane_count': int, 'in_plane_range': RANGE,
                                          'distance_min': float, 'distance_max': float, 'scale_levels': int,
                                          'hemisphere_only': bool}),
        'material': Section(PhongMaterial, {'k_a': RGB, 'k_d': RGB, 'k_s': RGB, 'shininess': float}),
        'light': Section(_light, {'direction': ('list', float, 3), 'color': RGB, 'ambient_color': RGB}),
        'jitter': Section(JitterSpec, {'material_jitter': float, 'light_color_jitter': float,
                                       'light_cone_angle': float}),
        'compose': Section(ComposeSpec, {'noise_sigma_range': RANGE, 'blur_sigma_range': RANGE, 'placement': str,
                                         'min_visibility': float, 'channel_swap': bool, 'flips': bool,
                                         'rotations': ('list', int)}),
        'backgrounds': Section(backgrounds, {'mode': str, 'path': str, 'count': int, 'seed': int}),
        'sample_count': int,
        'master_seed': int,
        'output_dir': str,
        'emit_masks': bool,
        'exhaustive': bool,
        'debug_layers': bool,
        'backface_culling': bool,
        'experiment': experiment,
    }, required=('schema_version', 'objects'))


def _root(schema_version, experiment=None, **values) -> tuple:
    config = GenerationConfig(**values)
    if experiment is None:
        return config, None
    try:
        return config, ExperimentConfig(generation=config, **experiment)
    except DOMAIN_ERRORS as error:
        name = getattr(error, 'name', None)
        raise ConfigValidationError("experiment.{}".format(name) if name in experiment else "experiment",
                                    _detail(error))


def parse_path(key: str) -> list:
    """
    Steps of a dotted field path, e.g. 'compose.blur_sigma_range[1]' -> ['compose', 'blur_sigma_range', 1].
    """
    if not PATH_SYNTAX.fullmatch(key):
        raise ConfigValidationError(key, "malformed field path")
    return [match.group(1) if match.group(1) is not None else int(match.group(2))
            for match in PATH_STEP.finditer(key)]


def apply_override(document: dict, assignment: str):
    """
    Applies one 'key.path=value' assignment to the raw document. The value is read as JSON
    and taken as a plain string if that fails.
    """
    key, separator, raw = assignment.partition("=")
    if not separator or not key:
        raise ConfigValidationError(assignment, "expected key.path=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw

    steps = parse_path(key.strip())
    container = document
    for step, following in zip(steps, steps[1:] + [None]):
        if isinstance(step, int):
            if not isinstance(container, list) or step >= len(container):
                raise ConfigValidationError(key, "index {} out of range".format(step))
        elif not isinstance(container, dict):
            raise ConfigValidationError(key, "{} is not an object".format(step))
        if following is None:
            container[step] = value
        elif isinstance(step, int):
            container = container[step]
        else:
            container = container.setdefault(step, [] if isinstance(following, int) else {})


def apply_seed(document: dict, seed: int):
    """
    The seed replaces master_seed and, when an experiment section exists, its data seed and
    the base of its seed list.
    """
    document['master_seed'] = seed
    experiment = document.get('experiment')
    if isinstance(experiment, dict):
        count = len(experiment['seeds']) if isinstance(experiment.get('seeds'), list) else len(ExperimentConfig.seeds)
        experiment['data_seed'] = seed
        experiment['seeds'] = [seed + k for k in range(count)]


def parse_config(document: dict, base_dir: str = ".") -> tuple:
    """
    Validates a configuration document.

    :param document: decoded JSON document
    :param base_dir: directory relative mesh and background paths are resolved against
    :return: (GenerationConfig, ExperimentConfig or None)
    """
    if not isinstance(document, dict):
        raise ConfigValidationError("<root>", "expected an object")
    version = document.get('schema_version')
    if version != SCHEMA_VERSION:
        raise ConfigValidationError("schema_version", "expected {}, got {}".format(SCHEMA_VERSION, version))
    return _schema(base_dir).parse(document, "")


def load_config(path: str, overrides=(), seed: int = None, output: str = None) -> tuple:
    """
    Reads, overrides and validates a configuration file.

    :param path: JSON configuration
    :param overrides: 'key.path=value' assignments applied before validation
    :param seed: replaces the seeds, see apply_seed
    :param output: replaces output_dir
    :return: (GenerationConfig, ExperimentConfig or None)
    """
    with open(path) as config_file:
        text = config_file.read()
    try:
        document = json.loads(text)
    except json.JSONDecodeError as error:
        raise ConfigValidationError("<document>", "line {}, column {}: {}".format(error.lineno, error.colno,
                                                                                   error.msg))
    if not isinstance(document, dict):
        raise ConfigValidationError("<root>", "expected an object")
    for assignment in overrides:
        apply_override(document, assignment)
    if seed is not None:
        apply_seed(document, seed)
    if output is not None:
        document['output_dir'] = output
    return parse_config(document, os.path.dirname(os.path.abspath(path)))
