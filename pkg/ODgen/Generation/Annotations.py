import json
import os
import tempfile
from dataclasses import dataclass, field

from ODgen.Core.BBox import BBox2D
from ODgen.Core.Camera import Pose
from ODgen.Errors.AnnotationParsingError import AnnotationParsingError
from ODgen.Errors.InvalidParamError import InvalidParamError
from ODgen.Errors.SchemaVersionMismatchError import SchemaVersionMismatchError

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class AnnotationRecord:
    image_id: int
    file_name: str
    category_id: int
    bbox: tuple
    rotation: tuple
    translation: tuple
    mask_file: str = None

    def __post_init__(self):
        bbox = tuple(float(value) for value in self.bbox)
        if len(bbox) != 4 or not (bbox[2] > 0 and bbox[3] > 0):
            raise InvalidParamError("bbox", list(bbox), "[x_min, y_min, width > 0, height > 0]")
        object.__setattr__(self, 'bbox', bbox)
        object.__setattr__(self, 'rotation', tuple(float(value) for value in self.rotation))
        object.__setattr__(self, 'translation', tuple(float(value) for value in self.translation))

    @property
    def box(self) -> BBox2D:
        return BBox2D.from_xywh(self.bbox)

    @property
    def pose(self) -> Pose:
        return Pose.from_dict({'rotation': self.rotation, 'translation': self.translation})

    def to_dict(self) -> dict:
        return {'image_id': self.image_id, 'file_name': self.file_name, 'category_id': self.category_id,
                'bbox': list(self.bbox), 'mask_file': self.mask_file,
                'pose': {'rotation': list(self.rotation), 'translation': list(self.translation)}}

    @staticmethod
    def from_dict(data: dict) -> 'AnnotationRecord':
        return AnnotationRecord(data['image_id'], data['file_name'], data['category_id'], data['bbox'],
                                data['pose']['rotation'], data['pose']['translation'], data.get('mask_file'))


@dataclass
class DatasetManifest:
    config: dict
    per_class_counts: dict
    total_images: int
    generator_version: str
    master_seed: int
    image_width: int
    image_height: int
    categories: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {'config': self.config, 'per_class_counts': self.per_class_counts,
                'total_images': self.total_images, 'generator_version': self.generator_version,
                'master_seed': self.master_seed, 'image_width': self.image_width,
                'image_height': self.image_height, 'schema_version': self.schema_version}

    @staticmethod
    def from_dict(data: dict, categories: list) -> 'DatasetManifest':
        return DatasetManifest(data['config'], data['per_class_counts'], data['total_images'],
                               data['generator_version'], data['master_seed'], data['image_width'],
                               data['image_height'], categories, data['schema_version'])


def annotations_to_text(records: list, manifest: DatasetManifest) -> str:
    images, seen = [], set()
    for record in records:
        if record.image_id not in seen:
            seen.add(record.image_id)
            images.append({'id': record.image_id, 'file_name': record.file_name,
                           'width': manifest.image_width, 'height': manifest.image_height})
    document = {'manifest': manifest.to_dict(), 'categories': list(manifest.categories), 'images': images,
                'annotations': [record.to_dict() for record in records]}
    return json.dumps(document, indent=2, sort_keys=True) + "\n"


def write_annotations(records: list, manifest: DatasetManifest, path: str):
    """
    Writes the annotation file atomically: the document goes to a temporary file in the
    target directory which then replaces the target.

    :param records: AnnotationRecords in image order
    :param manifest: dataset manifest
    :param path: annotation file
    """
    text = annotations_to_text(records, manifest)
    directory = os.path.dirname(os.path.abspath(path))
    handle, temporary = tempfile.mkstemp(prefix=".annotations-", suffix=".tmp", dir=directory)
    try:
        with os.fdopen(handle, 'w') as annotation_file:
            annotation_file.write(text)
        os.replace(temporary, path)
    except BaseException:
        if os.path.exists(temporary):
            os.remove(temporary)
        raise


def read_annotations(path: str) -> tuple:
    """
    Inverse of write_annotations.

    :param path: annotation file
    :return: (list of AnnotationRecord, DatasetManifest)
    """
    with open(path) as annotation_file:
        text = annotation_file.read()
    try:
        document = json.loads(text)
    except json.JSONDecodeError as error:
        raise AnnotationParsingError(error.msg, error.lineno, error.colno)

    try:
        version = document['manifest']['schema_version']
    except (KeyError, TypeError):
        raise AnnotationParsingError("missing manifest.schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatchError(version, SCHEMA_VERSION)

    try:
        manifest = DatasetManifest.from_dict(document['manifest'], document['categories'])
        records = [AnnotationRecord.from_dict(data) for data in document['annotations']]
    except KeyError as error:
        raise AnnotationParsingError("missing field {}".format(error))
    except (TypeError, ValueError, InvalidParamError) as error:
        raise AnnotationParsingError("malformed record: {}".format(error))
    return records, manifest
