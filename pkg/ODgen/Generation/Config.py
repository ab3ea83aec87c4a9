import json
from dataclasses import dataclass, field, asdict

from ODgen.Compositing.Background import BackgroundPool
from ODgen.Compositing.Compositor import ComposeSpec
from ODgen.Core.Camera import CameraIntrinsics
from ODgen.Core.Mesh import Mesh, DEFAULT_COLOR
from ODgen.Core.Primitives import make_primitive_mesh
from ODgen.Errors.InvalidParamError import InvalidParamError
from ODgen.Parsing.ParseOBJ import load_mesh
from ODgen.Rendering.Phong import PhongMaterial, LightSpec, JitterSpec
from ODgen.Sampling.PoseGrid import PoseGridSpec

BACKGROUND_MODES = ('procedural', 'directory', 'constant')


@dataclass(frozen=True)
class ObjectSpec:
    """
    One object class: either an OBJ mesh file or a primitive with its parameters.
    """
    class_id: int
    class_name: str
    mesh: str = None
    primitive: str = None
    params: dict = field(default_factory=dict)
    color: tuple = DEFAULT_COLOR

    def __post_init__(self):
        if (self.mesh is None) == (self.primitive is None):
            raise InvalidParamError("object", self.class_name, "exactly one of mesh and primitive")

    def load(self) -> Mesh:
        if self.mesh is not None:
            return load_mesh(self.mesh)
        return make_primitive_mesh(self.primitive, self.params, self.color)


@dataclass(frozen=True)
class BackgroundSpec:
    mode: str = 'procedural'
    path: str = None
    count: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.mode not in BACKGROUND_MODES:
            raise InvalidParamError("mode", self.mode, "one of {}".format(", ".join(BACKGROUND_MODES)))
        if self.mode == 'directory' and not self.path:
            raise InvalidParamError("path", self.path, "a directory for mode 'directory'")
        if self.count < 1:
            raise InvalidParamError("count", self.count, ">= 1")

    def build(self, width: int, height: int) -> BackgroundPool:
        if self.mode == 'directory':
            return BackgroundPool.from_directory(self.path)
        if self.mode == 'constant':
            return BackgroundPool.constant(self.count, width, height, self.seed)
        return BackgroundPool.procedural(self.count, width, height, self.seed)


@dataclass(frozen=True)
class GenerationConfig:
    objects: tuple
    camera: CameraIntrinsics = CameraIntrinsics(600.0, 600.0, 320.0, 240.0, 640, 480)
    pose_grid: PoseGridSpec = PoseGridSpec()
    material: PhongMaterial = PhongMaterial()
    light: LightSpec = LightSpec()
    jitter: JitterSpec = JitterSpec()
    compose: ComposeSpec = ComposeSpec()
    backgrounds: BackgroundSpec = BackgroundSpec()
    sample_count: int = 100
    master_seed: int = 0
    output_dir: str = 'dataset'
    emit_masks: bool = True
    exhaustive: bool = False
    debug_layers: bool = False
    backface_culling: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'objects', tuple(self.objects))
        if not self.objects:
            raise InvalidParamError("objects", [], "at least one object")
        class_ids = [spec.class_id for spec in self.objects]
        if len(set(class_ids)) != len(class_ids):
            raise InvalidParamError("objects", class_ids, "unique class ids")
        if self.sample_count < 1:
            raise InvalidParamError("sample_count", self.sample_count, ">= 1")
        if not 0 <= self.master_seed < 2 ** 64:
            raise InvalidParamError("master_seed", self.master_seed, "64-bit unsigned integer")

    @property
    def categories(self) -> list:
        return [{'id': spec.class_id, 'name': spec.class_name} for spec in self.objects]

    def to_dict(self) -> dict:
        """
        JSON-normalized echo of the configuration. The output directory is left out so that
        the same dataset written to two places carries the same annotation file.
        """
        echo = json.loads(json.dumps(asdict(self)))
        echo.pop("output_dir")
        return echo
