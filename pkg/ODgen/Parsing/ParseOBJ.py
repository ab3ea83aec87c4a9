import numpy as np
from lark import Lark, Transformer
from lark import UnexpectedCharacters, UnexpectedToken, UnexpectedEOF

from ODgen.Core.Mesh import Mesh, compute_vertex_normals, DEFAULT_COLOR
from ODgen.Errors.EmptyMeshError import EmptyMeshError
from ODgen.Errors.MeshParsingError import MeshParsingError

GRAMMAR = r"""
    start: (_record? _NL)*

    _record: vertex | normal | texcoord | face | ignored

    vertex: "v" NUMBER NUMBER NUMBER (NUMBER NUMBER NUMBER)?
    normal: "vn" NUMBER NUMBER NUMBER
    texcoord: "vt" NUMBER (NUMBER NUMBER?)?
    face: "f" corner corner corner+
    ignored: IGNORED

    corner: INDEX                        -> corner_v
          | INDEX "/" INDEX              -> corner_vt
          | INDEX "//" INDEX             -> corner_vn
          | INDEX "/" INDEX "/" INDEX    -> corner_vtn

    IGNORED: /(o|g|s|l|usemtl|mtllib)([ \t][^\n]*)?/
    NUMBER: /[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?/
    INDEX: /-?\d+/
    COMMENT: /#[^\n]*/
    _NL: /\r?\n/

    %import common.WS_INLINE
    %ignore WS_INLINE
    %ignore COMMENT
"""

TERMINALS = {
    "NUMBER": "number",
    "INDEX": "index",
    "IGNORED": "o/g/s/l/usemtl/mtllib",
    "_NL": "end of line",
    "SLASH": "/",
    "__ANON_0": "//",
    "V": "v",
    "VN": "vn",
    "VT": "vt",
    "F": "f",
}


class Result:
    """
    Class to represent output from the Parser.
    """

    def __init__(self, success, data):
        self.success = success
        self.data = data


class TreeToRecords(Transformer):
    """
    Turns the parse tree into a flat list of (kind, line, payload) records in file order.
    """

    def start(self, matches):
        return [match for match in matches if match is not None]

    def vertex(self, matches):
        values = [float(token) for token in matches]
        color = values[3:] if len(values) == 6 else None
        return 'v', matches[0].line, (values[:3], color)

    def normal(self, matches):
        return 'vn', matches[0].line, [float(token) for token in matches]

    def texcoord(self, matches):
        return None

    def ignored(self, matches):
        return None

    def face(self, matches):
        return 'f', matches[0][0], [corner[1:] for corner in matches]

    def corner_v(self, matches):
        return matches[0].line, int(matches[0]), None

    def corner_vt(self, matches):
        return matches[0].line, int(matches[0]), None

    def corner_vn(self, matches):
        return matches[0].line, int(matches[0]), int(matches[1])

    def corner_vtn(self, matches):
        return matches[0].line, int(matches[0]), int(matches[2])


class Parser:
    def __init__(self):
        self.parser = Lark(GRAMMAR, parser="lalr", propagate_positions=False, maybe_placeholders=False)

    def replace(self, expected: set) -> set:
        """
        Method used to replace expected tokens by their human-readable representations defined in TERMINALS

        :param expected: given set of expected tokens
        :return: transformed tokens
        """
        return set([TERMINALS.get(item, item.lower()) for item in expected])

    def parse(self, text: str) -> Result:
        """
        Checks syntax and, if correct, assembles the records into a Mesh.

        :param text: OBJ-subset document
        :return: Result containing Mesh or error specification
        """
        result = self.syntax_check(text)
        if not result.success:
            return result
        records = TreeToRecords().transform(result.data)
        return assemble_mesh(records)

    def syntax_check(self, text: str) -> Result:
        """
        Calls Lark.parse and creates Result containing the parse tree or dict with
        specified error in case the given text cannot be parsed.

        :param text: given document
        :return: Result containing parse tree or error specification
        """
        if not text.endswith("\n"):
            text += "\n"
        try:
            tree = self.parser.parse(text)
        except UnexpectedCharacters as u:
            return Result(False, {"unexpected": text[u.pos_in_stream], "expected": self.replace(u.allowed),
                                  "line": u.line, "column": u.column})
        except (UnexpectedToken, UnexpectedEOF) as u:
            unexpected = str(u.token) if str(u.token).strip() else TERMINALS.get(u.token.type, str(u.token))
            return Result(False, {"unexpected": unexpected, "expected": self.replace(u.expected),
                                  "line": u.line, "column": u.column})
        return Result(True, tree)


def _resolve(index: int, count: int, line: int, what: str) -> int:
    """
    OBJ indices are 1-based; negative indices count back from the last defined element.
    """
    resolved = index - 1 if index > 0 else count + index
    if index == 0 or not 0 <= resolved < count:
        raise ValueError((line, "{} index {} out of range, {} defined".format(what, index, count)))
    return resolved


def assemble_mesh(records: list) -> Result:
    positions, colors, file_normals = [], [], []
    faces = []
    try:
        for kind, line, payload in records:
            if kind == 'v':
                position, color = payload
                if color is not None and not all(0.0 <= c <= 1.0 for c in color):
                    raise ValueError((line, "vertex color {} outside [0, 1]".format(color)))
                positions.append(position)
                colors.append(color)
            elif kind == 'vn':
                length = float(np.linalg.norm(payload))
                if length == 0:
                    raise ValueError((line, "zero-length normal"))
                file_normals.append([c / length for c in payload])
            else:
                corners = [(_resolve(v, len(positions), line, "vertex"),
                            None if n is None else _resolve(n, len(file_normals), line, "normal"))
                           for v, n in payload]
                faces.append(corners)
    except ValueError as error:
        line, message = error.args[0]
        return Result(False, {"line": line, "message": message})

    triangles, normal_sum = [], np.zeros((len(positions), 3))
    for corners in faces:
        for k in range(1, len(corners) - 1):
            triangles.append([corners[0][0], corners[k][0], corners[k + 1][0]])
        for vertex, normal in corners:
            if normal is not None:
                normal_sum[vertex] += file_normals[normal]

    vertices = np.array(positions, dtype=np.float64).reshape(-1, 3)
    triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
    normals = compute_vertex_normals(vertices, triangles)
    lengths = np.linalg.norm(normal_sum, axis=1)
    given = lengths > 0
    normals[given] = normal_sum[given] / lengths[given, None]
    colors = np.array([DEFAULT_COLOR if color is None else color for color in colors],
                      dtype=np.float64).reshape(-1, 3)
    return Result(True, Mesh(vertices, triangles, normals, colors))


_parser = None


def mesh_parser() -> Parser:
    global _parser
    if _parser is None:
        _parser = Parser()
    return _parser


def parse_mesh(text: str, source: str = "<string>") -> Mesh:
    result = mesh_parser().parse(text)
    if not result.success:
        raise MeshParsingError(result.data, text)
    if not result.data.triangle_count:
        raise EmptyMeshError(source)
    return result.data


def load_mesh(path: str) -> Mesh:
    """
    Reads a mesh in the OBJ subset (v, vn, f records; optional "v x y z r g b" colors).

    :param path: file path
    :return: Mesh; normals missing in the file are computed from the faces
    """
    with open(path) as obj_file:
        text = obj_file.read()
    return parse_mesh(text, path)


def save_mesh(mesh: Mesh, path: str):
    """
    Writes the mesh in the OBJ subset with 9 significant digits.

    :param mesh: given Mesh
    :param path: file to write to
    """
    def fmt(values):
        return " ".join('{:.9g}'.format(float(value)) for value in values)

    lines = ["# ODgen mesh: {} vertices, {} triangles".format(len(mesh.vertices), len(mesh.triangles))]
    lines += ["v " + fmt(position) + " " + fmt(color) for position, color in zip(mesh.vertices, mesh.colors)]
    lines += ["vn " + fmt(normal) for normal in mesh.normals]
    lines += ["f " + " ".join("{0}//{0}".format(index + 1) for index in triangle) for triangle in mesh.triangles]
    with open(path, 'w') as obj_file:
        obj_file.write("\n".join(lines) + "\n")
