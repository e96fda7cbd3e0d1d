"""OBJ and PLY mesh readers/writers.

OBJ is ASCII with ``v``/``vn``/``f`` records; polygon faces are
fan-triangulated on load. PLY supports ASCII and binary little-endian;
binary files store positions (and normals) as float64 so values round-trip
exactly. ASCII writers use shortest round-trip float formatting, so ASCII
round-trips are exact as well.
"""

import os

import numpy as np

from .errors import FormatError, ValidationError
from .mesh import TriMesh

_PLY_DTYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def _fan_triangulate(indices, path, line_no):
    if len(indices) < 3:
        raise FormatError("face with fewer than 3 vertices", path, line_no)
    first = indices[0]
    return [(first, indices[k], indices[k + 1]) for k in range(1, len(indices) - 1)]


def _infer_format(path, fmt):
    if fmt is not None:
        fmt = fmt.lower()
        if fmt not in ("obj", "ply"):
            raise ValidationError(f"unknown mesh format {fmt!r}")
        return fmt
    suffix = os.path.splitext(str(path))[1].lower()
    if suffix == ".obj":
        return "obj"
    if suffix == ".ply":
        return "ply"
    raise ValidationError(f"cannot infer mesh format from {path!r}; pass format explicitly")


def load_mesh(path, fmt=None):
    """Load an OBJ or PLY mesh; recomputes normals when absent from file."""
    fmt = _infer_format(path, fmt)
    if not os.path.exists(path):
        raise FormatError("file not found", path)
    if fmt == "obj":
        return _load_obj(path)
    return _load_ply(path)


def save_mesh(mesh, path, fmt=None, binary=True, comment=None):
    """Write a mesh. PLY defaults to binary little-endian; OBJ is ASCII."""
    fmt = _infer_format(path, fmt)
    if fmt == "obj":
        _save_obj(mesh, path, comment)
    else:
        _save_ply(mesh, path, binary=binary, comment=comment)


# ---------------------------------------------------------------- OBJ


def _parse_obj_index(token, n_vertices, path, line_no):
    head = token.split("/")[0]
    try:
        idx = int(head)
    except ValueError:
        raise FormatError(f"bad face index {token!r}", path, line_no) from None
    if idx < 0:
        idx = n_vertices + idx
    else:
        idx = idx - 1
    if idx < 0 or idx >= n_vertices:
        raise FormatError(f"face index {token!r} out of range", path, line_no)
    return idx


def _load_obj(path):
    vertices = []
    normals = []
    faces = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise FormatError("vertex record needs 3 coordinates", path, line_no)
                try:
                    vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError:
                    raise FormatError("bad vertex coordinate", path, line_no) from None
            elif tag == "vn":
                if len(parts) < 4:
                    raise FormatError("normal record needs 3 components", path, line_no)
                try:
                    normals.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError:
                    raise FormatError("bad normal component", path, line_no) from None
            elif tag == "f":
                idx = [
                    _parse_obj_index(tok, len(vertices), path, line_no)
                    for tok in parts[1:]
                ]
                faces.extend(_fan_triangulate(idx, path, line_no))
            # Other records (vt, o, g, s, usemtl, ...) are ignored.
    if not vertices:
        raise FormatError("mesh has no vertices", path)
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if len(normals) == len(vertices):
        normals = np.asarray(normals, dtype=np.float64)
        norms = np.linalg.norm(normals, axis=1)
        if np.all(norms > 1e-12):
            return TriMesh(vertices, faces, normals / norms[:, None])
    return TriMesh(vertices, faces)


def _format_float(x):
    return repr(float(x))


def _save_obj(mesh, path, comment):
    lines = []
    if comment:
        for c in str(comment).splitlines():
            lines.append(f"# {c}")
    for v in mesh.vertices:
        lines.append(f"v {_format_float(v[0])} {_format_float(v[1])} {_format_float(v[2])}")
    for n in mesh.normals:
        lines.append(f"vn {_format_float(n[0])} {_format_float(n[1])} {_format_float(n[2])}")
    for f in mesh.faces:
        a, b, c = (int(i) + 1 for i in f)
        lines.append(f"f {a}//{a} {b}//{b} {c}//{c}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------- PLY


class _PlyElement:
    def __init__(self, name, count):
        self.name = name
        self.count = count
        self.properties = []  # (name, dtype) or (name, count_dtype, item_dtype, True)


def _parse_ply_header(fh, path):
    line_no = 1
    magic = fh.readline()
    if magic.strip() != b"ply":
        raise FormatError("not a PLY file (missing 'ply' magic)", path, 1)
    fmt = None
    elements = []
    while True:
        raw = fh.readline()
        line_no += 1
        if not raw:
            raise FormatError("unexpected end of header", path, line_no)
        tokens = raw.decode("ascii", errors="replace").strip().split()
        if not tokens:
            continue
        key = tokens[0]
        if key == "comment" or key == "obj_info":
            continue
        if key == "format":
            if len(tokens) < 2 or tokens[1] not in (
                "ascii",
                "binary_little_endian",
            ):
                raise FormatError(
                    f"unsupported PLY format {' '.join(tokens[1:])!r}", path, line_no
                )
            fmt = tokens[1]
        elif key == "element":
            if len(tokens) != 3:
                raise FormatError("malformed element declaration", path, line_no)
            try:
                count = int(tokens[2])
            except ValueError:
                raise FormatError("bad element count", path, line_no) from None
            elements.append(_PlyElement(tokens[1], count))
        elif key == "property":
            if not elements:
                raise FormatError("property before any element", path, line_no)
            if tokens[1] == "list":
                if len(tokens) != 5:
                    raise FormatError("malformed list property", path, line_no)
                cdt, idt = tokens[2], tokens[3]
                if cdt not in _PLY_DTYPES or idt not in _PLY_DTYPES:
                    raise FormatError("unknown list property type", path, line_no)
                elements[-1].properties.append((tokens[4], cdt, idt, True))
            else:
                if len(tokens) != 3 or tokens[1] not in _PLY_DTYPES:
                    raise FormatError(f"unknown property type {tokens[1]!r}", path, line_no)
                elements[-1].properties.append((tokens[2], tokens[1]))
        elif key == "end_header":
            break
        else:
            raise FormatError(f"unknown header record {key!r}", path, line_no)
    if fmt is None:
        raise FormatError("header missing format declaration", path, line_no)
    return fmt, elements, line_no


def _ply_vertex_arrays(element, rows, path):
    names = [p[0] for p in element.properties]
    for needed in ("x", "y", "z"):
        if needed not in names:
            raise FormatError(f"vertex element missing property {needed!r}", path)
    vertices = np.stack([rows["x"], rows["y"], rows["z"]], axis=1).astype(np.float64)
    normals = None
    if all(n in names for n in ("nx", "ny", "nz")):
        normals = np.stack([rows["nx"], rows["ny"], rows["nz"]], axis=1).astype(np.float64)
        norms = np.linalg.norm(normals, axis=1)
        if np.any(norms < 1e-12):
            normals = None
        else:
            normals = normals / norms[:, None]
    return vertices, normals


def _load_ply(path):
    with open(path, "rb") as fh:
        fmt, elements, header_lines = _parse_ply_header(fh, path)
        payload = fh.read()

    vertices = normals = None
    faces = []
    if fmt == "ascii":
        text = payload.decode("ascii", errors="replace").splitlines()
        cursor = 0
        line_no = header_lines
        for element in elements:
            scalar = [p for p in element.properties if len(p) == 2]
            lists = [p for p in element.properties if len(p) == 4]
            if element.name == "vertex":
                if lists:
                    raise FormatError("list properties on vertices unsupported", path)
                rows = {p[0]: np.empty(element.count, dtype=np.float64) for p in scalar}
                for i in range(element.count):
                    if cursor >= len(text):
                        raise FormatError("unexpected end of file", path, line_no + cursor)
                    tokens = text[cursor].split()
                    cursor += 1
                    if len(tokens) < len(scalar):
                        raise FormatError("short vertex row", path, line_no + cursor)
                    for (name, _), tok in zip(scalar, tokens):
                        try:
                            rows[name][i] = float(tok)
                        except ValueError:
                            raise FormatError(
                                f"bad value {tok!r}", path, line_no + cursor
                            ) from None
                vertices, normals = _ply_vertex_arrays(element, rows, path)
            else:
                for _ in range(element.count):
                    if cursor >= len(text):
                        raise FormatError("unexpected end of file", path, line_no + cursor)
                    tokens = text[cursor].split()
                    cursor += 1
                    if element.name == "face":
                        try:
                            n = int(tokens[0])
                            idx = [int(t) for t in tokens[1 : 1 + n]]
                        except (ValueError, IndexError):
                            raise FormatError("bad face row", path, line_no + cursor) from None
                        if len(idx) != n:
                            raise FormatError("short face row", path, line_no + cursor)
                        faces.extend(_fan_triangulate(idx, path, line_no + cursor))
    else:
        offset = 0
        for element in elements:
            lists = [p for p in element.properties if len(p) == 4]
            if not lists:
                dtype = np.dtype([(p[0], "<" + _PLY_DTYPES[p[1]]) for p in element.properties])
                nbytes = dtype.itemsize * element.count
                if offset + nbytes > len(payload):
                    raise FormatError("truncated binary payload", path)
                rows = np.frombuffer(payload, dtype=dtype, count=element.count, offset=offset)
                offset += nbytes
                if element.name == "vertex":
                    vertices, normals = _ply_vertex_arrays(element, rows, path)
            else:
                if len(element.properties) != 1:
                    raise FormatError(
                        "mixed scalar/list element rows unsupported", path
                    )
                _, cdt, idt, _ = element.properties[0]
                cdtype = np.dtype("<" + _PLY_DTYPES[cdt])
                idtype = np.dtype("<" + _PLY_DTYPES[idt])
                # Fast path: uniform triangle rows.
                row_bytes = cdtype.itemsize + 3 * idtype.itemsize
                fast = False
                if offset + row_bytes * element.count <= len(payload):
                    counts = np.frombuffer(
                        payload,
                        dtype=cdtype,
                        count=element.count,
                        offset=offset,
                    ) if cdtype.itemsize == row_bytes else None
                    view = np.frombuffer(
                        payload[offset : offset + row_bytes * element.count],
                        dtype=np.uint8,
                    ).reshape(element.count, row_bytes)
                    head = view[:, : cdtype.itemsize].copy().view(cdtype).ravel()
                    if np.all(head == 3):
                        body = (
                            view[:, cdtype.itemsize :]
                            .copy()
                            .view(idtype)
                            .reshape(element.count, 3)
                        )
                        if element.name == "face":
                            faces = body.astype(np.int64)
                        offset += row_bytes * element.count
                        fast = True
                if not fast:
                    out = []
                    for _ in range(element.count):
                        if offset + cdtype.itemsize > len(payload):
                            raise FormatError("truncated binary payload", path)
                        n = int(
                            np.frombuffer(payload, dtype=cdtype, count=1, offset=offset)[0]
                        )
                        offset += cdtype.itemsize
                        nbytes = n * idtype.itemsize
                        if offset + nbytes > len(payload):
                            raise FormatError("truncated binary payload", path)
                        idx = np.frombuffer(payload, dtype=idtype, count=n, offset=offset)
                        offset += nbytes
                        if element.name == "face":
                            out.extend(_fan_triangulate([int(i) for i in idx], path, None))
                    if element.name == "face":
                        faces = out

    if vertices is None or len(vertices) == 0:
        raise FormatError("mesh has no vertices", path)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if normals is not None:
        return TriMesh(vertices, faces, normals)
    return TriMesh(vertices, faces)


def _save_ply(mesh, path, binary, comment):
    n, m = mesh.n_vertices, mesh.n_faces
    header = ["ply"]
    header.append("format binary_little_endian 1.0" if binary else "format ascii 1.0")
    if comment:
        for c in str(comment).splitlines():
            header.append(f"comment {c}")
    header.append(f"element vertex {n}")
    for prop in ("x", "y", "z", "nx", "ny", "nz"):
        header.append(f"property double {prop}")
    header.append(f"element face {m}")
    header.append("property list uchar int32 vertex_indices")
    header.append("end_header")

    data = np.hstack([mesh.vertices, mesh.normals])
    if binary:
        with open(path, "wb") as fh:
            fh.write(("\n".join(header) + "\n").encode("ascii"))
            fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())
            if m:
                face_dtype = np.dtype([("n", "u1"), ("idx", "<i4", (3,))])
                rows = np.empty(m, dtype=face_dtype)
                rows["n"] = 3
                rows["idx"] = mesh.faces.astype(np.int32)
                fh.write(rows.tobytes())
    else:
        lines = list(header)
        for row in data:
            lines.append(" ".join(_format_float(v) for v in row))
        for f in mesh.faces:
            lines.append(f"3 {int(f[0])} {int(f[1])} {int(f[2])}")
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
