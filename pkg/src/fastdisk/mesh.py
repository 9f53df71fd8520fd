"""Triangle meshes of disk topology: container, topology queries and file IO."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .exceptions import DegenerateFace, MismatchedVertexCount, ParseError, TopologyError

FORMATS = ("OBJ", "OFF", "PLY")

# a face is degenerate when 2*area / (longest edge)^2 falls below this
_DEGENERACY_RATIO = 1e-14


@dataclass(frozen=True)
class TopologyReport:
    euler: int
    boundary_loops: int
    orientable: bool
    n_vertices: int = 0
    n_edges: int = 0
    n_faces: int = 0
    nonmanifold_edges: int = 0
    unreferenced_vertices: int = 0
    pinched_vertices: int = 0

    @property
    def is_disk(self):
        return (
            self.euler == 1
            and self.boundary_loops == 1
            and self.orientable
            and self.nonmanifold_edges == 0
            and self.unreferenced_vertices == 0
            and self.pinched_vertices == 0
        )

    def describe(self):
        parts = [f"χ={self.euler}", f"{self.boundary_loops} boundary loop" + ("" if self.boundary_loops == 1 else "s")]
        if not self.orientable:
            parts.append("inconsistent orientation")
        if self.nonmanifold_edges:
            parts.append(f"{self.nonmanifold_edges} non-manifold edges")
        if self.unreferenced_vertices:
            parts.append(f"{self.unreferenced_vertices} unreferenced vertices")
        if self.pinched_vertices:
            parts.append(f"{self.pinched_vertices} pinched vertices")
        return ", ".join(parts)


class TriangleMesh:
    """Immutable triangle mesh.

    Parameters
    ----------
    vertices : array_like, shape (n_vertices, 2) or (n_vertices, 3)
        Planar inputs are padded with a zero z coordinate.
    faces : array_like of int, shape (n_faces, 3)
        Oriented vertex triples.
    validate : bool
        When true (the default) enforce index sanity, non-degenerate faces
        and disk topology.
    """

    def __init__(self, vertices, faces, validate=True):
        v = np.array(vertices, dtype=float)
        f = np.array(faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] not in (2, 3):
            raise ValueError(f"vertices must have shape (n, 2) or (n, 3), got {v.shape}")
        if v.shape[1] == 2:
            v = np.column_stack([v, np.zeros(len(v))])
        if f.size == 0:
            f = f.reshape(0, 3)
        if f.ndim != 2 or f.shape[1] != 3:
            raise ValueError(f"faces must have shape (n, 3), got {f.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("vertex coordinates must be finite")
        v.setflags(write=False)
        f.setflags(write=False)
        self._vertices = v
        self._faces = f
        if validate:
            check_face_indices(self)
            check_degenerate_faces(self)
            report = validate_topology(self)
            if not report.is_disk:
                raise TopologyError(
                    f"mesh is not a simply-connected open surface: {report.describe()}", report
                )

    @property
    def vertices(self):
        return self._vertices

    @property
    def faces(self):
        return self._faces

    @property
    def n_vertices(self):
        return len(self._vertices)

    @property
    def n_faces(self):
        return len(self._faces)

    @cached_property
    def is_planar(self):
        return bool(np.all(self._vertices[:, 2] == 0.0))

    @cached_property
    def edges(self):
        """Unique undirected edges as a sorted (n_edges, 2) array."""
        return _unique_edges(self._faces)[0]

    @cached_property
    def face_areas(self):
        return face_areas(self._vertices, self._faces)

    @cached_property
    def boundary(self):
        return boundary_loop(self)

    @cached_property
    def interior_mask(self):
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[self.boundary] = False
        return mask

    @cached_property
    def scale(self):
        """Bounding-box diagonal."""
        if self.n_vertices == 0:
            return 0.0
        return float(np.linalg.norm(self._vertices.max(0) - self._vertices.min(0)))

    def __repr__(self):
        return f"TriangleMesh(n_vertices={self.n_vertices}, n_faces={self.n_faces})"


def face_areas(vertices, faces):
    """Unsigned face areas of a mesh embedded in R^3."""
    v = np.asarray(vertices, dtype=float)
    if v.shape[1] == 2:
        v = np.column_stack([v, np.zeros(len(v))])
    e1 = v[faces[:, 1]] - v[faces[:, 0]]
    e2 = v[faces[:, 2]] - v[faces[:, 0]]
    return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)


def check_face_indices(mesh):
    f = mesh.faces
    if len(f) == 0:
        raise TopologyError("mesh has no faces")
    if f.min() < 0 or f.max() >= mesh.n_vertices:
        bad = np.flatnonzero((f < 0).any(1) | (f >= mesh.n_vertices).any(1))
        raise ParseError(f"face {bad[0]} references a vertex outside [0, {mesh.n_vertices})")
    repeated = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
    if repeated.any():
        raise DegenerateFace(np.flatnonzero(repeated)[0], f"face {np.flatnonzero(repeated)[0]} repeats a vertex")


def degenerate_faces(mesh):
    """Indices of faces whose area is zero relative to their own size."""
    v, f = mesh.vertices, mesh.faces
    lmax2 = np.max(
        [
            np.sum((v[f[:, 1]] - v[f[:, 0]]) ** 2, axis=1),
            np.sum((v[f[:, 2]] - v[f[:, 1]]) ** 2, axis=1),
            np.sum((v[f[:, 0]] - v[f[:, 2]]) ** 2, axis=1),
        ],
        axis=0,
    )
    area = mesh.face_areas
    return np.flatnonzero(~(2.0 * area > _DEGENERACY_RATIO * lmax2))


def check_degenerate_faces(mesh):
    bad = degenerate_faces(mesh)
    if len(bad):
        raise DegenerateFace(bad[0])


def _unique_edges(faces):
    directed = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    undirected = np.sort(directed, axis=1)
    edges, inverse, counts = np.unique(undirected, axis=0, return_inverse=True, return_counts=True)
    return edges, inverse.reshape(-1), counts, directed


def validate_topology(mesh):
    """Diagnose the topology of ``mesh`` without raising.

    The pipeline accepts a mesh only when ``euler == 1``, there is exactly
    one boundary loop, orientation is consistent and every edge is manifold.
    """
    f = np.asarray(mesh.faces)
    nv = mesh.n_vertices
    edges, inverse, counts, directed = _unique_edges(f)
    n_edges = len(edges)
    euler = nv - n_edges + len(f)

    # a directed edge seen twice means two faces traverse it the same way
    _, dcounts = np.unique(directed, axis=0, return_counts=True)
    orientable = bool(np.all(dcounts == 1))

    bnd = edges[counts == 1]
    if len(bnd):
        g = sparse.coo_matrix((np.ones(len(bnd)), (bnd[:, 0], bnd[:, 1])), shape=(nv, nv))
        _, labels = connected_components(g, directed=False)
        loops = len(np.unique(labels[np.unique(bnd)]))
        # more than two boundary edges at a vertex: two sheets touch there
        pinched = int(np.sum(np.bincount(bnd.reshape(-1), minlength=nv) > 2))
    else:
        loops = 0
        pinched = 0

    referenced = np.zeros(nv, dtype=bool)
    referenced[f.reshape(-1)] = True
    return TopologyReport(
        euler=int(euler),
        boundary_loops=int(loops),
        orientable=orientable,
        n_vertices=int(nv),
        n_edges=int(n_edges),
        n_faces=int(len(f)),
        nonmanifold_edges=int(np.sum(counts > 2)),
        unreferenced_vertices=int(nv - referenced.sum()),
        pinched_vertices=pinched,
    )


def boundary_loop(mesh):
    """Ordered boundary vertices, starting at the lowest index, interior on the left."""
    f = np.asarray(mesh.faces)
    edges, inverse, counts, directed = _unique_edges(f)
    is_bnd = counts[inverse] == 1
    bnd = directed[is_bnd]
    if len(bnd) == 0:
        raise TopologyError("mesh has no boundary")
    succ = {}
    for u, v in bnd.tolist():
        if u in succ:
            raise TopologyError(f"boundary is pinched at vertex {u}")
        succ[u] = v
    start = min(succ)
    loop = [start]
    cur = succ[start]
    while cur != start:
        loop.append(cur)
        cur = succ.get(cur)
        if cur is None or len(loop) > len(succ):
            raise TopologyError("boundary edges do not form a closed loop")
    if len(loop) != len(succ):
        raise TopologyError(f"mesh has more than one boundary loop ({len(succ) - len(loop)} edges not on the first)")
    return np.array(loop, dtype=np.int64)


def boundary_edge_lengths(mesh, loop=None):
    """Lengths of the boundary edges ``[v_i, v_{i+1}]`` with wrap-around."""
    loop = mesh.boundary if loop is None else np.asarray(loop)
    v = mesh.vertices
    return np.linalg.norm(v[np.roll(loop, -1)] - v[loop], axis=1)


def merge_duplicate_vertices(mesh, rel_tol=1e-12):
    """Weld vertices closer than ``rel_tol`` times the bounding-box diagonal.

    Off by default everywhere: welding can change topology.
    """
    tol = rel_tol * mesh.scale
    v = mesh.vertices
    if tol == 0:
        key = v
    else:
        key = np.round(v / tol)
    _, first, remap = np.unique(key, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    new_faces = rank[remap.reshape(-1)][mesh.faces]
    return TriangleMesh(v[np.sort(first)], new_faces)


# -- file IO ---------------------------------------------------------------


def detect_format(path):
    ext = os.path.splitext(str(path))[1].lower().lstrip(".")
    fmt = ext.upper()
    if fmt not in FORMATS:
        raise ParseError(f"cannot infer mesh format from extension '.{ext}'")
    return fmt


def load_mesh(path, format=None, merge_tol=None, validate=True):
    """Read an OBJ, OFF or PLY file into a validated :class:`TriangleMesh`."""
    fmt = (format or detect_format(path)).upper()
    if fmt == "OBJ":
        v, f = _read_obj(path)
    elif fmt == "OFF":
        v, f = _read_off(path)
    elif fmt == "PLY":
        v, f = _read_ply(path)
    else:
        raise ParseError(f"unknown format {format!r}")
    if len(v) == 0:
        raise ParseError(f"{path}: no vertices")
    if merge_tol is not None:
        return merge_duplicate_vertices(TriangleMesh(v, f, validate=False), merge_tol)
    return TriangleMesh(v, f, validate=validate)


def save_mesh(mesh, path, format=None, binary=True, uv=None):
    """Write ``mesh``; text formats carry 17 significant digits.

    ``uv`` (OBJ only) adds ``vt`` records indexed like the vertices.
    """
    fmt = (format or detect_format(path)).upper()
    if fmt == "OBJ":
        _write_obj(mesh, path, uv)
    elif fmt == "OFF":
        _write_off(mesh, path)
    elif fmt == "PLY":
        _write_ply(mesh, path, binary)
    else:
        raise ParseError(f"unknown format {format!r}")


def _floats(tokens, where):
    try:
        return [float(t) for t in tokens]
    except ValueError as exc:
        raise ParseError(f"{where}: {exc}") from None


def _read_obj(path):
    verts, faces = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            where = f"{path}:{lineno}"
            if tag == "v":
                if len(parts) < 4:
                    raise ParseError(f"{where}: vertex needs 3 coordinates")
                verts.append(_floats(parts[1:4], where))
            elif tag == "f":
                idx = []
                for tok in parts[1:]:
                    try:
                        i = int(tok.split("/")[0])
                    except ValueError:
                        raise ParseError(f"{where}: bad face index {tok!r}") from None
                    if i == 0:
                        raise ParseError(f"{where}: OBJ indices are 1-based")
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                if len(idx) != 3:
                    raise ParseError(f"{where}: only triangular faces are supported (got {len(idx)} vertices)")
                faces.append(idx)
    return np.array(verts, dtype=float).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3)


def _data_lines(fh):
    for line in fh:
        line = line.split("#", 1)[0].strip()
        if line:
            yield line


def _read_off(path):
    with open(path) as fh:
        lines = _data_lines(fh)
        try:
            header = next(lines)
            if header.startswith("OFF"):
                rest = header[3:].split()
                counts = rest if rest else next(lines).split()
            else:
                raise ParseError(f"{path}: missing OFF header")
            nv, nf = int(counts[0]), int(counts[1])
            verts = [_floats(next(lines).split()[:3], path) for _ in range(nv)]
            faces = []
            for k in range(nf):
                tok = next(lines).split()
                if int(tok[0]) != 3:
                    raise ParseError(f"{path}: face {k} is not a triangle")
                faces.append([int(t) for t in tok[1:4]])
        except StopIteration:
            raise ParseError(f"{path}: unexpected end of file") from None
        except (ValueError, IndexError) as exc:
            raise ParseError(f"{path}: {exc}") from None
    return np.array(verts, dtype=float).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3)


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _read_ply(path):
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"ply":
            raise ParseError(f"{path}: missing ply magic")
        fmt = None
        elements = []
        while True:
            raw = fh.readline()
            if not raw:
                raise ParseError(f"{path}: header not terminated")
            parts = raw.decode("ascii", "replace").split()
            if not parts or parts[0] in ("comment", "obj_info"):
                continue
            if parts[0] == "format":
                fmt = parts[1]
            elif parts[0] == "element":
                elements.append((parts[1], int(parts[2]), []))
            elif parts[0] == "property":
                if not elements:
                    raise ParseError(f"{path}: property before element")
                if parts[1] == "list":
                    elements[-1][2].append((parts[4], "list", parts[2], parts[3]))
                else:
                    elements[-1][2].append((parts[2], parts[1]))
            elif parts[0] == "end_header":
                break
        if fmt not in ("ascii", "binary_little_endian"):
            raise ParseError(f"{path}: unsupported PLY format {fmt!r}")
        try:
            if fmt == "ascii":
                data = _ply_ascii(fh, elements)
            else:
                data = _ply_binary(fh, elements)
        except (ValueError, IndexError, KeyError, struct.error) as exc:
            raise ParseError(f"{path}: {exc}") from None
    if "vertex" not in data or "face" not in data:
        raise ParseError(f"{path}: PLY needs vertex and face elements")
    vd = data["vertex"]
    verts = np.column_stack([vd["x"], vd["y"], vd["z"]]).astype(float)
    fd = data["face"]
    key = "vertex_indices" if "vertex_indices" in fd else "vertex_index"
    lists = fd[key]
    if any(len(face) != 3 for face in lists):
        raise ParseError(f"{path}: only triangular faces are supported")
    return verts, np.array(lists, dtype=np.int64).reshape(-1, 3)


def _ply_ascii(fh, elements):
    tokens = fh.read().decode("ascii").split()
    pos = 0
    data = {}
    for name, count, props in elements:
        cols = {p[0]: [] for p in props}
        for _ in range(count):
            for p in props:
                if p[1] == "list":
                    n = int(tokens[pos])
                    cols[p[0]].append([int(t) for t in tokens[pos + 1:pos + 1 + n]])
                    pos += 1 + n
                else:
                    cols[p[0]].append(float(tokens[pos]))
                    pos += 1
        data[name] = cols
    return data


def _ply_binary(fh, elements):
    data = {}
    for name, count, props in elements:
        if all(p[1] != "list" for p in props):
            dtype = np.dtype([(p[0], "<" + _PLY_TYPES[p[1]]) for p in props])
            buf = fh.read(dtype.itemsize * count)
            arr = np.frombuffer(buf, dtype=dtype, count=count)
            data[name] = {p[0]: arr[p[0]] for p in props}
            continue
        cols = {p[0]: [] for p in props}
        for _ in range(count):
            for p in props:
                if p[1] == "list":
                    ct = np.dtype("<" + _PLY_TYPES[p[2]])
                    it = np.dtype("<" + _PLY_TYPES[p[3]])
                    n = int(np.frombuffer(fh.read(ct.itemsize), dtype=ct)[0])
                    cols[p[0]].append(np.frombuffer(fh.read(it.itemsize * n), dtype=it).tolist())
                else:
                    t = np.dtype("<" + _PLY_TYPES[p[1]])
                    cols[p[0]].append(np.frombuffer(fh.read(t.itemsize), dtype=t)[0])
        data[name] = cols
    return data


def _g17(x):
    return f"{float(x):.17g}"


def _write_obj(mesh, path, uv=None):
    with open(path, "w") as fh:
        for p in mesh.vertices:
            fh.write(f"v {_g17(p[0])} {_g17(p[1])} {_g17(p[2])}\n")
        if uv is not None:
            uv = np.asarray(uv)
            if np.iscomplexobj(uv):
                uv = np.column_stack([uv.real, uv.imag])
            for q in uv:
                fh.write(f"vt {_g17(q[0])} {_g17(q[1])}\n")
            for a, b, c in (mesh.faces + 1).tolist():
                fh.write(f"f {a}/{a} {b}/{b} {c}/{c}\n")
        else:
            for a, b, c in (mesh.faces + 1).tolist():
                fh.write(f"f {a} {b} {c}\n")


def _write_off(mesh, path):
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{mesh.n_vertices} {mesh.n_faces} {len(mesh.edges)}\n")
        for p in mesh.vertices:
            fh.write(f"{_g17(p[0])} {_g17(p[1])} {_g17(p[2])}\n")
        for a, b, c in mesh.faces.tolist():
            fh.write(f"3 {a} {b} {c}\n")


def _write_ply(mesh, path, binary=True):
    fmt = "binary_little_endian" if binary else "ascii"
    header = (
        "ply\n"
        f"format {fmt} 1.0\n"
        f"element vertex {mesh.n_vertices}\n"
        "property double x\nproperty double y\nproperty double z\n"
        f"element face {mesh.n_faces}\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if binary:
            fh.write(np.ascontiguousarray(mesh.vertices, dtype="<f8").tobytes())
            rec = np.zeros(mesh.n_faces, dtype=[("n", "u1"), ("i", "<i4", (3,))])
            rec["n"] = 3
            rec["i"] = mesh.faces
            fh.write(rec.tobytes())
        else:
            lines = [f"{_g17(p[0])} {_g17(p[1])} {_g17(p[2])}" for p in mesh.vertices]
            lines += [f"3 {a} {b} {c}" for a, b, c in mesh.faces.tolist()]
            fh.write(("\n".join(lines) + "\n").encode("ascii"))



# -- parameterisations ------------------------------------------------------


def save_uv_csv(uv, path):
    """``vertex,u,v`` rows at 17 significant digits."""
    uv = np.asarray(uv)
    if np.iscomplexobj(uv):
        uv = np.column_stack([uv.real, uv.imag])
    with open(path, "w") as fh:
        fh.write("vertex,u,v\n")
        for i, (u, v) in enumerate(uv):
            fh.write(f"{i},{_g17(u)},{_g17(v)}\n")


def load_uv(path, n_vertices=None):
    """Per-vertex disk coordinates (complex) from CSV ``vertex,u,v`` or OBJ ``vt`` records.

    For OBJ, faces written as ``v/vt`` decide which texture coordinate
    belongs to which vertex; without them ``vt`` records are taken in vertex
    order. Raises :class:`MismatchedVertexCount` when some vertex of an
    ``n_vertices`` mesh has no coordinate.
    """
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".csv":
        uv = _read_uv_csv(path)
    elif ext == ".obj":
        uv = _read_uv_obj(path)
    else:
        raise ParseError(f"cannot infer UV format from extension {ext!r}")
    have = int(np.sum(~np.isnan(uv.real)))
    if n_vertices is not None and (len(uv) != n_vertices or have != n_vertices):
        raise MismatchedVertexCount(f"{path}: expected coordinates for {n_vertices} vertices, found {have}")
    if have != len(uv):
        raise MismatchedVertexCount(f"{path}: {len(uv) - have} vertices have no coordinate")
    return uv


def _read_uv_csv(path):
    rows = {}
    with open(path) as fh:
        header = fh.readline().strip().replace(" ", "")
        if header != "vertex,u,v":
            raise ParseError(f"{path}: expected header 'vertex,u,v', got {header!r}")
        for lineno, line in enumerate(fh, 2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ParseError(f"{path}:{lineno}: expected 3 fields")
            try:
                i = int(parts[0])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad vertex index {parts[0]!r}") from None
            u, v = _floats(parts[1:], f"{path}:{lineno}")
            if i < 0 or i in rows:
                raise ParseError(f"{path}:{lineno}: vertex index {i} negative or repeated")
            rows[i] = complex(u, v)
    n = max(rows) + 1 if rows else 0
    out = np.full(n, np.nan + 0j)
    for i, z in rows.items():
        out[i] = z
    return out


def _read_uv_obj(path):
    n_v = 0
    vt = []
    pairs = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            where = f"{path}:{lineno}"
            if parts[0] == "v":
                n_v += 1
            elif parts[0] == "vt":
                if len(parts) < 3:
                    raise ParseError(f"{where}: texture coordinate needs 2 values")
                vt.append(complex(*_floats(parts[1:3], where)))
            elif parts[0] == "f":
                for tok in parts[1:]:
                    sub = tok.split("/")
                    if len(sub) > 1 and sub[1]:
                        try:
                            a, t = int(sub[0]), int(sub[1])
                        except ValueError:
                            raise ParseError(f"{where}: bad face token {tok!r}") from None
                        a = a - 1 if a > 0 else n_v + a
                        t = t - 1 if t > 0 else len(vt) + t
                        pairs[a] = t
    if not pairs:
        out = np.array(vt, dtype=complex)
        if len(out) < n_v:
            out = np.concatenate([out, np.full(n_v - len(out), np.nan + 0j)])
        return out
    out = np.full(n_v, np.nan + 0j)
    for a, t in pairs.items():
        if not 0 <= t < len(vt):
            raise ParseError(f"{path}: texture index {t + 1} out of range")
        out[a] = vt[t]
    return out
