"""Isosurface extraction via marching cubes, plus OBJ/PLY mesh files.

Cells are polygonized with the classic 256-case tables and linear edge
interpolation; vertices are welded through global edge keys so shared cell
faces reuse shared vertices, which keeps closed surfaces closed.  Triangle
normals point from field > isovalue (occupied, under the positive-inside
convention) toward field < isovalue.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import VoxelGrid
from .mc_tables import CORNER_OFFSETS, CORNER_PAIRS, EDGE_TABLE, TRI_TABLE

# For each cube edge: the lattice offset of its lower corner and its axis.
_EDGE_BASE = []
_EDGE_AXIS = []
for _a, _b in CORNER_PAIRS:
    _oa = np.array(CORNER_OFFSETS[_a])
    _ob = np.array(CORNER_OFFSETS[_b])
    _EDGE_BASE.append(np.minimum(_oa, _ob))
    _EDGE_AXIS.append(int(np.nonzero(_oa != _ob)[0][0]))
_EDGE_BASE = tuple(tuple(int(v) for v in base) for base in _EDGE_BASE)
_EDGE_AXIS = tuple(_EDGE_AXIS)


@dataclass(eq=False)
class TriangleMesh:
    vertices: np.ndarray   # (V, 3) world coordinates
    triangles: np.ndarray  # (T, 3) vertex indices

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.triangles.size:
            if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
                raise ValueError("triangle indices out of range")
            t = self.triangles
            if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
                raise ValueError("degenerate triangle with repeated vertex index")
        if self.vertices.size and not np.all(np.isfinite(self.vertices)):
            raise ValueError("vertex positions must be finite")

    @property
    def is_empty(self):
        return len(self.triangles) == 0

    def edge_use_counts(self):
        """Map undirected edge -> number of incident triangles."""
        counts = {}
        for tri in self.triangles:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (min(a, b), max(a, b))
                counts[key] = counts.get(key, 0) + 1
        return counts


def marching_cubes(field, isovalue):
    """Extract the isovalue surface of a voxel grid as a triangle mesh.

    Corner values exactly equal to the isovalue are nudged by a tiny
    relative epsilon so no triangle degenerates; constant fields produce an
    empty mesh.
    """
    vals = np.asarray(field.values, dtype=np.float64)
    scale = float(np.max(np.abs(vals))) or 1.0
    nudge = vals == isovalue
    if np.any(nudge):
        vals = np.where(nudge, isovalue + 1e-12 * scale, vals)

    below = vals < isovalue
    nx, ny, nz = field.dims
    index = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.int32)
    for corner, (ox, oy, oz) in enumerate(CORNER_OFFSETS):
        index |= below[ox:ox + nx - 1, oy:oy + ny - 1, oz:oz + nz - 1] << corner

    edge_lut = np.asarray(EDGE_TABLE, dtype=np.int32)
    active = np.nonzero(edge_lut[index] != 0)
    vertices = []
    triangles = []
    vertex_ids = {}

    def edge_vertex(i, j, k, edge):
        bx, by, bz = _EDGE_BASE[edge]
        axis = _EDGE_AXIS[edge]
        gi, gj, gk = i + bx, j + by, k + bz
        key = (gi, gj, gk, axis)
        vid = vertex_ids.get(key)
        if vid is not None:
            return vid
        lo = vals[gi, gj, gk]
        step = [0, 0, 0]
        step[axis] = 1
        hi = vals[gi + step[0], gj + step[1], gk + step[2]]
        t = (isovalue - lo) / (hi - lo)
        lattice = np.array([gi, gj, gk], dtype=np.float64)
        lattice[axis] += t
        vid = len(vertices)
        vertices.append(field.origin + field.spacing * lattice)
        vertex_ids[key] = vid
        return vid

    for i, j, k in zip(*active):
        case = index[i, j, k]
        tri_edges = TRI_TABLE[case]
        cell_vid = {}
        for edge in sorted(set(tri_edges)):
            cell_vid[edge] = edge_vertex(i, j, k, edge)
        for e0, e1, e2 in zip(tri_edges[0::3], tri_edges[1::3], tri_edges[2::3]):
            a, b, c = cell_vid[e0], cell_vid[e1], cell_vid[e2]
            if a == b or b == c or a == c:
                continue
            # table winding faces the below-isovalue side; flip so normals
            # point outward from the occupied (field > isovalue) region
            triangles.append((a, c, b))

    if not triangles:
        return TriangleMesh(np.empty((0, 3)), np.empty((0, 3), dtype=np.int64))
    return TriangleMesh(np.asarray(vertices), np.asarray(triangles, dtype=np.int64))


def write_mesh(path, mesh, fmt=None):
    """Write OBJ (ascii) or PLY (binary little-endian); format from extension if omitted."""
    fmt = _resolve_format(path, fmt)
    try:
        if fmt == "obj":
            _write_obj(path, mesh)
        else:
            _write_ply(path, mesh)
    except OSError as exc:
        raise OSError(f"failed writing mesh to {path}: {exc}") from exc


def read_mesh(path, fmt=None):
    fmt = _resolve_format(path, fmt)
    try:
        return _read_obj(path) if fmt == "obj" else _read_ply(path)
    except OSError as exc:
        raise OSError(f"failed reading mesh from {path}: {exc}") from exc


def _resolve_format(path, fmt):
    if fmt is None:
        fmt = str(path).rsplit(".", 1)[-1].lower()
    fmt = fmt.lower()
    if fmt not in ("obj", "ply"):
        raise ValueError(f"unsupported mesh format {fmt!r} (use obj or ply)")
    return fmt


def _write_obj(path, mesh):
    verts = mesh.vertices.astype(np.float32)
    with open(path, "w") as fh:
        for x, y, z in verts:
            fh.write(f"v {x} {y} {z}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")


def _read_obj(path):
    verts = []
    tris = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(v) for v in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(tok.split("/")[0]) - 1 for tok in parts[1:]]
                for c in range(1, len(idx) - 1):
                    tris.append((idx[0], idx[c], idx[c + 1]))
    return TriangleMesh(np.asarray(verts, dtype=np.float32).reshape(-1, 3),
                        np.asarray(tris, dtype=np.int64).reshape(-1, 3))


_PLY_HEADER = """ply
format binary_little_endian 1.0
element vertex {nv}
property float x
property float y
property float z
element face {nt}
property list uchar int vertex_indices
end_header
"""


def _write_ply(path, mesh):
    verts = np.ascontiguousarray(mesh.vertices, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_PLY_HEADER.format(nv=len(verts), nt=len(mesh.triangles)).encode())
        fh.write(verts.tobytes())
        if len(mesh.triangles):
            face = np.empty(len(mesh.triangles), dtype=[("n", "u1"), ("idx", "<i4", 3)])
            face["n"] = 3
            face["idx"] = mesh.triangles
            fh.write(face.tobytes())


def _read_ply(path):
    with open(path, "rb") as fh:
        header = b""
        while not header.endswith(b"end_header\n"):
            chunk = fh.readline()
            if not chunk:
                raise ValueError(f"{path}: unterminated PLY header")
            header += chunk
        lines = header.decode().splitlines()
        if lines[0] != "ply" or "format binary_little_endian 1.0" not in lines[1]:
            raise ValueError(f"{path}: expected binary little-endian PLY")
        nv = nt = 0
        for line in lines:
            parts = line.split()
            if parts[:2] == ["element", "vertex"]:
                nv = int(parts[2])
            elif parts[:2] == ["element", "face"]:
                nt = int(parts[2])
        verts = np.frombuffer(fh.read(12 * nv), dtype="<f4").reshape(nv, 3)
        face = np.frombuffer(fh.read(13 * nt),
                             dtype=[("n", "u1"), ("idx", "<i4", 3)])
        if len(face) != nt or np.any(face["n"] != 3):
            raise ValueError(f"{path}: malformed face block")
    return TriangleMesh(verts, face["idx"].astype(np.int64).reshape(nt, 3))
