"""Fixed-topology triangle meshes, deformation fields and animation clips.

All geometry is stored in millimeters. Meshes are immutable after
construction and safe to share between threads; every operation here is a
pure function of its inputs.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, ParseError, TopologyError

__all__ = [
    "TriangleMesh",
    "DeformationField",
    "AnimationClip",
    "TopologyReport",
    "EPS_NEUTRAL",
    "load_mesh",
    "save_mesh",
    "validate_topology",
    "compute_deformation",
    "apply_deformation",
]

# Magnitude below which a frame counts as "still neutral" (mm).
EPS_NEUTRAL = 1e-6

# Fixed-point coordinate format used on disk; parsing it back and
# re-formatting reproduces the same bytes, so saves are idempotent.
_COORD_FMT = "{:.6f}"


def _topology_id(faces: np.ndarray) -> str:
    h = hashlib.blake2b(digest_size=8)
    h.update(np.ascontiguousarray(faces, dtype=np.int64).tobytes())
    h.update(str(faces.shape).encode())
    return h.hexdigest()


class TriangleMesh:
    """Triangle mesh with N vertices and F counterclockwise-wound faces.

    Parameters
    ----------
    vertices : (N, 3) float array
        Coordinates in millimeters.
    faces : (F, 3) int array
        0-based vertex indices, three distinct indices per face.

    Construction validates index ranges, face degeneracy and coordinate
    finiteness. Vertex/face arrays are copied and frozen.
    """

    __slots__ = ("vertices", "faces", "_topo_id")

    def __init__(self, vertices, faces):
        v = np.asarray(vertices, dtype=np.float64)
        f = np.asarray(faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise DataError(f"vertices must be (N, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise DataError(f"faces must be (F, 3), got {f.shape}")
        if v.shape[0] == 0:
            raise DataError("empty mesh")
        if not np.all(np.isfinite(v)):
            raise DataError("non-finite vertex coordinate")
        if f.size:
            if f.min() < 0 or f.max() >= v.shape[0]:
                raise DataError("face index out of range")
            degenerate = (
                (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
            )
            if degenerate.any():
                raise DataError(
                    f"degenerate face at row {int(np.flatnonzero(degenerate)[0])}"
                )
        v.setflags(write=False)
        f.setflags(write=False)
        self.vertices = v
        self.faces = f
        self._topo_id = _topology_id(f)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def topology_id(self) -> str:
        """Hash of the face list; equal ids mean identical connectivity."""
        return self._topo_id

    def with_vertices(self, vertices) -> "TriangleMesh":
        """New mesh with the same faces and replaced coordinates."""
        return TriangleMesh(vertices, self.faces)

    def __repr__(self):
        return f"TriangleMesh(N={self.n_vertices}, F={self.n_faces})"


class DeformationField:
    """Per-vertex offsets (mm) bound to a specific mesh topology."""

    __slots__ = ("offsets", "topology_id")

    def __init__(self, offsets, topology_id: str):
        d = np.asarray(offsets, dtype=np.float64)
        if d.ndim != 2 or d.shape[1] != 3:
            raise DataError(f"offsets must be (N, 3), got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise DataError("non-finite deformation value")
        d.setflags(write=False)
        self.offsets = d
        self.topology_id = topology_id

    @property
    def n_vertices(self) -> int:
        return self.offsets.shape[0]

    def __repr__(self):
        return f"DeformationField(N={self.n_vertices})"


@dataclass(frozen=True)
class AnimationClip:
    """Ordered deformation frames over one neutral mesh.

    ``frames[0]`` is expected to be (near) zero for dataset clips; use
    :meth:`require_neutral_start` to enforce that. Generated clips may carry
    a small residual in frame 0 and skip the check.
    """

    neutral: TriangleMesh
    frames: tuple
    expression_class: int
    subject_id: str

    def __post_init__(self):
        if len(self.frames) < 2:
            raise DataError("clip needs at least 2 frames")
        for i, f in enumerate(self.frames):
            if f.topology_id != self.neutral.topology_id:
                raise TopologyError(f"frame {i} bound to a different topology")
            if f.n_vertices != self.neutral.n_vertices:
                raise TopologyError(f"frame {i} has wrong vertex count")
        if self.expression_class < 0:
            raise DataError("expression_class must be >= 0")
        object.__setattr__(self, "frames", tuple(self.frames))

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    def frame_mesh(self, i: int) -> TriangleMesh:
        return apply_deformation(self.neutral, self.frames[i])

    def require_neutral_start(self, eps: float = EPS_NEUTRAL) -> "AnimationClip":
        """Raise unless frame 0 offsets are all within ``eps`` mm of zero."""
        mag = float(np.abs(self.frames[0].offsets).max(initial=0.0))
        if mag > eps:
            raise DataError(f"frame 0 is not neutral (max offset {mag:g} mm)")
        return self


@dataclass(frozen=True)
class TopologyReport:
    is_manifold: bool
    winding_consistent: bool
    unreferenced_vertices: tuple = field(default_factory=tuple)
    boundary_edge_count: int = 0


# ---------------------------------------------------------------------------
# deformation algebra


def compute_deformation(frame: TriangleMesh, neutral: TriangleMesh) -> DeformationField:
    """Offsets that carry ``neutral`` onto ``frame`` (frame minus neutral)."""
    if frame.topology_id != neutral.topology_id or frame.n_vertices != neutral.n_vertices:
        raise TopologyError("frame and neutral meshes have different topology")
    return DeformationField(frame.vertices - neutral.vertices, neutral.topology_id)


def apply_deformation(neutral: TriangleMesh, d: DeformationField) -> TriangleMesh:
    """Displace every vertex of ``neutral`` by its offset; faces unchanged."""
    if d.n_vertices != neutral.n_vertices:
        raise TopologyError(
            f"deformation has {d.n_vertices} vertices, mesh has {neutral.n_vertices}"
        )
    if d.topology_id != neutral.topology_id:
        raise TopologyError("deformation bound to a different topology")
    return TriangleMesh(neutral.vertices + d.offsets, neutral.faces)


# ---------------------------------------------------------------------------
# topology validation


def validate_topology(mesh: TriangleMesh) -> TopologyReport:
    """Edge-incidence analysis of the face list.

    An edge is a boundary edge when exactly one face uses it. The mesh is
    edge-manifold when no edge is shared by more than two faces, and the
    winding is consistent when every interior edge is traversed once in each
    direction.
    """
    f = mesh.faces
    directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]], axis=0)
    lo = np.minimum(directed[:, 0], directed[:, 1])
    hi = np.maximum(directed[:, 0], directed[:, 1])
    undirected = np.stack([lo, hi], axis=1)

    und_unique, und_counts = np.unique(undirected, axis=0, return_counts=True)
    dir_unique, dir_counts = np.unique(directed, axis=0, return_counts=True)

    boundary = int(np.sum(und_counts == 1))
    manifold = bool(np.all(und_counts <= 2))
    # Interior edges must appear exactly once per direction: no duplicated
    # directed edge anywhere, and no doubly-used undirected edge whose two
    # uses point the same way.
    winding = bool(np.all(dir_counts == 1)) and manifold

    referenced = np.zeros(mesh.n_vertices, dtype=bool)
    referenced[f.reshape(-1)] = True
    unreferenced = tuple(int(i) for i in np.flatnonzero(~referenced))

    return TopologyReport(
        is_manifold=manifold,
        winding_consistent=winding,
        unreferenced_vertices=unreferenced,
        boundary_edge_count=boundary,
    )


# ---------------------------------------------------------------------------
# file I/O (ASCII OBJ / ASCII PLY, triangles only)

_OBJ_IGNORED = {"vn", "vt", "vp", "s", "o", "g", "usemtl", "mtllib", "l", "p"}


def _parse_obj(path: Path):
    vertices = []
    faces = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            tag = tokens[0]
            if tag == "v":
                if len(tokens) != 4:
                    raise ParseError("vertex line must be 'v x y z'", path, lineno)
                try:
                    vertices.append([float(t) for t in tokens[1:]])
                except ValueError:
                    raise ParseError("malformed vertex coordinate", path, lineno)
            elif tag == "f":
                if len(tokens) != 4:
                    raise ParseError(
                        f"non-triangle face ({len(tokens) - 1} corners)", path, lineno
                    )
                idx = []
                for t in tokens[1:]:
                    if "/" in t:
                        raise ParseError(
                            "face tokens with '/' attributes are not supported",
                            path,
                            lineno,
                        )
                    try:
                        i = int(t)
                    except ValueError:
                        raise ParseError("malformed face index", path, lineno)
                    if i < 1:
                        raise ParseError("face indices must be positive", path, lineno)
                    idx.append(i - 1)
                faces.append(idx)
            elif tag in _OBJ_IGNORED:
                continue
            else:
                raise ParseError(f"unsupported directive '{tag}'", path, lineno)
    return vertices, faces


def _parse_ply(path: Path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError("missing 'ply' magic", path, 1)

    n_vertex = n_face = None
    in_header = True
    body_start = 0
    current_element = None
    for lineno, line in enumerate(lines[1:], start=2):
        tokens = line.split()
        if not tokens:
            continue
        if tokens[0] == "format":
            if tokens[1] != "ascii":
                raise ParseError("only ASCII PLY is supported", path, lineno)
        elif tokens[0] == "element":
            current_element = tokens[1]
            if tokens[1] == "vertex":
                n_vertex = int(tokens[2])
            elif tokens[1] == "face":
                n_face = int(tokens[2])
            else:
                raise ParseError(f"unsupported element '{tokens[1]}'", path, lineno)
        elif tokens[0] == "end_header":
            body_start = lineno
            in_header = False
            break
        elif tokens[0] in ("property", "comment"):
            continue
        else:
            raise ParseError(f"unexpected header line '{tokens[0]}'", path, lineno)
    if in_header:
        raise ParseError("missing end_header", path, len(lines))
    if n_vertex is None or n_face is None:
        raise ParseError("header must declare vertex and face elements", path, body_start)

    vertices = []
    faces = []
    cursor = body_start  # 0-based index into lines; body_start line is end_header
    for k in range(n_vertex):
        lineno = cursor + k + 1
        if cursor + k >= len(lines):
            raise ParseError("unexpected end of vertex list", path, lineno)
        tokens = lines[cursor + k].split()
        if len(tokens) < 3:
            raise ParseError("vertex needs 3 coordinates", path, lineno)
        try:
            vertices.append([float(t) for t in tokens[:3]])
        except ValueError:
            raise ParseError("malformed vertex coordinate", path, lineno)
    cursor += n_vertex
    for k in range(n_face):
        lineno = cursor + k + 1
        if cursor + k >= len(lines):
            raise ParseError("unexpected end of face list", path, lineno)
        tokens = lines[cursor + k].split()
        try:
            count = int(tokens[0])
        except (ValueError, IndexError):
            raise ParseError("malformed face count", path, lineno)
        if count != 3 or len(tokens) != 4:
            raise ParseError(f"non-triangle face ({count} corners)", path, lineno)
        try:
            faces.append([int(t) for t in tokens[1:]])
        except ValueError:
            raise ParseError("malformed face index", path, lineno)
    return vertices, faces


def load_mesh(path, unit_scale: float = 1.0) -> TriangleMesh:
    """Load an ASCII OBJ or PLY triangle mesh.

    ``unit_scale`` multiplies coordinates on load; pass 1000 for datasets
    stored in meters to obtain millimeters.
    """
    path = Path(path)
    if unit_scale <= 0:
        raise DataError("unit_scale must be positive")
    if not path.exists():
        raise DataError(f"no such file: {path}")
    suffix = path.suffix.lower()
    if suffix == ".obj":
        vertices, faces = _parse_obj(path)
    elif suffix == ".ply":
        vertices, faces = _parse_ply(path)
    else:
        raise DataError(f"unsupported mesh format '{suffix}' (use .obj or .ply)")
    if not vertices:
        raise ParseError("empty mesh", path)
    v = np.asarray(vertices, dtype=np.float64) * unit_scale
    f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if f.size and f.max() >= len(v):
        raise ParseError(f"face index {int(f.max()) + 1} out of range", path)
    return TriangleMesh(v, f)


def save_mesh(mesh: TriangleMesh, path) -> None:
    """Write the mesh as ASCII OBJ or PLY, chosen by file extension.

    Coordinates are written with 6 decimals, so a load/save round trip is
    exact to 5e-7 mm and re-saving a loaded file is byte-identical.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if mesh.n_vertices == 0:
        raise DataError("empty mesh")
    coords = [
        " ".join(_COORD_FMT.format(c) for c in row) for row in mesh.vertices
    ]
    if suffix == ".obj":
        out = []
        for row in coords:
            out.append(f"v {row}")
        for a, b, c in mesh.faces:
            out.append(f"f {a + 1} {b + 1} {c + 1}")
    elif suffix == ".ply":
        out = [
            "ply",
            "format ascii 1.0",
            f"element vertex {mesh.n_vertices}",
            "property float x",
            "property float y",
            "property float z",
            f"element face {mesh.n_faces}",
            "property list uchar int vertex_indices",
            "end_header",
        ]
        out.extend(coords)
        for a, b, c in mesh.faces:
            out.append(f"3 {a} {b} {c}")
    else:
        raise DataError(f"unsupported mesh format '{suffix}' (use .obj or .ply)")
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("\n".join(out) + "\n", encoding="utf-8")
    tmp.replace(path)
