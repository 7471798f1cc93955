"""Ordered neighbor spirals over a fixed triangle topology.

Each vertex gets a fixed-length sequence: itself, then its 1-ring walked in
face-winding (counterclockwise) order, then outer rings in breadth-first
discovery order, truncated or sentinel-padded to length L. The table is a
pure function of (faces, L); rebuilding yields an identical array.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DataError, ParseError, TopologyError

__all__ = ["SpiralTable", "build_spirals", "save_spirals", "load_spirals"]


class SpiralTable:
    """N spiral sequences of length L; entries equal to N mean "no vertex"."""

    __slots__ = ("sequences", "n_vertices", "length")

    def __init__(self, sequences: np.ndarray, n_vertices: int):
        seq = np.ascontiguousarray(sequences, dtype=np.intp)
        if seq.ndim != 2:
            raise DataError("spiral table must be 2-D")
        self.sequences = seq
        self.n_vertices = int(n_vertices)
        self.length = seq.shape[1]
        seq.setflags(write=False)

    @property
    def pad_sentinel(self) -> int:
        return self.n_vertices

    def truncated(self, length: int) -> "SpiralTable":
        """Prefix table of smaller L; identical to rebuilding with that L."""
        if length > self.length:
            raise DataError(f"cannot extend table of length {self.length} to {length}")
        return SpiralTable(self.sequences[:, :length], self.n_vertices)

    def __eq__(self, other):
        return (
            isinstance(other, SpiralTable)
            and self.n_vertices == other.n_vertices
            and np.array_equal(self.sequences, other.sequences)
        )


def _winding_successors(faces: np.ndarray, n_vertices: int):
    """For each vertex v, the map x -> y over faces (v, x, y) in cyclic order.

    Walking the map traverses v's 1-ring counterclockwise when faces are
    counterclockwise seen from outside.
    """
    succ = [dict() for _ in range(n_vertices)]
    for a, b, c in faces:
        succ[a][b] = c
        succ[b][c] = a
        succ[c][a] = b
    return succ


def _one_ring_order(v: int, succ_v: dict) -> list[int]:
    """1-ring of v in winding order.

    Closed rings start at the smallest-index neighbor. Open fans (boundary
    vertices) must start at the unique neighbor without a predecessor so the
    walk covers the whole fan.
    """
    if not succ_v:
        raise TopologyError(f"vertex {v} has no incident face")
    values = set(succ_v.values())
    starts = [u for u in succ_v if u not in values]
    if not starts:
        start = min(succ_v)  # closed ring: any start works, pick deterministic
    elif len(starts) == 1:
        start = starts[0]  # open fan: forced start
    else:
        # Non-manifold neighborhood: several fans. Walk each, smallest start first.
        ring = []
        for start in sorted(starts):
            u = start
            while u is not None and u not in ring:
                ring.append(u)
                u = succ_v.get(u)
        for u in sorted(succ_v):  # isolated cycles unreachable from any start
            if u not in ring:
                cycle_start = u
                while u not in ring:
                    ring.append(u)
                    u = succ_v[u]
        return ring
    ring = [start]
    u = succ_v.get(start)
    while u is not None and u != start:
        ring.append(u)
        u = succ_v.get(u)
    return ring


def build_spirals(faces: np.ndarray, n_vertices: int, length: int) -> SpiralTable:
    """Build the spiral table for a triangle list.

    Ring 1 follows the face winding starting at the smallest-index neighbor
    (or the forced end of an open fan). Rings beyond the first are found
    breadth-first: parents are visited in their spiral order and each
    parent's unseen neighbors join sorted by index.
    """
    faces = np.asarray(faces, dtype=np.int64)
    if length < 1:
        raise DataError("spiral length must be >= 1")
    if faces.ndim != 2 or faces.shape[1] != 3:
        raise DataError("faces must be (F, 3)")

    succ = _winding_successors(faces, n_vertices)
    neighbors = [set() for _ in range(n_vertices)]
    for a, b, c in faces:
        neighbors[a].update((b, c))
        neighbors[b].update((a, c))
        neighbors[c].update((a, b))

    sentinel = n_vertices
    table = np.full((n_vertices, length), sentinel, dtype=np.intp)
    for v in range(n_vertices):
        spiral = [v]
        seen = {v}
        ring = _one_ring_order(v, succ[v])
        while spiral and len(spiral) < length and ring:
            spiral.extend(u for u in ring if u not in seen)
            seen.update(ring)
            nxt = []
            for parent in ring:
                for u in sorted(neighbors[parent]):
                    if u not in seen and u not in nxt:
                        nxt.append(u)
            ring = nxt
        table[v, : min(len(spiral), length)] = spiral[:length]
    return SpiralTable(table, n_vertices)


def save_spirals(table: SpiralTable, path) -> None:
    """Line-oriented text export, sentinel written as -1."""
    lines = []
    for v in range(table.sequences.shape[0]):
        row = [
            str(int(i)) if i != table.pad_sentinel else "-1"
            for i in table.sequences[v]
        ]
        lines.append(f"{v}: " + " ".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_spirals(path) -> SpiralTable:
    path = Path(path)
    rows = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        head, _, rest = line.partition(":")
        if not rest:
            raise ParseError("expected 'vertex: i0 i1 ...'", path, lineno)
        if int(head) != len(rows):
            raise ParseError(f"rows out of order (found {head})", path, lineno)
        rows.append([int(t) for t in rest.split()])
    if not rows:
        raise ParseError("empty spiral table", path)
    n = len(rows)
    seq = np.asarray(rows, dtype=np.intp)
    seq[seq == -1] = n
    return SpiralTable(seq, n)
