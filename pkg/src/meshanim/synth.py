"""Synthetic animation dataset for desk-scale experiments.

Subjects are perturbed icospheres; each expression class displaces a
class-specific anchor region radially, ramped from zero to an apex over the
clip. Classes use disjoint anchor regions, so a sequence classifier can
separate them, and every draw comes from keyed streams, so the dataset is a
bitwise-reproducible function of its parameters.
"""

from __future__ import annotations

import numpy as np

from . import rng
from .errors import DataError
from .mesh import AnimationClip, DeformationField, TriangleMesh

__all__ = [
    "icosphere",
    "icosphere_level_for",
    "synth_anchor_indices",
    "synth_landmarks",
    "synth_dataset",
]

_PHI = (1.0 + np.sqrt(5.0)) / 2.0

_ICO_VERTS = np.array(
    [
        [-1, _PHI, 0], [1, _PHI, 0], [-1, -_PHI, 0], [1, -_PHI, 0],
        [0, -1, _PHI], [0, 1, _PHI], [0, -1, -_PHI], [0, 1, -_PHI],
        [_PHI, 0, -1], [_PHI, 0, 1], [-_PHI, 0, -1], [-_PHI, 0, 1],
    ],
    dtype=np.float64,
)

_ICO_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ],
    dtype=np.int64,
)


def icosphere(level: int, radius: float = 1.0) -> TriangleMesh:
    """Geodesic sphere: icosahedron subdivided ``level`` times.

    Vertex counts by level: 12, 42, 162, 642, 2562, ... All faces are wound
    counterclockwise seen from outside.
    """
    if level < 0 or level > 7:
        raise DataError("subdivision level must be in [0, 7]")
    verts = [row / np.linalg.norm(row) for row in _ICO_VERTS]
    faces = [tuple(f) for f in _ICO_FACES]
    for _ in range(level):
        midpoint: dict = {}
        new_faces = []

        def mid(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in midpoint:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                midpoint[key] = len(verts) - 1
            return midpoint[key]

        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    v = np.asarray(verts) * radius
    return TriangleMesh(v, np.asarray(faces, dtype=np.int64))


def icosphere_level_for(n_target: int) -> int:
    """Smallest subdivision level whose vertex count reaches ``n_target``."""
    for level in range(8):
        if 10 * 4**level + 2 >= n_target:
            return level
    raise DataError(f"n_target {n_target} too large")


def _class_directions(n_classes: int) -> np.ndarray:
    """Well-separated unit directions, one per class, around the equator."""
    azimuth = 2.0 * np.pi * np.arange(n_classes) / n_classes
    elevation = np.where(np.arange(n_classes) % 2 == 0, 0.45, -0.45)
    return np.stack(
        [
            np.cos(elevation) * np.cos(azimuth),
            np.cos(elevation) * np.sin(azimuth),
            np.sin(elevation),
        ],
        axis=1,
    )


def synth_anchor_indices(n_classes: int, n_target: int) -> list[list[int]]:
    """Anchor vertex indices per class on the base sphere (seed-independent)."""
    base = icosphere(icosphere_level_for(n_target))
    dirs = _class_directions(n_classes)
    anchors = []
    for c in range(n_classes):
        dist = np.linalg.norm(base.vertices - dirs[c], axis=1)
        anchors.append([int(i) for i in np.argsort(dist)[:3]])
    return anchors


def synth_landmarks(n_classes: int, n_target: int) -> list[int]:
    """Union of all class anchors, sorted: the synthetic landmark set."""
    seen = set()
    for group in synth_anchor_indices(n_classes, n_target):
        seen.update(group)
    return sorted(seen)


def _bump_width(n_classes: int, radius: float) -> float:
    return radius * min(0.33, 0.55 * np.sin(np.pi / max(n_classes, 2)))


def _subject_mesh(base: TriangleMesh, seed: int, subject: int, radius: float) -> TriangleMesh:
    g = rng.stream(seed, "subject", subject)
    unit = base.vertices / radius
    field = np.zeros(base.n_vertices)
    for _ in range(6):
        direction = g.standard_normal(3)
        direction /= np.linalg.norm(direction)
        weight = g.standard_normal()
        field += weight * np.exp(-np.sum((unit - direction) ** 2, axis=1) / 0.5)
    scale = 1.0 + 0.04 * g.standard_normal()
    r = radius * scale * (1.0 + 0.03 * field)
    return TriangleMesh(unit * r[:, None], base.faces)


def _class_template(
    mesh: TriangleMesh, anchors: list[int], sigma: float, amplitude: float
) -> np.ndarray:
    """Radial Gaussian bumps at the anchor vertices, (N, 3)."""
    centroid = mesh.vertices.mean(axis=0)
    rel = mesh.vertices - centroid
    radial = rel / np.linalg.norm(rel, axis=1, keepdims=True)
    weight = np.zeros(mesh.n_vertices)
    for a in anchors:
        d2 = np.sum((mesh.vertices - mesh.vertices[a]) ** 2, axis=1)
        weight += np.exp(-d2 / (2.0 * sigma**2))
    return amplitude * weight[:, None] * radial


def synth_dataset(
    n_subjects: int,
    n_classes: int,
    K: int,
    N_target: int,
    seed: int,
    radius: float = 100.0,
    amplitude: float = 2.5,
    jitter: float = 0.02,
) -> list[AnimationClip]:
    """Generate one neutral-to-apex clip per (subject, class).

    Frame ``i`` carries ``(i / (K - 1)) * intensity`` of the class template
    plus a small spatially smooth jitter; frame 0 is exactly zero. Subject
    ids are ``subj00`` ... and clip intensities vary per (subject, class).
    """
    if n_classes < 2:
        raise DataError("need at least 2 expression classes")
    if K < 2:
        raise DataError("need at least 2 frames per clip")
    if n_subjects < 1:
        raise DataError("need at least 1 subject")

    base = icosphere(icosphere_level_for(N_target), radius)
    anchors = synth_anchor_indices(n_classes, N_target)
    sigma = _bump_width(n_classes, radius)
    ramp = np.arange(K, dtype=np.float64) / (K - 1)

    clips = []
    for s in range(n_subjects):
        neutral = _subject_mesh(base, seed, s, radius)
        unit = neutral.vertices / np.linalg.norm(neutral.vertices, axis=1, keepdims=True)
        for c in range(n_classes):
            template = _class_template(neutral, anchors[c], sigma, amplitude)
            intensity = 0.55 + 0.45 * rng.uniform(seed, "intensity", s, c)
            frames = [DeformationField(np.zeros((neutral.n_vertices, 3)), neutral.topology_id)]
            for i in range(1, K):
                offsets = ramp[i] * intensity * template
                g = rng.stream(seed, "jitter", s, c, i)
                direction = g.standard_normal(3)
                direction /= np.linalg.norm(direction)
                motion = g.standard_normal(3)
                blob = np.exp(-np.sum((unit - direction) ** 2, axis=1) / 0.5)
                offsets = offsets + jitter * ramp[i] * blob[:, None] * motion
                frames.append(DeformationField(offsets, neutral.topology_id))
            clips.append(
                AnimationClip(
                    neutral=neutral,
                    frames=tuple(frames),
                    expression_class=c,
                    subject_id=f"subj{s:02d}",
                )
            )
    return clips
