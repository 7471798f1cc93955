"""On-disk animation clips.

A clip is a directory holding ``neutral.obj``, ``frame_000.obj`` ...
``frame_{K-1}.obj`` and a ``clip.meta`` file with ``subject=``,
``expression_class=`` and ``num_frames=`` lines. A dataset directory is any
directory whose immediate subdirectories are clips.
"""

from __future__ import annotations

from pathlib import Path

from .errors import DataError, ParseError
from .mesh import (
    AnimationClip,
    TriangleMesh,
    apply_deformation,
    compute_deformation,
    load_mesh,
    save_mesh,
)

__all__ = ["save_clip", "load_clip", "list_clip_dirs", "load_dataset", "frame_name"]


def frame_name(i: int) -> str:
    return f"frame_{i:03d}.obj"


def save_clip(clip: AnimationClip, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_mesh(clip.neutral, directory / "neutral.obj")
    for i, d in enumerate(clip.frames):
        save_mesh(apply_deformation(clip.neutral, d), directory / frame_name(i))
    meta = (
        f"subject={clip.subject_id}\n"
        f"expression_class={clip.expression_class}\n"
        f"num_frames={clip.num_frames}\n"
    )
    (directory / "clip.meta").write_text(meta, encoding="utf-8")
    return directory


def _read_meta(path: Path) -> dict:
    meta = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError("expected 'key=value'", path, lineno)
        key, value = line.split("=", 1)
        meta[key.strip()] = value.strip()
    for key in ("subject", "expression_class", "num_frames"):
        if key not in meta:
            raise ParseError(f"missing key '{key}'", path)
    return meta


def load_clip(directory, unit_scale: float = 1.0) -> AnimationClip:
    directory = Path(directory)
    meta_path = directory / "clip.meta"
    if not meta_path.exists():
        raise DataError(f"not a clip directory (no clip.meta): {directory}")
    meta = _read_meta(meta_path)
    k = int(meta["num_frames"])
    neutral = load_mesh(directory / "neutral.obj", unit_scale)
    frames = []
    for i in range(k):
        frame_path = directory / frame_name(i)
        if not frame_path.exists():
            raise DataError(f"missing frame file: {frame_path}")
        mesh = load_mesh(frame_path, unit_scale)
        if mesh.topology_id != neutral.topology_id:
            raise DataError(f"frame {i} topology differs from neutral: {frame_path}")
        frames.append(compute_deformation(mesh, neutral))
    return AnimationClip(
        neutral=neutral,
        frames=tuple(frames),
        expression_class=int(meta["expression_class"]),
        subject_id=meta["subject"],
    )


def list_clip_dirs(dataset_dir) -> list[Path]:
    dataset_dir = Path(dataset_dir)
    if not dataset_dir.is_dir():
        raise DataError(f"no such dataset directory: {dataset_dir}")
    dirs = sorted(p for p in dataset_dir.iterdir() if (p / "clip.meta").exists())
    if not dirs:
        raise DataError(f"no clips found under {dataset_dir}")
    return dirs


def load_dataset(dataset_dir, unit_scale: float = 1.0) -> list[AnimationClip]:
    return [load_clip(p, unit_scale) for p in list_clip_dirs(dataset_dir)]
