"""
Scene dumps: binary PPM images plus a JSON-lines annotation file.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np

from ..exceptions import SplurgeContextTransformerFileError
from ..logging import log_performance
from ..utils.file_io_adapter import FileIoAdapter
from .render import Scene

# Module domains
DOMAINS = ["synthdata", "dump", "io"]

__all__ = ["ANNOTATIONS_FILE", "scene_record", "encode_ppm", "dump_scenes", "load_annotations"]

ANNOTATIONS_FILE = "annotations.jsonl"


def scene_record(scene: Scene, image_name: str | None = None) -> dict[str, Any]:
    record: dict[str, Any] = {
        "scene_id": scene.scene_id,
        "domain": scene.domain,
        "objects": [
            {"class": a.class_id, "cx": a.box.cx, "cy": a.box.cy, "w": a.box.w, "h": a.box.h}
            for a in scene.annotations
        ],
    }
    if image_name is not None:
        record["image"] = image_name
    return record


def encode_ppm(image: np.ndarray) -> bytes:
    """8-bit binary PPM (P6) of an H x W x 3 image in [0, 1]."""
    height, width = image.shape[:2]
    pixels = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    return f"P6\n{width} {height}\n255\n".encode("ascii") + pixels.tobytes(order="C")


@log_performance("dump_scenes")
def dump_scenes(scenes: Sequence[Scene], out_dir: str | Path, prefix: str = "scene") -> Path:
    """Write every scene image and one annotation record per scene; return the annotation path."""
    out = Path(out_dir)
    lines = []
    for scene in scenes:
        name = f"{prefix}_{scene.scene_id:05d}.ppm"
        FileIoAdapter.write_bytes(out / "images" / name, encode_ppm(scene.image), context_type="scene")
        lines.append(json.dumps(scene_record(scene, f"images/{name}"), sort_keys=True))
    annotations = out / ANNOTATIONS_FILE
    FileIoAdapter.write_text(annotations, "\n".join(lines) + ("\n" if lines else ""), context_type="scene")
    return annotations


def load_annotations(path: str | Path) -> list[dict[str, Any]]:
    """Read a JSON-lines annotation file written by :func:`dump_scenes`.

    Raises:
        SplurgeContextTransformerFileError: If the file is missing or a line is not valid JSON
    """
    text = FileIoAdapter.read_text(path, context_type="scene")
    records = []
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise SplurgeContextTransformerFileError(
                f"Invalid annotation record on line {number}: {exc.msg}", details={"file_path": str(path)}
            ) from exc
    return records
