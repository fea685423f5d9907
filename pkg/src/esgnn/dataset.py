"""Corpus generation and loading.

A dataset is a directory with one JSON file per scene plus a manifest that
records the generator seed, the scene files and the train/val/test split.
Scene i is generated from ``default_rng([seed, i])`` so any single scene can
be reproduced without regenerating the rest.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import DataError, SchemaVersionError
from .generator import GeneratorConfig, generate_scene
from .scene import DEFAULT_LABELS, LabelSpace, Scene, load_scene

MANIFEST_SCHEMA = "esgnn-dataset/1"
SPLIT_NAMES = ("train", "val", "test")

# val and test each get this fraction (rounded); train keeps the remainder
VAL_FRACTION = 0.15
TEST_FRACTION = 0.15


def split_indices(count: int) -> dict[str, list[int]]:
    """Contiguous train/val/test index lists; train absorbs rounding slack."""
    if count < 3:
        raise DataError(f"need at least 3 scenes to split, got {count}")
    n_val = max(1, round(count * VAL_FRACTION))
    n_test = max(1, round(count * TEST_FRACTION))
    n_train = count - n_val - n_test
    if n_train < 1:
        raise DataError(f"count {count} leaves no training scenes")
    return {
        "train": list(range(n_train)),
        "val": list(range(n_train, n_train + n_val)),
        "test": list(range(n_train + n_val, count)),
    }


def scene_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def write_dataset(
    out_dir,
    count: int,
    seed: int,
    config: GeneratorConfig | None = None,
    labels: LabelSpace = DEFAULT_LABELS,
) -> dict:
    """Generate ``count`` scenes under ``out_dir`` and write the manifest."""
    from .scene import save_scene

    scenes_dir = os.path.join(out_dir, "scenes")
    os.makedirs(scenes_dir, exist_ok=True)
    files = []
    for i in range(count):
        scene = generate_scene(scene_rng(seed, i), scene_id=f"scene-{i:05d}",
                               labels=labels, config=config)
        rel = os.path.join("scenes", f"scene-{i:05d}.json")
        save_scene(scene, os.path.join(out_dir, rel))
        files.append(rel)
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "seed": int(seed),
        "count": int(count),
        "scenes": files,
        "splits": split_indices(count),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
    return manifest


def _manifest_path(path) -> str:
    path = str(path)
    if os.path.isdir(path):
        return os.path.join(path, "manifest.json")
    return path


def load_manifest(path) -> dict:
    """Read and validate a manifest; ``path`` may be the dataset directory."""
    mpath = _manifest_path(path)
    try:
        with open(mpath, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"no manifest at {mpath}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{mpath}: invalid JSON: {exc.msg}") from exc
    if not isinstance(doc, dict) or doc.get("schema") != MANIFEST_SCHEMA:
        raise SchemaVersionError(
            f"{mpath}: schema {doc.get('schema')!r} is not {MANIFEST_SCHEMA!r}"
        )
    for key in ("seed", "count", "scenes", "splits"):
        if key not in doc:
            raise DataError(f"{mpath}: missing field {key!r}")
    for name in SPLIT_NAMES:
        if name not in doc["splits"]:
            raise DataError(f"{mpath}: missing split {name!r}")
    return doc


def load_split(path, split: str) -> list[Scene]:
    """Load every scene of one split, in manifest order."""
    if split not in SPLIT_NAMES:
        raise DataError(f"unknown split {split!r}; expected one of {SPLIT_NAMES}")
    mpath = _manifest_path(path)
    doc = load_manifest(mpath)
    base = os.path.dirname(os.path.abspath(mpath))
    scenes = []
    for idx in doc["splits"][split]:
        if not (0 <= idx < len(doc["scenes"])):
            raise DataError(f"{mpath}: split index {idx} out of range")
        scenes.append(load_scene(os.path.join(base, doc["scenes"][idx])))
    return scenes
