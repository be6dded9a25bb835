"""On-disk formats.

Scene directory (ground truth or a demosaicked result)::

    <scene>/i000.png  i045.png  i090.png  i135.png     # 16-bit RGB

CPFA raw frame::

    <name>.png    # 16-bit grayscale
    <name>.json   # {"format": "tcpdnet-cpfa-raw", "version": 1, "pattern": {...}, ...}

A dataset root holds scene directories and an optional ``splits.json`` of the
form ``{"train": [...], "val": [...], "test": [...]}``.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import cv2
import numpy as np

from .errors import DataError
from .mosaic import CpfaPattern
from .polar import ANGLES

SCENE_FILES = tuple(f"i{a:03d}.png" for a in ANGLES)
RAW_FORMAT = "tcpdnet-cpfa-raw"
RAW_VERSION = 1
DATA_ENV = "TCPDNET_DATA"


def to_uint16(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 65535.0).astype(np.uint16)


def write_png16(path, img: np.ndarray) -> None:
    """Write an ``(H, W)`` or ``(H, W, 3)`` RGB float image in [0, 1] as 16-bit PNG."""
    q = to_uint16(img)
    if q.ndim == 3:
        q = q[..., ::-1]  # OpenCV stores BGR
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), np.ascontiguousarray(q)):
        raise DataError(f"could not write image {path}")


def read_png16(path) -> np.ndarray:
    """Read a PNG as float64 in [0, 1] (``(H, W)`` or RGB ``(H, W, 3)``)."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing image file {path}")
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise DataError(f"unreadable image file {path}")
    if img.dtype == np.uint16:
        out = img.astype(np.float64) / 65535.0
    elif img.dtype == np.uint8:
        out = img.astype(np.float64) / 255.0
    else:
        raise DataError(f"unsupported pixel type {img.dtype} in {path}")
    if out.ndim == 3:
        if out.shape[2] == 4:
            out = out[..., :3]
        out = out[..., ::-1]
    return np.ascontiguousarray(out)


def load_scene(scene_dir) -> np.ndarray:
    """Load the four oriented RGB images of a scene into a ``(12, H, W)`` float32 cube."""
    scene_dir = Path(scene_dir)
    planes = []
    for name in SCENE_FILES:
        img = read_png16(scene_dir / name)
        if img.ndim != 3 or img.shape[2] != 3:
            raise DataError(f"expected an RGB image in {scene_dir / name}, got shape {img.shape}")
        planes.append(img.transpose(2, 0, 1))
    shapes = {p.shape for p in planes}
    if len(shapes) != 1:
        raise DataError(f"orientation images in {scene_dir} differ in size: {sorted(shapes)}")
    cube = np.concatenate(planes, axis=0).astype(np.float32)
    h, w = cube.shape[-2:]
    if h % 4 or w % 4:
        # keep the CPFA phase: crop to whole 4x4 tiles from the top-left
        cube = cube[:, : h - h % 4, : w - w % 4]
    return cube


def save_scene(scene_dir, cube: np.ndarray) -> None:
    """Write a ``(12, H, W)`` cube as four 16-bit RGB images."""
    cube = np.asarray(cube)
    for k, name in enumerate(SCENE_FILES):
        write_png16(Path(scene_dir) / name, cube[3 * k : 3 * k + 3].transpose(1, 2, 0))


def save_raw(path, raw: np.ndarray, pattern: CpfaPattern, **meta) -> Path:
    """Write a raw frame and its JSON sidecar; returns the sidecar path."""
    path = Path(path)
    write_png16(path, raw)
    sidecar = path.with_suffix(".json")
    doc = {
        "format": RAW_FORMAT,
        "version": RAW_VERSION,
        "height": int(raw.shape[0]),
        "width": int(raw.shape[1]),
        "bit_depth": 16,
        "pattern": pattern.to_dict(),
        **meta,
    }
    sidecar.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return sidecar


def load_raw(path) -> tuple[np.ndarray, CpfaPattern]:
    """Read a raw frame and the pattern from its sidecar (default pattern if none)."""
    path = Path(path)
    raw = read_png16(path)
    if raw.ndim != 2:
        raise DataError(f"raw frame {path} must be single-channel, got shape {raw.shape}")
    sidecar = path.with_suffix(".json")
    if not sidecar.exists():
        return raw, CpfaPattern()
    try:
        doc = json.loads(sidecar.read_text())
        if doc.get("format") != RAW_FORMAT:
            raise DataError(f"{sidecar} is not a {RAW_FORMAT} sidecar")
        if doc.get("version") != RAW_VERSION:
            raise DataError(f"{sidecar}: unsupported version {doc.get('version')}")
        return raw, CpfaPattern.from_dict(doc["pattern"])
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"malformed sidecar {sidecar}: {exc}") from exc


def resolve_data_root(path=None) -> Path:
    root = path or os.environ.get(DATA_ENV)
    if not root:
        raise DataError(f"no dataset root given (pass a path or set {DATA_ENV})")
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root {root} is not a directory")
    return root


def list_scenes(root) -> list[str]:
    """Scene ids under ``root``: every sub-directory that holds any ``i*.png`` file."""
    root = Path(root)
    return sorted(p.name for p in root.iterdir() if p.is_dir() and any((p / f).exists() for f in SCENE_FILES))


def default_split(scene_ids: list[str]) -> dict[str, list[str]]:
    """Deterministic 30/2/8-style split of sorted ids (scaled for other dataset sizes)."""
    ids = sorted(scene_ids)
    n = len(ids)
    n_test = max(1, round(n * 8 / 40)) if n >= 3 else 0
    n_val = max(1, round(n * 2 / 40)) if n >= 3 else 0
    n_train = n - n_val - n_test
    return {"train": ids[:n_train], "val": ids[n_train : n_train + n_val], "test": ids[n_train + n_val :]}


def load_splits(root) -> dict[str, list[str]]:
    root = Path(root)
    ids = list_scenes(root)
    split_file = root / "splits.json"
    if not split_file.exists():
        return default_split(ids)
    try:
        splits = json.loads(split_file.read_text())
    except ValueError as exc:
        raise DataError(f"malformed {split_file}: {exc}") from exc
    seen: set[str] = set()
    for name in ("train", "val", "test"):
        for sid in splits.setdefault(name, []):
            if sid in seen:
                raise DataError(f"{split_file}: scene {sid!r} appears in more than one split")
            if sid not in ids:
                raise DataError(f"{split_file}: scene {sid!r} not found under {root}")
            seen.add(sid)
    return splits
