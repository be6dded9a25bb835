"""Versioned checkpoint archives (``torch.save`` of tensors plus plain metadata)."""

from __future__ import annotations

from pathlib import Path

import torch

from .errors import CheckpointError
from .mosaic import CpfaPattern
from .nets import ArchitectureSpec, build_model

FORMAT = "tcpdnet-checkpoint"
VERSION = 1


def save_checkpoint(model, path, optimizer=None, **meta) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "model": model.kind,
        "arch": model.arch.to_dict(),
        "pattern": model.pattern.to_dict(),
        "state_dict": {k: v.detach().clone().contiguous() for k, v in model.state_dict().items()},
        "meta": meta,
    }
    if optimizer is not None:
        doc["optimizer"] = optimizer.state_dict()
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(doc, tmp)
    tmp.replace(path)
    return path


def read_checkpoint(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint {path} does not exist")
    try:
        doc = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:  # torch raises a variety of unpickling errors
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not a {FORMAT} file")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {doc.get('version')} (expected {VERSION})")
    return doc


def load_checkpoint(path, arch: ArchitectureSpec | None = None, pattern: CpfaPattern | None = None, kind=None):
    """Rebuild the stored model; optional expectations raise ``CheckpointError`` on mismatch.

    Returns ``(model, doc)`` where ``doc`` carries ``meta`` and, if saved, ``optimizer``.
    """
    doc = read_checkpoint(path)
    stored_arch = ArchitectureSpec.from_dict(doc["arch"])
    stored_pattern = CpfaPattern.from_dict(doc["pattern"])
    if arch is not None and arch != stored_arch:
        raise CheckpointError(f"{path}: architecture {stored_arch} does not match expected {arch}")
    if pattern is not None and pattern != stored_pattern:
        raise CheckpointError(f"{path}: pattern {stored_pattern} does not match expected {pattern}")
    if kind is not None and kind != doc["model"]:
        raise CheckpointError(f"{path}: model kind {doc['model']!r} does not match expected {kind!r}")
    model = build_model(doc["model"], stored_arch, stored_pattern)
    try:
        model.load_state_dict(doc["state_dict"])
    except RuntimeError as exc:
        raise CheckpointError(f"{path}: parameters do not fit the stored architecture: {exc}") from exc
    return model, doc


def load_into(model, path, optimizer=None) -> dict:
    """Load parameters into an existing model whose architecture and pattern must match."""
    doc = read_checkpoint(path)
    if doc["model"] != model.kind:
        raise CheckpointError(f"{path}: model kind {doc['model']!r} != {model.kind!r}")
    if ArchitectureSpec.from_dict(doc["arch"]) != model.arch:
        raise CheckpointError(f"{path}: architecture {doc['arch']} != {model.arch.to_dict()}")
    if CpfaPattern.from_dict(doc["pattern"]) != model.pattern:
        raise CheckpointError(f"{path}: pattern {doc['pattern']} != {model.pattern.to_dict()}")
    model.load_state_dict(doc["state_dict"])
    if optimizer is not None and "optimizer" in doc:
        optimizer.load_state_dict(doc["optimizer"])
    return doc
