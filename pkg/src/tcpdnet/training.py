"""Patch sampling, rotation augmentation and the Adam training loop."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from . import files
from .checkpoint import save_checkpoint
from .errors import ConfigError, NumericError
from .evaluation import cpsnr, evaluate_scene
from .losses import LOSS_MODES, LossBreakdown, compute_losses
from .mosaic import CpfaPattern, random_crop_offsets, synthesize_cpfa
from .nets import MODELS, ArchitectureSpec, build_model, demosaick_image

log = logging.getLogger(__name__)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    patch_size: int = 64
    images_per_batch: int = 6
    patches_per_image: int = 4
    learning_rate: float = 1e-4
    iterations: int = 200_000
    alpha: float = 4.0
    seed: int = 0
    loss_mode: str = "cp_ycbcr"
    model: str = "tcpdnet"
    arch: ArchitectureSpec = field(default_factory=ArchitectureSpec)
    pattern: CpfaPattern = field(default_factory=CpfaPattern)
    augment: bool = True
    val_interval: int = 1000
    checkpoint_interval: int = 0  # 0: only best and final
    log_interval: int = 10
    channels_last: bool = True
    data_root: Optional[str] = None
    out_dir: Optional[str] = None

    def __post_init__(self):
        if isinstance(self.arch, dict):
            self.arch = ArchitectureSpec.from_dict(self.arch)
        if isinstance(self.pattern, dict):
            self.pattern = CpfaPattern.from_dict(self.pattern)
        elif isinstance(self.pattern, str):
            self.pattern = CpfaPattern.parse(self.pattern)
        if self.patch_size % 4:
            raise ConfigError(f"patch_size must be a multiple of 4, got {self.patch_size}")
        if self.patch_size < 4 * self.arch.multiple:
            raise ConfigError(f"patch_size {self.patch_size} is below 4 * 2**levels = {4 * self.arch.multiple}")
        if self.loss_mode not in LOSS_MODES:
            raise ConfigError(f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {sorted(MODELS)}, got {self.model!r}")
        if self.alpha <= 0 or self.learning_rate <= 0:
            raise ConfigError("alpha and learning_rate must be positive")
        if self.images_per_batch < 1 or self.patches_per_image < 1 or self.iterations < 0:
            raise ConfigError("batch sizes must be positive and iterations non-negative")

    @property
    def batch_size(self) -> int:
        return self.images_per_batch * self.patches_per_image

    def to_dict(self) -> dict:
        d = asdict(self)
        d["arch"] = self.arch.to_dict()
        d["pattern"] = self.pattern.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        path = Path(path)
        try:
            return cls.from_dict(json.loads(path.read_text()))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} does not exist") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")


@dataclass
class SceneRecord:
    scene_id: str
    cube: np.ndarray  # (12, H, W) float32
    split: str


def load_dataset(root) -> list[SceneRecord]:
    """All scenes of a dataset root with their split tags."""
    root = files.resolve_data_root(root)
    splits = files.load_splits(root)
    records = []
    for split in ("train", "val", "test"):
        for sid in splits.get(split, []):
            records.append(SceneRecord(sid, files.load_scene(root / sid), split))
    return records


def by_split(scenes: list[SceneRecord], split: str) -> dict[str, np.ndarray]:
    return {s.scene_id: s.cube for s in scenes if s.split == split}


# orientation blocks after one clockwise quarter turn: [I90, I135, I0, I45]
_QUARTER_TURN_ORDER = np.array([6, 7, 8, 9, 10, 11, 0, 1, 2, 3, 4, 5])


def augment_rotation(z: np.ndarray, k: int) -> np.ndarray:
    """Rotate a ``(12, H, W)`` cube by ``k`` clockwise quarter turns and relabel orientations.

    A quarter turn moves the AoP by -90 degrees, i.e. swaps I0 with I90 and I45
    with I135. Two turns restore the original labels.
    """
    k = int(k) % 4
    out = np.rot90(z, -k, axes=(-2, -1))
    if k % 2:
        out = out[..., _QUARTER_TURN_ORDER, :, :]
    return np.ascontiguousarray(out)


@dataclass
class Batch:
    raw: np.ndarray  # (B, P, P)
    truth: np.ndarray  # (B, 12, P, P)
    scenes: list[int]
    offsets: list[tuple[int, int]]
    rotations: list[int]


def sample_batch(scenes: list[np.ndarray], cfg: TrainConfig, rng: np.random.Generator) -> Batch:
    """Distinct scenes, aligned random crops, random rotation, then CPFA synthesis per patch."""
    if len(scenes) < cfg.images_per_batch:
        raise ConfigError(f"need at least {cfg.images_per_batch} training scenes, got {len(scenes)}")
    chosen = rng.choice(len(scenes), size=cfg.images_per_batch, replace=False)
    truths, idx, offsets, rots = [], [], [], []
    p = cfg.patch_size
    for s in chosen:
        cube = scenes[s]
        for y, x in random_crop_offsets(rng, cube.shape[-2], cube.shape[-1], p, cfg.patches_per_image):
            k = int(rng.integers(4)) if cfg.augment else 0
            truths.append(augment_rotation(cube[:, y : y + p, x : x + p], k))
            idx.append(int(s))
            offsets.append((y, x))
            rots.append(k)
    truth = np.stack(truths).astype(np.float32)
    return Batch(synthesize_cpfa(truth, cfg.pattern), truth, idx, offsets, rots)


def make_optimizer(model: torch.nn.Module, lr: float) -> torch.optim.Adam:
    return torch.optim.Adam(model.parameters(), lr=lr, betas=ADAM_BETAS, eps=ADAM_EPS)


def train_step(model, optimizer, raw, truth, cfg: TrainConfig, context: str = "") -> LossBreakdown:
    """One Adam update on a batch; raises ``NumericError`` on a non-finite loss."""
    model.train()
    param = next(model.parameters())
    x = torch.as_tensor(raw, dtype=param.dtype)
    z = torch.as_tensor(truth, dtype=param.dtype)
    total, breakdown = compute_losses(model(x), z, cfg.pattern, cfg.alpha, cfg.loss_mode)
    if not math.isfinite(breakdown.total):
        raise NumericError(f"non-finite loss {breakdown.total} ({context})")
    optimizer.zero_grad(set_to_none=False)
    total.backward()
    optimizer.step()
    return breakdown


def batch_rng(seed: int, iteration: int) -> np.random.Generator:
    return np.random.default_rng([seed, iteration])


def init_model(cfg: TrainConfig) -> torch.nn.Module:
    torch.manual_seed(cfg.seed)
    model = build_model(cfg.model, cfg.arch, cfg.pattern)
    if cfg.channels_last:
        model = model.to(memory_format=torch.channels_last)
    return model


def validate(model, scenes: dict[str, np.ndarray], pattern: CpfaPattern) -> dict[str, float]:
    """Mean S0 CPSNR and AoP error over full-size validation scenes."""
    s0, aop = [], []
    for truth in scenes.values():
        truth = np.asarray(truth, dtype=np.float64)
        pred = demosaick_image(model, synthesize_cpfa(truth, pattern)).numpy()
        rec = evaluate_scene(pred, truth)
        s0.append(rec.S0)
        aop.append(rec.AoP)
    return {"S0": float(np.mean(s0)), "AoP": float(np.mean(aop))}


@dataclass
class TrainResult:
    model: torch.nn.Module
    losses: list[float]
    val_history: list[dict]
    best_val: Optional[float]
    final_path: Optional[Path]
    best_path: Optional[Path]


def train_loop(cfg: TrainConfig, scenes: list[SceneRecord], out_dir=None, model=None) -> TrainResult:
    """Run ``cfg.iterations`` updates, validating every ``cfg.val_interval`` iterations.

    With ``out_dir`` set, writes ``config.json``, ``train_log.jsonl``, ``best.pt``
    (by validation S0 CPSNR) and ``final.pt``.
    """
    out_dir = Path(out_dir) if out_dir is not None else (Path(cfg.out_dir) if cfg.out_dir else None)
    train = [s.cube for s in scenes if s.split == "train"]
    val = by_split(scenes, "val")
    if len(train) < cfg.images_per_batch:
        raise ConfigError(f"need at least {cfg.images_per_batch} training scenes, got {len(train)}")
    model = model if model is not None else init_model(cfg)
    optimizer = make_optimizer(model, cfg.learning_rate)

    log_fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        cfg.save(out_dir / "config.json")
        log_fh = (out_dir / "train_log.jsonl").open("w")

    def emit(record):
        if log_fh is not None:
            log_fh.write(json.dumps(record) + "\n")
            log_fh.flush()

    losses, val_history = [], []
    best, best_path, final_path = None, None, None
    t0 = time.time()
    try:
        for it in range(cfg.iterations):
            batch = sample_batch(train, cfg, batch_rng(cfg.seed, it))
            br = train_step(model, optimizer, batch.raw, batch.truth, cfg, context=f"seed={cfg.seed} iteration={it}")
            losses.append(br.total)
            if cfg.log_interval and it % cfg.log_interval == 0:
                emit({"iteration": it, **br.to_dict()})
            if cfg.log_interval and it % (cfg.log_interval * 100) == 0:
                log.info("iter %d  loss %.5f  (%.1fs)", it, br.total, time.time() - t0)
            done = it + 1
            if val and cfg.val_interval and (done % cfg.val_interval == 0 or done == cfg.iterations):
                metrics = validate(model, val, cfg.pattern)
                val_history.append({"iteration": done, **metrics})
                emit({"iteration": done, "event": "val", **metrics})
                log.info("iter %d  val S0 %.2f dB  AoP %.2f deg", done, metrics["S0"], metrics["AoP"])
                if best is None or metrics["S0"] > best:
                    best = metrics["S0"]
                    if out_dir is not None:
                        best_path = save_checkpoint(model, out_dir / "best.pt", iteration=done, val=metrics)
            if out_dir is not None and cfg.checkpoint_interval and done % cfg.checkpoint_interval == 0:
                save_checkpoint(model, out_dir / f"iter_{done:07d}.pt", optimizer, iteration=done)
        if out_dir is not None:
            final_path = save_checkpoint(
                model, out_dir / "final.pt", optimizer, iteration=cfg.iterations, config=cfg.to_json()
            )
    finally:
        if log_fh is not None:
            log_fh.close()
    return TrainResult(model, losses, val_history, best, final_path, best_path)


def fit_fixed_batch(model, raw, truth, cfg: TrainConfig, iterations: int) -> list[LossBreakdown]:
    """Repeatedly update on one fixed batch (overfitting sanity check)."""
    optimizer = make_optimizer(model, cfg.learning_rate)
    return [train_step(model, optimizer, raw, truth, cfg, context=f"fixed batch iteration={i}") for i in range(iterations)]


def s0_cpsnr(model, raw: np.ndarray, truth: np.ndarray) -> float:
    """S0 CPSNR of a model's clamped prediction on one (possibly batched) patch."""
    truth = np.asarray(truth, dtype=np.float64)
    raw = np.asarray(raw)
    if truth.ndim == 3:
        truth, raw = truth[None], raw[None]
    preds = np.stack([demosaick_image(model, r).numpy() for r in raw])

    def s0(c):
        q = c.reshape(c.shape[0], 4, 3, *c.shape[-2:])
        return q.sum(axis=1) / 4.0  # S0 / 2

    return cpsnr(s0(preds), s0(truth), 1.0)
