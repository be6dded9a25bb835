"""Procedural color-polarization scenes in the on-disk dataset format.

Scenes are painted at a supersampled resolution (antialiased edges) as
per-color S0 plus per-pixel DoP/AoP, rendered through ideal polarizers and
box-filtered down. They mix smooth shading, band-limited texture, fine
gratings, thin strokes and shapes with constant, radial or graded AoP, over a
weakly polarized background.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy import ndimage

from .files import save_scene
from .polar import ANGLES


def _smooth_noise(rng, shape, sigma, lo=0.0, hi=1.0):
    f = ndimage.gaussian_filter(rng.standard_normal(shape), sigma, mode="wrap")
    f -= f.min()
    f /= max(f.max(), 1e-12)
    return lo + (hi - lo) * f


def _random_color(rng):
    # correlated channels: luminance times a mild chroma tint, occasionally saturated
    lum = rng.uniform(0.08, 0.95)
    tint = rng.dirichlet(np.full(3, 2.0 if rng.random() < 0.7 else 0.6)) * 3
    return np.clip(lum * (0.35 + 0.65 * tint), 0.01, 1.0)


def _shape_mask(rng, yy, xx, kind, aspect):
    cy, cx = rng.uniform(0.05, 0.95) * aspect, rng.uniform(0.05, 0.95)
    if kind == "ellipse":
        ry, rx = rng.uniform(0.03, 0.25, size=2)
        t = rng.uniform(0, np.pi)
        dy, dx = yy - cy, xx - cx
        u = dx * np.cos(t) + dy * np.sin(t)
        v = -dx * np.sin(t) + dy * np.cos(t)
        mask = (u / rx) ** 2 + (v / ry) ** 2 <= 1.0
        normal = np.arctan2(v / ry, u / rx) + t
        return mask, normal
    if kind == "rectangle":
        hy, hx = rng.uniform(0.02, 0.2, size=2)
        t = rng.uniform(0, np.pi)
        dy, dx = yy - cy, xx - cx
        u = dx * np.cos(t) + dy * np.sin(t)
        v = -dx * np.sin(t) + dy * np.cos(t)
        return (np.abs(u) <= hx) & (np.abs(v) <= hy), None
    if kind == "triangle":
        pts = np.array([cy, cx]) + rng.uniform(-0.2, 0.2, size=(3, 2))
        mask = np.ones_like(yy, dtype=bool)
        e1, e2 = pts[1] - pts[0], pts[2] - pts[0]
        sign = 1.0 if e1[0] * e2[1] - e1[1] * e2[0] >= 0 else -1.0
        for k in range(3):
            a, b = pts[k], pts[(k + 1) % 3]
            mask &= sign * ((b[0] - a[0]) * (xx - a[1]) - (b[1] - a[1]) * (yy - a[0])) <= 0
        return mask, None
    if kind == "stroke":
        # thin straight or gently curved line, 1-3 output pixels wide
        t = rng.uniform(0, np.pi)
        length = rng.uniform(0.1, 0.5)
        width = rng.uniform(0.004, 0.012)
        curve = rng.uniform(-3, 3)
        dy, dx = yy - cy, xx - cx
        u = dx * np.cos(t) + dy * np.sin(t)
        v = -dx * np.sin(t) + dy * np.cos(t) - curve * u**2
        return (np.abs(u) <= length / 2) & (np.abs(v) <= width), None
    raise ValueError(kind)


def make_scene(rng: np.random.Generator, height: int = 192, width: int = 256, supersample: int = 4) -> np.ndarray:
    """One ``(12, height, width)`` float64 ground-truth cube in [0, 1]."""
    hs, ws = height * supersample, width * supersample
    # isotropic coordinates in units of the image width
    yy, xx = np.meshgrid((np.arange(hs) + 0.5) / ws, (np.arange(ws) + 0.5) / ws, indexing="ij")
    aspect = height / width
    px = 1.0 / width

    # background: shaded, textured, weakly polarized
    base = _random_color(rng)
    shade = _smooth_noise(rng, (hs, ws), 40 * supersample, 0.55, 1.0)
    tex = _smooth_noise(rng, (hs, ws), rng.uniform(1.5, 4.0) * supersample, rng.uniform(0.4, 0.8), 1.0)
    albedo = base[:, None, None] * shade * tex
    dop = _smooth_noise(rng, (hs, ws), 30 * supersample, 0.0, rng.uniform(0.01, 0.08))
    aop = _smooth_noise(rng, (hs, ws), 25 * supersample, 0.0, 2 * np.pi) % np.pi

    kinds = ["ellipse", "rectangle", "triangle", "stroke", "grating"]
    for _ in range(rng.integers(8, 18)):
        kind = kinds[rng.choice(len(kinds), p=[0.3, 0.25, 0.2, 0.15, 0.1])]
        if kind == "grating":
            mask, _ = _shape_mask(rng, yy, xx, "rectangle", aspect)
            period = rng.uniform(5.0, 16.0) * px
            t = rng.uniform(0, np.pi)
            phase = (xx * np.cos(t) + yy * np.sin(t)) / period
            wave = (np.sin(2 * np.pi * phase) > 0) if rng.random() < 0.5 else 0.5 + 0.5 * np.sin(2 * np.pi * phase)
            c1, c2 = _random_color(rng), _random_color(rng)
            col = c1[:, None, None] * wave + c2[:, None, None] * (1 - wave)
            albedo = np.where(mask, col * shade, albedo)
            obj_dop = rng.uniform(0.0, 0.6)
            dop = np.where(mask, obj_dop * (0.6 + 0.4 * wave), dop)
            aop = np.where(mask, (rng.uniform(0, np.pi) + 0.5 * np.pi * wave) % np.pi, aop)
            continue
        mask, normal = _shape_mask(rng, yy, xx, kind, aspect)
        col = _random_color(rng)[:, None, None] * shade
        if rng.random() < 0.4:
            col = col * _smooth_noise(rng, (hs, ws), rng.uniform(0.7, 2.5) * supersample, 0.6, 1.0)
        albedo = np.where(mask, col, albedo)
        obj_dop = rng.uniform(0.1, 0.7) if rng.random() < 0.5 else rng.uniform(0.0, 0.15)
        if normal is not None and rng.random() < 0.6:
            obj_aop = normal % np.pi  # polarization following the surface normal
        elif rng.random() < 0.5:
            g = rng.uniform(0, np.pi, size=2)
            obj_aop = (g[0] + rng.uniform(1, 6) * (xx * np.cos(g[1]) + yy * np.sin(g[1]))) % np.pi
        else:
            obj_aop = rng.uniform(0, np.pi)
        dop = np.where(mask, obj_dop, dop)
        aop = np.where(mask, obj_aop, aop)

    s0 = np.clip(albedo, 0.0, 1.0)
    # slight per-color spread in DoP
    dop_c = np.clip(dop[None] * (1.0 + 0.08 * rng.standard_normal(3))[:, None, None], 0.0, 1.0)
    theta = np.deg2rad(np.array(ANGLES, dtype=np.float64))
    cube = 0.5 * s0[None] * (1.0 + dop_c[None] * np.cos(2 * theta[:, None, None, None] - 2 * aop[None, None]))
    cube = cube.reshape(12, height, supersample, width, supersample).mean(axis=(2, 4))
    return np.clip(cube, 0.0, 1.0)


def make_dataset(
    root, n_scenes: int = 40, seed: int = 0, height: int = 192, width: int = 256, split=(30, 2, 8)
) -> dict[str, list[str]]:
    """Write ``n_scenes`` procedural scenes plus ``splits.json`` under ``root``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    ids = [f"scene_{k:03d}" for k in range(n_scenes)]
    for k, sid in enumerate(ids):
        rng = np.random.default_rng([seed, k])
        save_scene(root / sid, make_scene(rng, height, width))
    n_train, n_val, _ = split
    if sum(split) != n_scenes:
        n_train = n_scenes - n_val - max(1, n_scenes * split[2] // sum(split))
    splits = {"train": ids[:n_train], "val": ids[n_train : n_train + n_val], "test": ids[n_train + n_val :]}
    (root / "splits.json").write_text(json.dumps(splits, indent=2) + "\n")
    return splits
