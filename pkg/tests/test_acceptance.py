"""Acceptance suite: one test per criterion, each emitting a PASS/FAIL line.

Criteria 8 and 9 train two models for 20k iterations each (hours on one CPU
core). Set ``TCPDNET_ACCEPTANCE_CACHE=<dir>`` to keep the generated dataset and
trained runs between sessions; by default everything lives in a temporary
directory and is trained from scratch.
"""

import json
import os
import time
from pathlib import Path

import numpy as np
import pytest
import torch

from tcpdnet import synthetic
from tcpdnet.evaluation import compare_methods, cpsnr, evaluate_scene, format_table
from tcpdnet.interp import bayer_bilinear, bilinear_baseline, polarization_bilinear
from tcpdnet.losses import loss_c, loss_cp, loss_cp_ycbcr
from tcpdnet.mosaic import (
    DEFAULT_PATTERN,
    assemble_mosaicked_polarization,
    bayer_masks,
    concat_channels,
    extract_channel,
    extract_subsampled_rgb,
    extract_subsampled_rgb_all,
    orientation_masks,
    subsample_orientation,
    synthesize_cpfa,
)
from tcpdnet.nets import ArchitectureSpec, SingleStepNet, TCPDNet, demosaick_image
from tcpdnet.polar import ANGLES, YCBCR_MATRIX, angle_error, compute_aop_dop, compute_stokes
from tcpdnet.training import (
    TrainConfig,
    augment_rotation,
    by_split,
    init_model,
    load_dataset,
    make_optimizer,
    s0_cpsnr,
    train_loop,
    train_step,
)

pytestmark = pytest.mark.acceptance

# Desk-scale settings for the 20k-iteration comparisons (criteria 8 and 9).
DESK_ARCH = ArchitectureSpec(levels=2, base_channels=8, convs_per_level=1)
DESK_LR = 1e-3
DESK_ITERATIONS = 20_000


@pytest.fixture
def report(request):
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def emit(number, title, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title}: {detail}"
        lines.append(line)
        with capman.global_and_fixture_disabled():
            print("\n" + line, flush=True)

    return emit


def brute_raw(z):
    h, w = z.shape[-2:]
    raw = np.empty((h, w))
    for i in range(h):
        for j in range(w):
            o = ANGLES.index(DEFAULT_PATTERN.orientation_at(i, j))
            raw[i, j] = z[3 * o + DEFAULT_PATTERN.color_at(i, j), i, j]
    return raw


def test_criterion_01_mosaic_exactness(report):
    t0 = time.time()
    rng = np.random.default_rng(0)
    p = DEFAULT_PATTERN
    failures = []
    for n in range(100):
        z = rng.random((12, 16, 16))
        raw = synthesize_cpfa(z)
        if not np.array_equal(raw, brute_raw(z)):
            failures.append((n, "synthesize"))
        rgbs = {}
        for a in ANGLES:
            r, c = p.offset(a)
            v = extract_subsampled_rgb(z, a)
            o = ANGLES.index(a)
            v_brute = np.array([[[z[3 * o + ch, 2 * i + r, 2 * j + c] for j in range(8)] for i in range(8)] for ch in range(3)])
            u_brute = np.array([[raw[2 * i + r, 2 * j + c] for j in range(8)] for i in range(8)])
            bayer = np.array([[v[p.block_color(i, j), i, j] for j in range(8)] for i in range(8)])
            if not np.array_equal(v, v_brute):
                failures.append((n, f"V_{a}"))
            if not (np.array_equal(subsample_orientation(raw, a), u_brute) and np.array_equal(u_brute, bayer)):
                failures.append((n, f"U_{a}"))
            rgbs[a] = v
        for ch in range(3):
            plane = assemble_mosaicked_polarization(rgbs, ch)
            brute = np.array(
                [[z[3 * ANGLES.index(p.orientation_at(i, j)) + ch, i, j] for j in range(16)] for i in range(16)]
            )
            if not np.array_equal(plane, brute):
                failures.append((n, f"U_c{ch}"))
            quad = extract_channel(z, ch)
            if not np.array_equal(quad, np.stack([z[3 * k + ch] for k in range(4)])):
                failures.append((n, f"V_c{ch}"))
        if not np.array_equal(concat_channels(*(extract_channel(z, c) for c in range(3))), z):
            failures.append((n, "Con_c"))
    elapsed = time.time() - t0
    ok = not failures and elapsed < 10
    report(1, "mosaic exactness", ok, f"{len(failures)} mismatches over 100 cubes, {elapsed:.2f} s (limit 10 s)")
    assert not failures, failures[:5]
    assert elapsed < 10


def test_criterion_02_interpolation_identities(report):
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(20):
        # constant preservation
        c = rng.random()
        worst = max(worst, np.abs(bayer_bilinear(np.full((8, 12), c)) - c).max())
        worst = max(worst, np.abs(polarization_bilinear(np.full((8, 12), c)) - c).max())
        # sample preservation
        m = rng.random((8, 12))
        out = bayer_bilinear(m)
        for ch, mask in enumerate(bayer_masks(DEFAULT_PATTERN, 8, 12).astype(bool)):
            worst = max(worst, np.abs(out[ch][mask] - m[mask]).max())
        out = polarization_bilinear(m)
        for k, mask in enumerate(orientation_masks(DEFAULT_PATTERN, 8, 12).astype(bool)):
            worst = max(worst, np.abs(out[k][mask] - m[mask]).max())
        # linearity
        a, b = rng.random((2, 8, 12))
        s, t = rng.normal(size=2)
        for fn in (bayer_bilinear, polarization_bilinear):
            worst = max(worst, np.abs(fn(s * a + t * b) - (s * fn(a) + t * fn(b))).max())
    raw = synthesize_cpfa(rng.random((2, 12, 16, 16)))
    exact = True
    for arch in (ArchitectureSpec(levels=1, base_channels=4), ArchitectureSpec(levels=2, base_channels=8)):
        for cls in (TCPDNet, SingleStepNet):
            net = cls(arch).double()
            with torch.no_grad():
                exact &= np.array_equal(net(torch.from_numpy(raw)).cube.numpy(), bilinear_baseline(raw))
    ok = worst <= 1e-12 and exact
    report(2, "interpolation identities", ok, f"max deviation {worst:.2e} (limit 1e-12), zero-residual nets exact: {exact}")
    assert worst <= 1e-12
    assert exact


def test_criterion_03_loss_normalization(report):
    rng = np.random.default_rng(2)
    # dyadic values keep every sum exact
    z = torch.from_numpy(rng.integers(0, 1024, (2, 12, 16, 8)) / 1024.0)
    e = 0.25
    y = extract_subsampled_rgb_all(z, DEFAULT_PATTERN)
    lc = float(loss_c(y + e, z))
    lcp = float(loss_cp(z + e, z))
    exact = lc == e and lcp == e

    pred, truth = rng.random((2, 2, 12, 8, 8))
    conv = lambda x: np.einsum("ij,bojhw->boihw", YCBCR_MATRIX, x.reshape(2, 4, 3, 8, 8))
    oracle = np.abs(conv(pred) - conv(truth)).sum() / (12 * 8 * 8 * 2)
    dev = abs(float(loss_cp_ycbcr(torch.from_numpy(pred), torch.from_numpy(truth))) - oracle)
    ok = exact and dev <= 1e-10
    report(3, "loss normalization", ok, f"L_C={lc!r}, L_CP={lcp!r} for e={e}; YCbCr oracle deviation {dev:.2e}")
    assert exact
    assert dev <= 1e-10


def test_criterion_04_gradient_check(report):
    t0 = time.time()
    torch.manual_seed(0)
    net = TCPDNet(ArchitectureSpec(levels=1, base_channels=4)).double()
    g = torch.Generator().manual_seed(1)
    heads = 0
    with torch.no_grad():
        for name, p in net.named_parameters():
            # default init everywhere; the zero-initialized output heads get random weights
            if "head" in name:
                p.copy_(torch.randn(p.shape, generator=g, dtype=p.dtype) * 0.1)
                heads += 1
    assert heads == 4
    z = torch.from_numpy(np.random.default_rng(0).random((1, 12, 8, 8)))
    raw = synthesize_cpfa(z)

    def loss():
        pred = net(raw)
        return loss_c(pred.subsampled, z) + 4 * loss_cp_ycbcr(pred.cube, z)

    net.zero_grad()
    loss().backward()
    h = 1e-5
    worst, count = 0.0, 0
    with torch.no_grad():
        for p in net.parameters():
            flat = p.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + h
                up = loss().item()
                flat[i] = orig - h
                down = loss().item()
                flat[i] = orig
                num = (up - down) / (2 * h)
                ana = p.grad.view(-1)[i].item()
                worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-6))
                count += 1
    elapsed = time.time() - t0
    ok = worst < 1e-3 and elapsed < 120
    report(4, "gradient check", ok, f"max relative error {worst:.2e} over {count} parameters, {elapsed:.1f} s")
    assert worst < 1e-3
    assert elapsed < 120


def test_criterion_05_augmentation_consistency(report):
    rng = np.random.default_rng(3)
    aop_worst, inv_worst = 0.0, 0.0
    for _ in range(50):
        z = rng.random((12, 8, 12))
        s = compute_stokes(z.reshape(4, 3, 8, 12).transpose(1, 0, 2, 3))
        aop, dop = compute_aop_dop(s)
        for k in range(4):
            zr = augment_rotation(z, k)
            sr = compute_stokes(zr.reshape(4, 3, *zr.shape[-2:]).transpose(1, 0, 2, 3))
            aop_r, dop_r = compute_aop_dop(sr)
            rot = lambda x: np.rot90(x, -k, axes=(-2, -1))
            expected = np.mod(rot(aop) - 90 * k, 180)
            d = np.abs(np.mod(aop_r - expected + 90, 180) - 90)
            aop_worst = max(aop_worst, d.max())
            inv_worst = max(inv_worst, np.abs(sr[:, 0] - rot(s[:, 0])).max(), np.abs(dop_r - rot(dop)).max())
    labels = np.arange(12, dtype=np.float64)[:, None, None] * np.ones((12, 4, 4))
    order = augment_rotation(labels, 1)[:, 0, 0].astype(int).tolist()
    expected_order = [6, 7, 8, 9, 10, 11, 0, 1, 2, 3, 4, 5]  # I90, I135, I0, I45
    ok = aop_worst <= 1e-6 and inv_worst <= 1e-12 and order == expected_order
    report(
        5,
        "augmentation consistency",
        ok,
        f"AoP deviation {aop_worst:.2e} deg, S0/DoP deviation {inv_worst:.2e}, k=1 order [I90, I135, I0, I45]: "
        f"{order == expected_order}",
    )
    assert aop_worst <= 1e-6 and inv_worst <= 1e-12 and order == expected_order


def test_criterion_06_metric_oracles(report):
    x = np.random.default_rng(4).random((3, 32, 32)) * 0.5
    offset = cpsnr(x + 16 / 255, x, 1.0)
    wrap = angle_error(np.array([179.0]), np.array([1.0]))
    rng = np.random.default_rng(5)
    uniform = angle_error(rng.uniform(0, 180, 10**6), rng.uniform(0, 180, 10**6))
    ok = abs(offset - 24.05) <= 0.01 and wrap == 2.0 and abs(uniform - 45) <= 1
    report(6, "metric oracles", ok, f"cpsnr {offset:.4f} dB, wrap error {wrap}, uniform mean {uniform:.3f} deg")
    assert abs(offset - 24.05) <= 0.01
    assert wrap == 2.0
    assert abs(uniform - 45) <= 1


# --- overfitting one patch (criteria 7 and 10) ---

OVERFIT_TARGET = 45.0
OVERFIT_MAX_ITERS = 2000
OVERFIT_CHECK_EVERY = 25


def overfit_patch():
    """The 64x64 crop whose bilinear S0 CPSNR is closest to a typical scene's (about 36 dB)."""
    scene = synthetic.make_scene(np.random.default_rng(1), 128, 128)
    crops = [scene[:, y : y + 64, x : x + 64] for y in range(0, 65, 16) for x in range(0, 65, 16)]
    s0 = [evaluate_scene(bilinear_baseline(synthesize_cpfa(c)).clip(0, 1), c).S0 for c in crops]
    return crops[int(np.argmin(np.abs(np.array(s0) - 36.0)))].astype(np.float32)


def overfit_run(truth):
    """Train the default architecture on one patch at lr 1e-4 until S0 CPSNR passes the target."""
    cfg = TrainConfig(images_per_batch=1, patches_per_image=1, learning_rate=1e-4, seed=0)
    model = init_model(cfg)
    opt = make_optimizer(model, cfg.learning_rate)
    raw = synthesize_cpfa(truth)
    losses, s0 = [], s0_cpsnr(model, raw, truth)
    for it in range(OVERFIT_MAX_ITERS):
        losses.append(train_step(model, opt, raw[None], truth[None], cfg).to_dict())
        if (it + 1) % OVERFIT_CHECK_EVERY == 0:
            s0 = s0_cpsnr(model, raw, truth)
            if s0 > OVERFIT_TARGET:
                break
    return losses, s0


_overfit_runs = []


def test_criterion_07_overfit_single_patch(report):
    truth = overfit_patch()
    start = evaluate_scene(bilinear_baseline(synthesize_cpfa(truth.astype(np.float64))).clip(0, 1), truth).S0
    t0 = time.time()
    losses, s0 = overfit_run(truth)
    elapsed = time.time() - t0
    _overfit_runs.append(losses)
    ok = s0 > OVERFIT_TARGET and elapsed < 600
    report(
        7,
        "overfit smoke test",
        ok,
        f"S0 CPSNR {s0:.2f} dB after {len(losses)} iterations (bilinear start {start:.2f} dB), {elapsed:.0f} s",
    )
    assert s0 > OVERFIT_TARGET
    assert elapsed < 600


def test_criterion_10_determinism(report):
    truth = overfit_patch()
    first = _overfit_runs[0] if _overfit_runs else overfit_run(truth)[0]
    second = overfit_run(truth)[0]
    same = first == second
    report(10, "determinism", same, f"two runs of {len(first)} / {len(second)} iterations, identical loss logs: {same}")
    assert same


# --- 20k-iteration comparisons (criteria 8 and 9) ---


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    cache = os.environ.get("TCPDNET_ACCEPTANCE_CACHE")
    if cache:
        path = Path(cache)
        path.mkdir(parents=True, exist_ok=True)
        return path
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def dataset(workdir):
    root = workdir / "data"
    if not (root / "splits.json").exists():
        synthetic.make_dataset(root, n_scenes=40, seed=0, split=(30, 2, 8))
    return load_dataset(root)


def desk_config(loss_mode):
    return TrainConfig(
        arch=DESK_ARCH, learning_rate=DESK_LR, iterations=DESK_ITERATIONS, loss_mode=loss_mode, seed=0, val_interval=2000
    )


_runs = {}


def trained(workdir, dataset, loss_mode):
    """Train (or reuse a cached run with an identical config) and return the model and its wall time."""
    if loss_mode in _runs:
        return _runs[loss_mode]
    cfg = desk_config(loss_mode)
    out = workdir / f"run_{loss_mode}"
    done = out / "done.json"
    if done.exists() and json.loads(done.read_text())["config"] == cfg.to_dict():
        from tcpdnet.checkpoint import load_checkpoint

        model, _ = load_checkpoint(out / "final.pt")
        elapsed = json.loads(done.read_text())["seconds"]
    else:
        t0 = time.time()
        model = train_loop(cfg, dataset, out_dir=out).model
        elapsed = time.time() - t0
        done.write_text(json.dumps({"config": cfg.to_dict(), "seconds": elapsed}))
    _runs[loss_mode] = (model, elapsed)
    return _runs[loss_mode]


def learned(model):
    return lambda raw, p: demosaick_image(model, raw).numpy()


def bilinear(raw, p):
    return bilinear_baseline(raw.astype(np.float64), p)


def test_criterion_08_beats_bilinear(report, workdir, dataset):
    model, elapsed = trained(workdir, dataset, "cp_ycbcr")
    test = by_split(dataset, "test")
    res = compare_methods({"bilinear": bilinear, "tcpdnet": learned(model)}, test, DEFAULT_PATTERN, workdir / "report_08")
    bil, net = res["bilinear"][1], res["tcpdnet"][1]
    ds0, daop = net.S0 - bil.S0, bil.AoP - net.AoP
    ok = ds0 >= 2.0 and daop >= 3.0 and elapsed <= 4 * 3600
    table = format_table([bil, net])
    report(
        8,
        "TCPDNet vs bilinear",
        ok,
        f"{len(test)} test scenes; S0 {net.S0:.2f} vs {bil.S0:.2f} dB (gain {ds0:+.2f}, need >= 2), "
        f"AoP {net.AoP:.2f} vs {bil.AoP:.2f} deg (reduction {daop:+.2f}, need >= 3), "
        f"training {elapsed / 3600:.2f} h\n{table}",
    )
    assert len(test) == 8
    assert ds0 >= 2.0
    assert daop >= 3.0
    assert elapsed <= 4 * 3600


def test_criterion_09_ycbcr_ablation(report, workdir, dataset):
    ycc, _ = trained(workdir, dataset, "cp_ycbcr")
    rgb, _ = trained(workdir, dataset, "cp")
    test = by_split(dataset, "test")
    methods = {"bilinear": bilinear, "two_step_L_cp": learned(rgb), "two_step_L_cp_ycbcr": learned(ycc)}
    res = compare_methods(methods, test, DEFAULT_PATTERN, workdir / "report_09")
    a, b = res["two_step_L_cp_ycbcr"][1], res["two_step_L_cp"][1]
    ok = a.DoP >= b.DoP - 0.1
    report(
        9,
        "YCbCr loss ablation",
        ok,
        f"DoP {a.DoP:.2f} (YCbCr) vs {b.DoP:.2f} (RGB) dB, need >= RGB - 0.1; "
        f"S0 {a.S0:.2f} vs {b.S0:.2f} dB\n{format_table(m for _, m in res.values())}",
    )
    assert a.DoP >= b.DoP - 0.1
