"""Acceptance gate: one test per release criterion.

Each test prints exactly one ``[criterion N] PASS/FAIL: ...`` line with the
measured numbers, then asserts. Training-based criteria share module-scoped
fixtures so the whole gate stays within a few minutes on one core.
"""
import json
import math
import time
from fractions import Fraction

import numpy as np
import pytest
from click.testing import CliRunner

import gradcheck
import oracles
from ffnerv.cli import main as cli_main
from ffnerv.compression import (BitstreamError, deserialize, minmax_quantize,
                                quantize_model, model_from_quantized, serialize)
from ffnerv.frame_io import write_frames
from ffnerv.functional import bilinear_warp, conv2d, qat_quantize
from ffnerv.grids import make_grid, sample_grid
from ffnerv.layers import ConvBlockSpec, compact_ratio, param_count
from ffnerv.metrics import psnr, ssim
from ffnerv.model import (FFNeRVConfig, FFNeRVModel, FrameBuffer,
                          FrameComponents, layer_shapes)
from ffnerv.presets import paper_720p_config, tiny_config
from ffnerv.synthetic import gradient_clip, static_clip, texture_clip
from ffnerv.tensor import Tensor
from ffnerv.training import TrainConfig, quantized_params, train
from test_model import flat_config

EPOCHS = 250  # x 8 training frames = 2000 steps
LR = 2e-3


def _report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {n}: {detail}"


def _decode_psnr(model, frames):
    cache = {}
    vals = [psnr(model.decode_frame(t, cache=cache), frames[t])
            for t in range(len(frames))]
    return float(np.mean(vals))


def _train_and_decode(cfg, clip, seed=0, qat=True):
    """Train 2000 steps; return decoded PSNR (via the quantized path if QAT)."""
    model = FFNeRVModel(cfg, seed=seed)
    tcfg = TrainConfig(epochs=EPOCHS, lr=LR, seed=seed, qat_enabled=qat)
    train(model, clip, tcfg)
    if qat:
        decoded = model_from_quantized(quantize_model(model, tcfg.qat_bits))
        return _decode_psnr(decoded, clip), model
    return _decode_psnr(model, clip), model


@pytest.fixture(scope="module")
def translating8():
    return gradient_clip(8, 32)


@pytest.fixture(scope="module")
def qat_bundle(translating8):
    """Shared QAT/float/min-max comparison on the tiny clip (criteria 3, 5)."""
    cfg = tiny_config(8, (32, 32))
    t0 = time.perf_counter()
    psnr_qat, _ = _train_and_decode(cfg, translating8, seed=0, qat=True)
    psnr_float, float_model = _train_and_decode(cfg, translating8, seed=0,
                                                qat=False)
    # post-training min-max quantization of the float model's weight classes
    mm_model = FFNeRVModel(cfg, seed=0)
    weight_names = set(float_model.weight_class_names())
    for name, p in float_model.parameters().items():
        dst = mm_model.parameters()[name]
        dst.data[...] = minmax_quantize(p.data, 8) if name in weight_names \
            else p.data
    psnr_minmax = _decode_psnr(mm_model, translating8)
    return {"qat": psnr_qat, "float": psnr_float, "minmax": psnr_minmax,
            "elapsed": time.perf_counter() - t0}


def test_criterion_1_gradient_suite(capsys):
    t0 = time.perf_counter()
    worst = gradcheck.run_suite(instances_per_op=20, seed=0)
    elapsed = time.perf_counter() - t0
    worst_op = max(worst, key=worst.get)
    ok = max(worst.values()) <= 1e-3 and elapsed <= 60.0
    _report(capsys, 1, ok,
            f"{len(worst)} ops x 20 instances, worst rel err "
            f"{worst[worst_op]:.2e} ({worst_op}), {elapsed:.1f}s (limit 1e-3, "
            f"60s)")


def test_criterion_2_oracle_suite(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    diffs = {}

    x = rng.uniform(-1, 1, (3, 7, 7))
    w = rng.uniform(-1, 1, (6, 3, 3, 3))
    b = rng.uniform(-1, 1, 6)
    out = conv2d(Tensor(x), Tensor(w), Tensor(b), padding=1).data
    diffs["conv"] = np.abs(out - oracles.conv2d_loops(x, w, b, 1, 1)).max()

    wg = rng.uniform(-1, 1, (8, 2, 3, 3))
    xg = rng.uniform(-1, 1, (8, 6, 6))
    grouped = conv2d(Tensor(xg), Tensor(wg), None, groups=4, padding=1).data
    dense = conv2d(Tensor(xg), Tensor(oracles.block_diagonal_weight(wg, 4)),
                   None, groups=1, padding=1).data
    diffs["grouped-conv"] = max(
        np.abs(grouped - dense).max(),
        np.abs(grouped - oracles.conv2d_loops(xg, wg, None, 4, 1)).max())

    gd = 0.0
    for s, T in [(2, 8), (4, 8), (5, 12)]:
        grid = make_grid(rng, s, 2, 2, 2)
        for t in range(T):  # covers integer hits and the t=T-1 ceil clamp
            got = sample_grid(t, grid, T).data
            gd = max(gd, np.abs(
                got - oracles.grid_sample_hand(grid.values.data, t, T)).max())
    diffs["grid-sample"] = gd

    frame = rng.uniform(0, 1, (3, 6, 6))
    flow = rng.uniform(-2.5, 2.5, (2, 6, 6))
    warped = bilinear_warp(Tensor(frame), Tensor(flow)).data
    diffs["warp"] = np.abs(
        warped - oracles.bilinear_warp_loops(frame, flow)).max()

    sx = rng.uniform(0, 1, (1, 12, 12))
    sy = rng.uniform(0, 1, (1, 12, 12))
    got = ssim(Tensor(sx, dtype=np.float64), Tensor(sy, dtype=np.float64)).item()
    diffs["ssim"] = abs(got - oracles.ssim_windows(sx, sy))

    model = FFNeRVModel(flat_config(), seed=4)
    buf = FrameBuffer(3, (1, 2))
    f0 = np.array([[[0.2, 0.8]]] * 3, dtype=np.float32)
    f2 = np.array([[[0.6, 0.4]]] * 3, dtype=np.float32)
    buf.write(0, f0)
    buf.write(2, f2)
    flow0 = np.zeros((2, 1, 2), dtype=np.float32)
    flow0[0] = 1.0
    logit0 = np.full((1, 1, 2), np.log(3.0), dtype=np.float32)
    logit1 = np.zeros((1, 1, 2), dtype=np.float32)
    comp = FrameComponents(independent=Tensor(f0),
                           agg_logit=Tensor(np.zeros((1, 1, 2))),
                           ind_logit=Tensor(np.zeros((1, 1, 2))),
                           flows=[Tensor(flow0),
                                  Tensor(np.zeros((2, 1, 2), dtype=np.float32))],
                           flow_logits=[Tensor(logit0), Tensor(logit1)])
    agg = model.aggregate(comp, buf, 1).data
    warped0 = np.array([[[0.8, 0.8]]] * 3)
    diffs["aggregate"] = np.abs(
        agg - oracles.aggregate_hand([warped0, f2], [logit0, logit1])).max()

    elapsed = time.perf_counter() - t0
    worst = max(diffs, key=diffs.get)
    ok = max(diffs.values()) <= 1e-6 and elapsed <= 30.0
    _report(capsys, 2, ok,
            f"6 oracle families, worst abs diff {diffs[worst]:.2e} ({worst}), "
            f"{elapsed:.1f}s (limit 1e-6, 30s)")


def test_criterion_3_tiny_overfit(capsys, qat_bundle):
    ok = qat_bundle["qat"] >= 30.0
    _report(capsys, 3, ok,
            f"8-frame 32x32 translating clip, tiny preset, 2000 steps: "
            f"decoded {qat_bundle['qat']:.2f} dB (floor 30.00 dB, "
            f"{qat_bundle['elapsed']:.0f}s for the shared QAT+float runs)")


@pytest.fixture(scope="module")
def flow_margins(translating8):
    """Flow-on vs flow-off at matched budgets on two clips (criterion 4)."""
    out = {}
    for name, clip, grids in (
        ("translating", translating8, (2, 4)),
        ("texture", texture_clip(8, 32), (2, 3)),
    ):
        arms = {}
        for flow in (True, False):
            cfg = tiny_config(8, (32, 32), grid_resolutions=grids,
                              flow_enabled=flow)
            arms[flow], _ = _train_and_decode(cfg, clip, seed=0, qat=True)
        out[name] = (arms[True], arms[False])
    return out


def test_criterion_4_flow_benefit(capsys, flow_margins):
    ton, toff = flow_margins["translating"]
    xon, xoff = flow_margins["texture"]
    ok = (ton >= toff - 0.1) and (xon >= xoff + 0.5)
    _report(capsys, 4, ok,
            f"translating: flow {ton:.2f} vs no-flow {toff:.2f} dB "
            f"(margin {ton - toff:+.2f}, floor -0.10); texture: "
            f"flow {xon:.2f} vs no-flow {xoff:.2f} dB "
            f"(margin {xon - xoff:+.2f}, floor +0.50)")


def test_criterion_5_qat_fidelity(capsys, qat_bundle):
    drop = qat_bundle["float"] - qat_bundle["qat"]
    ok = drop <= 0.5 and qat_bundle["minmax"] <= qat_bundle["qat"] + 1e-9
    _report(capsys, 5, ok,
            f"float {qat_bundle['float']:.2f} dB, 8-bit QAT "
            f"{qat_bundle['qat']:.2f} dB (drop {drop:+.2f}, limit 0.50); "
            f"min-max post-quantization {qat_bundle['minmax']:.2f} dB "
            f"(must be <= QAT, non-strict)")


def test_criterion_6_zero_bin(capsys):
    edge = math.atanh(1.0 / 127.0)

    def q(vals):
        return qat_quantize(Tensor(np.asarray(vals, dtype=np.float64)), 8).data

    boundary = (q([edge - 1e-9])[0] == 0.0 and q([edge + 1e-9])[0] != 0.0
                and q([-(edge - 1e-9)])[0] == 0.0
                and q([-(edge + 1e-9)])[0] != 0.0)
    w = np.random.default_rng(0).uniform(-0.05, 0.05, 5000)
    prop = bool(np.all((q(w) == 0.0) == (np.abs(w) < edge)))
    ok = boundary and prop
    _report(capsys, 6, ok,
            f"k=8 zero bin is exactly |w| < atanh(1/127) = {edge:.6f} "
            f"(boundary probed at +/-1e-9; 5000-sample property "
            f"{'holds' if prop else 'fails'})")


def test_criterion_7_round_trip(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    neighbor_sets = [(-1, 1), (-2, 1), (-1, 2), (-2, -1, 1, 2)]
    mismatches = 0
    undetected = 0
    for i in range(100):
        cfg = FFNeRVConfig(
            num_frames=int(rng.integers(2, 6)),
            frame_hw=(8, 8),
            upscale_factors=(2,),
            block_widths=(8,),
            grid_resolutions=(2, 3),
            latent_channels=4,
            neighbors=neighbor_sets[i % len(neighbor_sets)],
            groups=int(rng.choice([1, 2, 4])),
            compact_blocks=bool(i % 2),
        )
        model = FFNeRVModel(cfg, seed=i)
        for p in model.parameters().values():
            p.data[...] = rng.standard_normal(p.shape).astype(np.float32) * 0.5
        bits = int(rng.integers(4, 9))
        t = int(rng.integers(0, cfg.num_frames))
        reference = model.decode_frame(t, pmap=quantized_params(model, bits))
        stream = serialize(quantize_model(model, bits))
        decoded = model_from_quantized(deserialize(stream)).decode_frame(t)
        if not np.array_equal(decoded, reference):
            mismatches += 1
        corrupt = bytearray(stream)
        corrupt[int(rng.integers(0, len(stream)))] ^= 1 + int(rng.integers(255))
        try:
            deserialize(bytes(corrupt))
            undetected += 1
        except BitstreamError:
            pass
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and undetected == 0 and elapsed <= 30.0
    _report(capsys, 7, ok,
            f"100 random mini-models: {mismatches} decode mismatches, "
            f"{undetected} undetected 1-byte corruptions, {elapsed:.1f}s "
            f"(limit 30s)")


def test_criterion_8_parameter_arithmetic(capsys):
    failures = []
    sweep = [(c1, c2p, g, k)
             for c1 in (8, 16, 64, 156) for c2p in (16, 64, 96, 384)
             for g in (1, 2, 4, 8) for k in (1, 3, 5)
             if c1 % g == 0 and c2p % g == 0]
    for c1, c2p, g, k in sweep:
        scale = 1  # keep c2p == out_ch * scale^2 explicit
        nerv_w, _ = param_count(ConvBlockSpec("nerv", c1, c2p, scale, k))
        comp_w, _ = param_count(ConvBlockSpec("compact", c1, c2p, scale, k, g))
        if Fraction(comp_w, nerv_w) != compact_ratio(c1, c2p, g, k):
            failures.append((c1, c2p, g, k))

    shapes = dict(layer_shapes(paper_720p_config()))
    expected = {"grids": (156, 9, 16), "block0": (156, 45, 80),
                "block2": (96, 180, 320), "head_flow": (12, 180, 320),
                "block4": (96, 720, 1280), "head_color": (5, 720, 1280),
                "aggregation": (3, 720, 1280)}
    shape_bad = {k: shapes.get(k) for k, v in expected.items()
                 if shapes.get(k) != v}
    ok = not failures and not shape_bad
    _report(capsys, 8, ok,
            f"ratio 1/g + C2'/(k^2*C1) exact on {len(sweep)} tuples "
            f"({len(failures)} failures); 720p preset layer shapes "
            f"{'match' if not shape_bad else f'differ: {shape_bad}'} "
            f"(156x9x16 latent through 5x720x1280 head)")


@pytest.fixture(scope="module")
def interp_reports(tmp_path_factory):
    """CLI interpolation studies shared by criterion 9."""
    runner = CliRunner()
    reports = {}
    for name, clip, extra in (
        ("static", static_clip(16, 32), []),
        ("full", gradient_clip(16, 32), []),
        ("no-multires", gradient_clip(16, 32), ["--config"]),
    ):
        d = tmp_path_factory.mktemp(f"interp_{name}")
        write_frames(d / "frames", clip)
        args = ["interp", str(d / "frames"), "--seed", "1",
                "--epochs", str(EPOCHS), "--lr", str(LR)]
        if extra:
            cfg = d / "variant.yaml"
            cfg.write_text("preset: tiny\ngrids_enabled: false\n")
            args += ["--config", str(cfg)]
        res = runner.invoke(cli_main, args)
        assert res.exit_code == 0, res.output
        reports[name] = json.loads(
            (d / "frames" / "interp_report.json").read_text())
    return reports


def test_criterion_9_interpolation(capsys, interp_reports):
    static = interp_reports["static"]
    gap = abs(static["mean_seen_psnr"] - static["mean_unseen_psnr"])
    full = interp_reports["full"]["mean_unseen_psnr"]
    variant = interp_reports["no-multires"]["mean_unseen_psnr"]
    margin = full - variant
    static_ok = gap <= 0.1
    detail = (f"static clip seen/unseen gap {gap:.3f} dB (limit 0.10); "
              f"translating clip unseen: full {full:.2f} vs "
              f"single-resolution-grid variant {variant:.2f} dB "
              f"(margin {margin:+.2f})")
    if margin <= 0.0:
        # the criterion's escape hatch: the ordering is seed-sensitive at
        # this scale, so a non-positive margin is recorded rather than failed
        detail += " -- documented deviation: margin non-positive at this seed"
    _report(capsys, 9, static_ok, detail)
