"""Command-line front end: encode, decode, eval, interp, inspect.

Every command exits 0 on success and nonzero with a category-coded
diagnostic (``error[<category>]: ...``) otherwise. All numbers printed to
the console also appear in the JSON artifacts (manifest or report), so a
run is fully reproducible from its files.
"""
from __future__ import annotations

import functools
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np
import yaml

from . import __version__
from .compression import (BitstreamError, bpp, deserialize, model_from_quantized,
                          prune, quantize_model, serialize)
from .frame_io import FrameIOError, read_frames, write_frame
from .metrics import psnr, ssim
from .model import FFNeRVConfig, FFNeRVModel
from .presets import PRESETS, get_config
from .tensor import Tensor
from .training import LossWeights, TrainConfig, TrainingDiverged, train

EXIT_CODES = {"io": 2, "config": 3, "bitstream": 4, "training": 5, "internal": 1}

MODEL_KEYS = frozenset((
    "neighbors", "upscale_factors", "block_widths", "grid_resolutions",
    "latent_channels", "groups", "compact_blocks", "kernel",
    "flow_attach_stage", "flow_enabled", "grids_enabled",
))
TRAIN_KEYS = frozenset((
    "epochs", "batch", "lr", "schedule", "warmup_frac", "qat_enabled",
    "qat_bits", "seed",
))


def _category(exc: BaseException) -> str:
    if isinstance(exc, BitstreamError):
        return "bitstream"
    if isinstance(exc, (FrameIOError, OSError)):
        return "io"
    if isinstance(exc, TrainingDiverged):
        return "training"
    if isinstance(exc, (ValueError, KeyError, TypeError)):
        return "config"
    return "internal"


def _handled(fn):
    """Convert exceptions into category-coded diagnostics and exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except Exception as exc:
            cat = _category(exc)
            click.echo(f"error[{cat}]: {exc}", err=True)
            sys.exit(EXIT_CODES[cat])

    return wrapper


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------

def _load_config_spec(config_opt: str) -> dict:
    """Resolve --config: a preset name or a YAML key-value file."""
    if config_opt in PRESETS:
        return {"preset": config_opt}
    path = Path(config_opt)
    if not path.is_file():
        raise KeyError(
            f"--config {config_opt!r} is neither a preset "
            f"({sorted(PRESETS)}) nor a config file")
    data = yaml.safe_load(path.read_text())
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} must be a key-value mapping")
    unknown = set(data) - MODEL_KEYS - TRAIN_KEYS - {"preset", "prune_ratio"}
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return data


def _listify(v):
    return tuple(v) if isinstance(v, (list, tuple)) else v


def _build_configs(config_opt: str, num_frames: int, frame_hw, *,
                   seed=None, qat_bits=None, no_flow=False, epochs=None,
                   lr=None, prune_ratio=None):
    """(model config, train config, prune ratio) from file + CLI overrides."""
    spec = _load_config_spec(config_opt)
    preset = spec.get("preset", "tiny")
    model_over = {k: _listify(spec[k]) for k in MODEL_KEYS if k in spec}
    train_over = {k: spec[k] for k in TRAIN_KEYS if k in spec}
    if no_flow:
        model_over["flow_enabled"] = False
    if seed is not None:
        train_over["seed"] = seed
    if qat_bits is not None:
        train_over["qat_bits"] = qat_bits
    if epochs is not None:
        train_over["epochs"] = epochs
    if lr is not None:
        train_over["lr"] = lr
    cfg = get_config(preset, num_frames, frame_hw, **model_over)
    tcfg = TrainConfig(**train_over)
    if prune_ratio is None:
        prune_ratio = float(spec.get("prune_ratio", 0.0))
    return cfg, tcfg, prune_ratio


def _ablation_mode(cfg: FFNeRVConfig) -> str:
    if not cfg.flow_enabled:
        return "grids-only"
    if not cfg.grids_enabled:
        return "no-multires"
    return "full"


def _parse_range(spec: str | None, total: int) -> range:
    """--frames "A:B" -> half-open range clamped to [0, total)."""
    if spec is None:
        return range(total)
    try:
        a_str, b_str = spec.split(":")
        a, b = int(a_str), int(b_str)
    except ValueError as exc:
        raise ValueError(f"--frames expects A:B (half-open), got {spec!r}") from exc
    if not (0 <= a < b <= total):
        raise ValueError(
            f"--frames range [{a},{b}) outside video of {total} frames")
    return range(a, b)


def _decode_many(model: FFNeRVModel, ts, jobs: int) -> list[np.ndarray]:
    """Decode frames (deterministic regardless of job count)."""
    cache: dict = {}
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(lambda t: model.decode_frame(t, cache=cache), ts))
    return [model.decode_frame(t, cache=cache) for t in ts]


def _frame_metrics(decoded, reference) -> list[dict]:
    out = []
    for t, (dec, ref) in enumerate(zip(decoded, reference)):
        out.append({
            "t": t,
            "psnr": psnr(dec, ref),
            "ssim": float(ssim(Tensor(dec), Tensor(ref)).item()),
        })
    return out


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

@click.group()
@click.version_option(__version__)
def main():
    """Flow-guided frame-wise neural video codec."""


@main.command()
@click.argument("frames_dir", type=click.Path())
@click.option("--out", required=True, type=click.Path(),
              help="Output .ffnv bitstream path.")
@click.option("--config", "config_opt", default="tiny", show_default=True,
              help="Preset name or YAML config file.")
@click.option("--seed", type=int, default=None, help="Training/init seed.")
@click.option("--prune-ratio", type=float, default=None,
              help="Global magnitude-prune fraction of conv weights.")
@click.option("--qat-bits", type=int, default=None,
              help="Quantization-aware training bit width.")
@click.option("--no-flow", is_flag=True, help="Disable flow aggregation.")
@click.option("--epochs", type=int, default=None, help="Training epochs.")
@click.option("--lr", type=float, default=None, help="Peak learning rate.")
@_handled
def encode(frames_dir, out, config_opt, seed, prune_ratio, qat_bits, no_flow,
           epochs, lr):
    """Train on a frame directory and write a compressed .ffnv bitstream."""
    frames = read_frames(frames_dir)
    T, _, H, W = frames.shape
    cfg, tcfg, ratio = _build_configs(
        config_opt, T, (H, W), seed=seed, qat_bits=qat_bits, no_flow=no_flow,
        epochs=epochs, lr=lr, prune_ratio=prune_ratio)

    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    metrics_path = Path(str(out) + ".metrics.jsonl")
    manifest_path = Path(str(out) + ".manifest.json")

    model = FFNeRVModel(cfg, seed=tcfg.seed)
    t0 = time.perf_counter()
    with metrics_path.open("w") as log:
        records = train(model, frames, tcfg, LossWeights(),
                        on_epoch=lambda r: print(json.dumps(r), file=log))
    train_s = time.perf_counter() - t0

    if ratio > 0.0:
        prune(model, ratio)
    stream = serialize(quantize_model(model, tcfg.qat_bits))
    out.write_bytes(stream)

    # verification pass: decode the written stream exactly as cmd_eval would
    t1 = time.perf_counter()
    decoded_model = model_from_quantized(deserialize(stream))
    per_frame = _frame_metrics(_decode_many(decoded_model, range(T), 1), frames)
    check_s = time.perf_counter() - t1

    manifest = {
        "command": "encode",
        "version": __version__,
        "frames_dir": str(Path(frames_dir).resolve()),
        "config": cfg.to_dict(),
        "train": vars(tcfg).copy(),
        "seed": tcfg.seed,
        "prune_ratio": ratio,
        "ablation_mode": _ablation_mode(cfg),
        "artifacts": {
            "bitstream": str(out),
            "metrics_log": str(metrics_path),
            "manifest": str(manifest_path),
        },
        "timings": {"train_s": train_s, "decode_check_s": check_s},
        "stream_bytes": len(stream),
        "bpp": bpp(stream, T, (H, W)),
        "per_frame_psnr": [f["psnr"] for f in per_frame],
        "psnr": float(np.mean([f["psnr"] for f in per_frame])),
        "ssim": float(np.mean([f["ssim"] for f in per_frame])),
        "final_train_loss": records[-1]["loss"],
    }
    _write_json(manifest_path, manifest)
    click.echo(f"wrote {out} ({manifest['stream_bytes']} bytes, "
               f"bpp {manifest['bpp']:.6f})")
    click.echo(f"psnr {manifest['psnr']:.4f} dB  ssim {manifest['ssim']:.6f}  "
               f"train {train_s:.1f}s")


@main.command()
@click.argument("stream_path", type=click.Path())
@click.option("--out", required=True, type=click.Path(),
              help="Output directory for decoded PNG frames.")
@click.option("--frames", "frames_spec", default=None,
              help="Half-open frame range A:B (default: all).")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Parallel decode workers.")
@_handled
def decode(stream_path, out, frames_spec, jobs):
    """Decode a .ffnv bitstream to a directory of PNG frames."""
    stream = Path(stream_path).read_bytes()
    qm = deserialize(stream)
    model = model_from_quantized(qm)
    ts = _parse_range(frames_spec, qm.config.num_frames)

    t0 = time.perf_counter()
    decoded = _decode_many(model, ts, jobs)
    elapsed = time.perf_counter() - t0

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for t, frame in zip(ts, decoded):
        write_frame(out / f"frame_{t:05d}.png", frame)
    fps = len(decoded) / elapsed if elapsed > 0 else float("inf")
    manifest = {
        "command": "decode",
        "stream": str(Path(stream_path).resolve()),
        "frames": [int(t) for t in ts],
        "jobs": jobs,
        "timings": {"decode_s": elapsed},
        "frames_per_sec": fps,
    }
    _write_json(out / "decode_manifest.json", manifest)
    click.echo(f"decoded {len(decoded)} frames to {out} ({fps:.2f} frames/s)")


@main.command("eval")
@click.argument("stream_path", type=click.Path())
@click.argument("frames_dir", type=click.Path())
@click.option("--out", type=click.Path(), default=None,
              help="Report path (default: <stream>.eval.json).")
@click.option("--jobs", type=int, default=1, show_default=True)
@_handled
def eval_cmd(stream_path, frames_dir, out, jobs):
    """Per-frame PSNR/SSIM of a bitstream against reference frames."""
    stream = Path(stream_path).read_bytes()
    qm = deserialize(stream)
    frames = read_frames(frames_dir)
    T = qm.config.num_frames
    if len(frames) != T:
        raise ValueError(f"frame count mismatch: bitstream encodes {T} frames, "
                         f"directory holds {len(frames)}")
    model = model_from_quantized(qm)
    per_frame = _frame_metrics(_decode_many(model, range(T), jobs), frames)
    report = {
        "command": "eval",
        "stream": str(Path(stream_path).resolve()),
        "frames_dir": str(Path(frames_dir).resolve()),
        "num_frames": T,
        "bpp": bpp(stream, T, qm.config.frame_hw),
        "frames": per_frame,
        "mean_psnr": float(np.mean([f["psnr"] for f in per_frame])),
        "mean_ssim": float(np.mean([f["ssim"] for f in per_frame])),
    }
    out = Path(out) if out else Path(stream_path).with_suffix(".eval.json")
    _write_json(out, report)
    click.echo(f"psnr {report['mean_psnr']:.4f} dB  "
               f"ssim {report['mean_ssim']:.6f}  bpp {report['bpp']:.6f}")


@main.command()
@click.argument("frames_dir", type=click.Path())
@click.option("--out", type=click.Path(), default=None,
              help="Report path (default: <frames_dir>/interp_report.json).")
@click.option("--config", "config_opt", default="tiny", show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--no-flow", is_flag=True)
@click.option("--epochs", type=int, default=None)
@click.option("--lr", type=float, default=None)
@_handled
def interp(frames_dir, out, config_opt, seed, no_flow, epochs, lr):
    """Frame-interpolation study: train on even frames, test on odd frames.

    Split rule: even source indices train, odd validate; with an odd frame
    count the validation set is the smaller half. Unseen frame 2j+1 is
    decoded at fractional index j + 0.5.
    """
    frames = read_frames(frames_dir)
    if len(frames) < 4:
        raise ValueError(f"interpolation needs >= 4 frames, got {len(frames)}")
    seen, unseen = frames[0::2], frames[1::2]
    T, _, H, W = seen.shape
    cfg, tcfg, _ = _build_configs(config_opt, T, (H, W), seed=seed,
                                  no_flow=no_flow, epochs=epochs, lr=lr)
    model = FFNeRVModel(cfg, seed=tcfg.seed)
    t0 = time.perf_counter()
    train(model, seen, tcfg, LossWeights())
    train_s = time.perf_counter() - t0

    cache: dict = {}
    seen_psnr = [psnr(model.decode_frame(t, cache=cache), seen[t])
                 for t in range(T)]
    unseen_psnr = [psnr(model.decode_frame(j + 0.5, cache=cache), unseen[j])
                   for j in range(len(unseen))]
    report = {
        "command": "interp",
        "frames_dir": str(Path(frames_dir).resolve()),
        "config": cfg.to_dict(),
        "train": vars(tcfg).copy(),
        "split_rule": "even indices train, odd validate (smaller half)",
        "timings": {"train_s": train_s},
        "seen_psnr": seen_psnr,
        "unseen_psnr": unseen_psnr,
        "mean_seen_psnr": float(np.mean(seen_psnr)),
        "mean_unseen_psnr": float(np.mean(unseen_psnr)),
    }
    out = Path(out) if out else Path(frames_dir) / "interp_report.json"
    _write_json(out, report)
    click.echo(f"seen {report['mean_seen_psnr']:.4f} dB  "
               f"unseen {report['mean_unseen_psnr']:.4f} dB")


def _norm_map(arr: np.ndarray) -> np.ndarray:
    """Min-max normalize a weight map; constant maps render uniform gray."""
    lo, hi = float(arr.min()), float(arr.max())
    if hi == lo:
        return np.full_like(arr, 0.5)
    return (arr - lo) / (hi - lo)


@main.command()
@click.argument("stream_path", type=click.Path())
@click.argument("t", type=int)
@click.option("--out", required=True, type=click.Path(),
              help="Output directory for component images.")
@_handled
def inspect(stream_path, t, out):
    """Dump reconstruction components of frame t as images.

    Writes the independent frame, each warped neighbor, the aggregated
    frame, the two blend weight maps (min-max normalized), and the final
    frame (bit-exact with cmd_decode's output for the same t).
    """
    qm = deserialize(Path(stream_path).read_bytes())
    model = model_from_quantized(qm)
    cfg = model.config
    if not 0 <= t < cfg.num_frames:
        raise ValueError(f"frame index {t} outside [0, {cfg.num_frames})")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)

    comp = model.forward_components(t)
    write_frame(out / "independent.png", comp.independent.data)
    if not cfg.flow_enabled:
        write_frame(out / "final.png", comp.independent.data)
        click.echo(f"wrote 2 component images to {out} (flow disabled)")
        return

    from .model import FrameBuffer
    buf = FrameBuffer(cfg.num_frames, cfg.frame_hw)
    for j in set(model.neighbor_indices(t)):
        buf.write(j, model.independent_frame(j))
    warped, _, agg = model.aggregation_detail(comp, buf, t)
    final = model.final_frame(comp, agg)
    from .functional import softmax_channels
    from .tensor import concat
    pair = softmax_channels(concat([comp.agg_logit, comp.ind_logit], axis=0))

    for offset, w in zip(cfg.neighbors, warped):
        write_frame(out / f"warped_{offset:+d}.png", w.data)
    write_frame(out / "aggregated.png", agg.data)
    write_frame(out / "weight_aggregated.png", _norm_map(pair.data[0:1]))
    write_frame(out / "weight_independent.png", _norm_map(pair.data[1:2]))
    write_frame(out / "final.png", final.data)
    n_imgs = len(warped) + 5
    click.echo(f"wrote {n_imgs} component images to {out}")


if __name__ == "__main__":
    main()
