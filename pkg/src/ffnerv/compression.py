"""Post-training compression: pruning, weight symbolization, entropy-coded
bit-exact serialization (.ffnv container) and size accounting.

Container layout (all integers little-endian):

    magic "FFNV" | u16 version | u32 header_len | header JSON | payload
    | u32 CRC32 over everything before the CRC field

The header describes per-parameter-class entries; quantized classes store
integer symbols in [-N, N] (N = 2**(k-1) - 1) either canonically
Huffman-coded or, for a single-symbol alphabet, as a run length. Biases
are stored as raw float32. Decoding symbols via symbol/N reproduces the
exact float32 weights used in QAT forward passes.
"""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from . import huffman
from .model import FFNeRVConfig, FFNeRVModel

MAGIC = b"FFNV"
VERSION = 1


class BitstreamError(ValueError):
    """Base class for malformed .ffnv data."""


class BadMagicError(BitstreamError):
    pass


class BadVersionError(BitstreamError):
    pass


class TruncatedError(BitstreamError):
    pass


class ChecksumError(BitstreamError):
    pass


def quant_levels(bits: int) -> int:
    return (1 << (bits - 1)) - 1


def quantize_symbols(w: np.ndarray, bits: int) -> np.ndarray:
    """sign(w) * floor(N * tanh|w|) as int16 symbols."""
    N = quant_levels(bits)
    w32 = np.asarray(w, dtype=np.float32)
    sym = np.sign(w32) * np.floor(N * np.tanh(np.abs(w32))).astype(np.float32)
    return sym.astype(np.int16)


def dequantize_symbols(sym: np.ndarray, bits: int) -> np.ndarray:
    N = quant_levels(bits)
    return (sym.astype(np.float32) / np.float32(N)).astype(np.float32)


def minmax_quantize(w: np.ndarray, bits: int) -> np.ndarray:
    """NeRV-style per-class linear post-quantization to 2**bits levels."""
    w32 = np.asarray(w, dtype=np.float32)
    lo = float(w32.min())
    hi = float(w32.max())
    if hi == lo:
        return w32.copy()
    levels = (1 << bits) - 1
    q = np.round((w32 - lo) / (hi - lo) * levels)
    return (q / levels * (hi - lo) + lo).astype(np.float32)


def minmax_symbols(w: np.ndarray, bits: int) -> np.ndarray:
    """Integer level indices of the min-max quantizer (for entropy studies)."""
    w32 = np.asarray(w, dtype=np.float32)
    lo, hi = float(w32.min()), float(w32.max())
    if hi == lo:
        return np.zeros(w32.shape, dtype=np.int32)
    levels = (1 << bits) - 1
    return np.round((w32 - lo) / (hi - lo) * levels).astype(np.int32)


def prune(model: FFNeRVModel, ratio: float = 0.2) -> FFNeRVModel:
    """Zero the globally smallest-|w| fraction of conv weights in place.

    Grids and biases are exempt; no index side-structure is kept, the
    zeros simply flow into entropy coding. Ties break by stable flat
    parameter order.
    """
    if not 0.0 <= ratio < 1.0:
        raise ValueError(f"prune ratio must be in [0,1), got {ratio}")
    if ratio == 0.0:
        return model
    params = model.parameters()
    names = model.conv_weight_names()
    flats = [params[n].data.reshape(-1) for n in names]
    mags = np.concatenate([np.abs(f) for f in flats])
    k = int(np.floor(ratio * mags.size))
    if k == 0:
        return model
    kill = np.argsort(mags, kind="stable")[:k]
    mask = np.zeros(mags.size, dtype=bool)
    mask[kill] = True
    offset = 0
    for flat in flats:
        sel = mask[offset:offset + flat.size]
        flat[sel] = 0.0
        offset += flat.size
    return model


@dataclass
class QuantizedModel:
    """Integer-symbol snapshot of a trained model plus raw biases."""

    config: FFNeRVConfig
    bits: int
    symbols: dict[str, np.ndarray]  # int16, original shapes
    raw: dict[str, np.ndarray]  # float32 (biases)

    def weights(self) -> dict[str, np.ndarray]:
        """Decoded float32 weights, bit-identical to QAT forward weights."""
        out = {n: dequantize_symbols(s, self.bits) for n, s in self.symbols.items()}
        out.update({n: v.copy() for n, v in self.raw.items()})
        return out


def quantize_model(model: FFNeRVModel, bits: int) -> QuantizedModel:
    params = model.parameters()
    wnames = set(model.weight_class_names())
    symbols = {n: quantize_symbols(params[n].data, bits) for n in sorted(wnames)}
    raw = {n: params[n].data.astype(np.float32).copy()
           for n in sorted(set(params) - wnames)}
    return QuantizedModel(config=model.config, bits=bits, symbols=symbols, raw=raw)


def model_from_quantized(qm: QuantizedModel) -> FFNeRVModel:
    """Instantiate a model whose raw parameters are the decoded weights.

    Forward passes of the returned model must not re-apply QAT; the
    weights are already in the quantizer codomain.
    """
    model = FFNeRVModel(qm.config, seed=0)
    decoded = qm.weights()
    for name, p in model.parameters().items():
        p.data[...] = decoded[name]
    return model


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _encode_entry(name: str, arr: np.ndarray, kind: str):
    meta: dict = {"name": name, "kind": kind, "shape": list(arr.shape)}
    if kind == "raw":
        payload = arr.astype("<f4").tobytes()
        meta["bytes"] = len(payload)
        return meta, payload
    flat = arr.reshape(-1)
    freqs = huffman.symbol_frequencies(flat)
    meta["count"] = int(flat.size)
    if flat.size == 0:
        meta["mode"] = "empty"
        return meta, b""
    if len(freqs) == 1:
        meta["mode"] = "run"
        meta["symbol"] = int(flat[0])
        return meta, b""
    lengths = huffman.code_lengths(freqs)
    codes = huffman.canonical_codes(lengths)
    payload, nbits = huffman.encode(flat, codes)
    meta["mode"] = "coded"
    meta["table"] = sorted([int(s), int(l)] for s, l in lengths.items())
    meta["nbits"] = nbits
    meta["bytes"] = len(payload)
    return meta, payload


def _decode_entry(meta: dict, payload: bytes) -> np.ndarray:
    shape = tuple(meta["shape"])
    if meta["kind"] == "raw":
        return np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    mode = meta["mode"]
    if mode == "empty":
        return np.zeros(shape, dtype=np.int16)
    if mode == "run":
        return np.full(shape, meta["symbol"], dtype=np.int16)
    lengths = {int(s): int(l) for s, l in meta["table"]}
    flat = huffman.decode(payload, meta["nbits"], lengths, meta["count"])
    return flat.astype(np.int16).reshape(shape)


def serialize(qm: QuantizedModel) -> bytes:
    entries = []
    payloads = []
    for name in sorted(qm.symbols):
        meta, payload = _encode_entry(name, qm.symbols[name], "sym")
        entries.append(meta)
        payloads.append(payload)
    for name in sorted(qm.raw):
        meta, payload = _encode_entry(name, qm.raw[name], "raw")
        entries.append(meta)
        payloads.append(payload)
    header = {
        "config": qm.config.to_dict(),
        "bits": qm.bits,
        "entries": entries,
    }
    header_bytes = json.dumps(header, sort_keys=True,
                              separators=(",", ":")).encode()
    body = b"".join(payloads)
    prefix = MAGIC + struct.pack("<HI", VERSION, len(header_bytes))
    blob = prefix + header_bytes + body
    return blob + struct.pack("<I", zlib.crc32(blob) & 0xFFFFFFFF)


def deserialize(data: bytes) -> QuantizedModel:
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError("not an FFNV bitstream (bad magic)")
    if len(data) < 14:
        raise TruncatedError(f"bitstream too short ({len(data)} bytes)")
    version, header_len = struct.unpack("<HI", data[4:10])
    if version != VERSION:
        raise BadVersionError(f"unsupported bitstream version {version}")
    if len(data) < 10 + header_len + 4:
        raise TruncatedError("bitstream shorter than declared header")
    stored_crc, = struct.unpack("<I", data[-4:])
    actual_crc = zlib.crc32(data[:-4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise ChecksumError(
            f"CRC mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}")
    try:
        header = json.loads(data[10:10 + header_len].decode())
        config = FFNeRVConfig.from_dict(header["config"])
        bits = int(header["bits"])
        body = data[10 + header_len:-4]
        expected = sum(e.get("bytes", 0) for e in header["entries"])
        if len(body) != expected:
            raise TruncatedError(
                f"payload length {len(body)} != declared {expected}")
        symbols: dict[str, np.ndarray] = {}
        raw: dict[str, np.ndarray] = {}
        offset = 0
        for meta in header["entries"]:
            nbytes = meta.get("bytes", 0)
            arr = _decode_entry(meta, body[offset:offset + nbytes])
            offset += nbytes
            if meta["kind"] == "sym":
                symbols[meta["name"]] = arr
            else:
                raw[meta["name"]] = arr
    except BitstreamError:
        raise
    except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
        raise ChecksumError(f"malformed bitstream header/payload: {exc}") from exc
    return QuantizedModel(config=config, bits=bits, symbols=symbols, raw=raw)


def bpp(stream: bytes | int, num_frames: int, frame_hw: tuple[int, int]) -> float:
    """Bits per pixel of a serialized stream over a T x H x W video."""
    if num_frames <= 0 or frame_hw[0] <= 0 or frame_hw[1] <= 0:
        raise ValueError("video dimensions must be positive")
    nbytes = stream if isinstance(stream, int) else len(stream)
    return nbytes * 8.0 / (num_frames * frame_hw[0] * frame_hw[1])
