"""Canonical prefix (Huffman) coding over small integer alphabets.

Code lengths come from the classic two-queue/heap construction; codewords
are then reassigned canonically (sorted by length, then symbol) so only
the length table needs to ship in the bitstream.
"""
from __future__ import annotations

import heapq
from collections import Counter

import numpy as np


def symbol_frequencies(symbols) -> dict[int, int]:
    vals, counts = np.unique(np.asarray(symbols), return_counts=True)
    return {int(v): int(c) for v, c in zip(vals, counts)}


def code_lengths(freqs: dict[int, int]) -> dict[int, int]:
    """Huffman code length per symbol; requires at least two symbols."""
    if len(freqs) < 2:
        raise ValueError("code_lengths needs an alphabet of at least 2 symbols")
    heap = [(count, (sym,)) for sym, count in sorted(freqs.items())]
    heapq.heapify(heap)
    lengths = dict.fromkeys(freqs, 0)
    while len(heap) > 1:
        c1, s1 = heapq.heappop(heap)
        c2, s2 = heapq.heappop(heap)
        merged = s1 + s2
        for sym in merged:
            lengths[sym] += 1
        heapq.heappush(heap, (c1 + c2, merged))
    return lengths


def canonical_codes(lengths: dict[int, int]) -> dict[int, tuple[int, int]]:
    """Symbol -> (length, codeword) in canonical order."""
    codes: dict[int, tuple[int, int]] = {}
    code = 0
    prev_len = 0
    for sym, ln in sorted(lengths.items(), key=lambda kv: (kv[1], kv[0])):
        code <<= ln - prev_len
        codes[sym] = (ln, code)
        code += 1
        prev_len = ln
    return codes


def encode(symbols, codes: dict[int, tuple[int, int]]) -> tuple[bytes, int]:
    """Pack symbols MSB-first; returns (payload, bit count)."""
    table = {sym: format(code, f"0{ln}b") for sym, (ln, code) in codes.items()}
    bits = "".join(table[int(s)] for s in np.asarray(symbols).reshape(-1))
    nbits = len(bits)
    if nbits == 0:
        return b"", 0
    padded = bits + "0" * (-nbits % 8)
    return int(padded, 2).to_bytes(len(padded) // 8, "big"), nbits


def decode(payload: bytes, nbits: int, lengths: dict[int, int],
           count: int) -> np.ndarray:
    """Inverse of :func:`encode` given the shipped length table."""
    codes = canonical_codes(lengths)
    lookup = {(ln, code): sym for sym, (ln, code) in codes.items()}
    out = np.empty(count, dtype=np.int32)
    acc = 0
    acc_len = 0
    pos = 0
    bitstring = bin(int.from_bytes(payload, "big"))[2:].zfill(len(payload) * 8) \
        if payload else ""
    for i in range(nbits):
        acc = (acc << 1) | (bitstring[i] == "1")
        acc_len += 1
        sym = lookup.get((acc_len, acc))
        if sym is not None:
            if pos >= count:
                raise ValueError("huffman payload decodes to too many symbols")
            out[pos] = sym
            pos = pos + 1
            acc = 0
            acc_len = 0
    if pos != count or acc_len != 0:
        raise ValueError(f"huffman payload decoded {pos} of {count} symbols")
    return out
