"""Pure-Python versions of the compiled kernels in ``_kernels.pyx``."""
from __future__ import annotations

from collections.abc import Sequence

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
WORD_SALT = 0x9E3779B97F4A7C15
BIGRAM_SALT = 0xC2B2AE3D27D4EB4F
_MASK = (1 << 64) - 1


def fnv1a64(data: bytes, seed: int = FNV_OFFSET) -> int:
    h = seed
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK
    return h


def accumulate_features(data: bytes, n: int, out) -> None:
    """Add hashed byte n-gram, word and word-bigram counts of ``data`` into ``out``."""
    dim = len(out)
    for i in range(len(data) - n + 1):
        out[fnv1a64(data[i : i + n]) % dim] += 1.0
    prev = None
    pos = 0
    for word in data.split(b" "):
        if word:
            out[fnv1a64(word, FNV_OFFSET ^ WORD_SALT) % dim] += 1.0
            if prev is not None:
                out[fnv1a64(data[prev : pos + len(word)], FNV_OFFSET ^ BIGRAM_SALT) % dim] += 1.0
            prev = pos
        pos += len(word) + 1


def lcs_length(a: Sequence[int], b: Sequence[int]) -> int:
    """Length of the longest common subsequence, two-row DP."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            if x == y:
                cur.append(prev[j] + 1)
            else:
                cur.append(max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]
