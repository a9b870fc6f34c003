"""Hot-loop kernels, compiled when available.

The Cython extension ``groundplan._kernels`` is used if it was built; otherwise
(or when ``GROUNDPLAN_PURE_PYTHON=1``) the pure-Python twins are used. Both
produce identical results; ``BACKEND`` names the active one.
"""
from __future__ import annotations

import os

import numpy as np

from groundplan import _pykernels

if os.environ.get("GROUNDPLAN_PURE_PYTHON") == "1":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from groundplan import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"


def fnv1a64(data: bytes) -> int:
    return int(_impl.fnv1a64(data))


def hashed_features(text: str, dim: int, n: int = 3) -> np.ndarray:
    """Count vector of hashed byte n-grams and words of ``text``."""
    out = np.zeros(dim, dtype=np.float64)
    _impl.accumulate_features(text.encode("utf-8"), n, out)
    return out


def lcs_length(a, b) -> int:
    """LCS length of two integer sequences."""
    if BACKEND == "cython":
        return int(
            _impl.lcs_length(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64))
        )
    return _impl.lcs_length(list(a), list(b))
