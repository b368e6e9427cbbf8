"""Small shared helpers: seed derivation and atomic file writes."""

from __future__ import annotations

import os
import tempfile

import numpy as np


def derive_rng(*parts) -> np.random.Generator:
    """Deterministic generator from a flat tuple of non-negative integers.

    Sequence arguments are flattened, so ``derive_rng([seed, tag], i)`` and
    ``derive_rng(seed, tag, i)`` agree; parallel and serial trial orders then
    draw identical per-trial streams.
    """
    material = []
    for part in parts:
        if isinstance(part, (list, tuple)):
            material.extend(int(p) for p in part)
        else:
            material.append(int(part))
    return np.random.default_rng(material)


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename into place."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
