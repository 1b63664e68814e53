"""Optional on-disk cache for expensive dense operators.

Enabled when DISPERSIVE_LAB_CACHE names a directory.  Entries are .npy
files written atomically; a corrupt or unreadable entry is ignored.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

ENV = "DISPERSIVE_LAB_CACHE"


def directory() -> Path | None:
    d = os.environ.get(ENV)
    if not d:
        return None
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


def load(key: str) -> np.ndarray | None:
    d = directory()
    if d is None:
        return None
    f = d / f"{key}.npy"
    if not f.exists():
        return None
    try:
        return np.load(f, allow_pickle=False)
    except (OSError, ValueError):
        return None


def store(key: str, arr: np.ndarray) -> None:
    d = directory()
    if d is None:
        return
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.save(fh, arr, allow_pickle=False)
        os.replace(tmp, d / f"{key}.npy")
    except OSError:
        if os.path.exists(tmp):
            os.unlink(tmp)
