"""On-disk persistence of the pairing caches.

The directory comes from ``GAUSSFIELD_CACHE_DIR``; when the variable is
unset nothing is read or written.  Cached values are the exact doubles
computed earlier, so a warm cache does not change any output.
"""
from __future__ import annotations

import os
import pickle
from pathlib import Path

from . import __version__, lightcone, weyl

ENV_VAR = "GAUSSFIELD_CACHE_DIR"
_FILE = f"pairings-{__version__}.pkl"


def cache_dir() -> Path | None:
    raw = os.environ.get(ENV_VAR, "").strip()
    return Path(raw).expanduser() if raw else None


def load() -> int:
    """Merge a stored cache into memory; returns the number of entries read."""
    d = cache_dir()
    if d is None or not (d / _FILE).is_file():
        return 0
    try:
        with open(d / _FILE, "rb") as fh:
            doc = pickle.load(fh)
    except (OSError, pickle.UnpicklingError, EOFError):
        return 0  # a damaged cache is simply rebuilt
    with lightcone._PAIR_LOCK:
        lightcone._ATOM_PAIRS.update(doc.get("dflat_atoms", {}))
    with weyl.CACHE._lock:
        weyl.CACHE._data.update(doc.get("weyl", {}))
    return len(doc.get("dflat_atoms", {})) + len(doc.get("weyl", {}))


def save() -> Path | None:
    d = cache_dir()
    if d is None:
        return None
    d.mkdir(parents=True, exist_ok=True)
    with lightcone._PAIR_LOCK:
        atoms = dict(lightcone._ATOM_PAIRS)
    with weyl.CACHE._lock:
        words = dict(weyl.CACHE._data)
    tmp = d / (_FILE + ".tmp")
    with open(tmp, "wb") as fh:
        pickle.dump({"dflat_atoms": atoms, "weyl": words}, fh, protocol=pickle.HIGHEST_PROTOCOL)
    os.replace(tmp, d / _FILE)
    return d / _FILE
