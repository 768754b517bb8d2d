"""Kernel backend selection.

The compiled extension is preferred when importable; the numpy implementation
is the always-available fallback. `FLEETSPEED_BACKEND=python|compiled` forces
a choice (forcing `compiled` without the built extension raises, which is the
right failure mode for benchmarks).
"""

from __future__ import annotations

import os

from . import pure

_FORCED = os.environ.get("FLEETSPEED_BACKEND", "").strip().lower()


def load_backend(name: str):
    """Return the kernel module for `name` ('python' or 'compiled')."""
    if name in ("python", "py", "pure"):
        return pure
    if name in ("compiled", "c", "cython"):
        from . import _core  # raises ImportError when not built

        return _core
    raise ValueError(f"unknown backend {name!r}; use 'python' or 'compiled'")


def _select():
    if _FORCED:
        return load_backend(_FORCED)
    try:
        from . import _core

        return _core
    except ImportError:
        return pure


active = _select()
BACKEND = active.NAME


def available_backends() -> list[str]:
    names = ["python"]
    try:
        from . import _core  # noqa: F401

        names.append("compiled")
    except ImportError:
        pass
    return names
