"""Kernel backend selection: compiled extension if present, numpy fallback.

Set BRANCHLAB_KERNELS=python (or =compiled) to force a backend; the default
prefers the compiled extension.  active_kernels() returns the module in use.
"""

from __future__ import annotations

import os

from . import _kernels_py

_FORCED = os.environ.get("BRANCHLAB_KERNELS", "").strip().lower()

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

if _FORCED == "python":
    _active = _kernels_py
elif _FORCED == "compiled":
    if _compiled is None:
        raise ImportError(
            "BRANCHLAB_KERNELS=compiled but the branchlab._kernels extension "
            "is not built; run: pip install -e . --no-build-isolation"
        )
    _active = _compiled
else:
    _active = _compiled if _compiled is not None else _kernels_py


def active_kernels():
    return _active


def backend_name() -> str:
    return _active.BACKEND_NAME


def available_backends() -> list[str]:
    names = ["python"]
    if _compiled is not None:
        names.insert(0, "compiled")
    return names


def kernels_by_name(name: str):
    if name == "python":
        return _kernels_py
    if name == "compiled":
        if _compiled is None:
            raise ValueError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")
