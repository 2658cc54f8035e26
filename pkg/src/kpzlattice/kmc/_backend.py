"""Kernel selection: compiled extension when importable, else pure Python.

Set ``KPZLATTICE_BACKEND=python`` to force the fallback.
"""

import os

from . import _pycore

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

KERNELS = {"python": _pycore.run_segment}
if _core is not None:
    KERNELS["compiled"] = _core.run_segment

_requested = os.environ.get("KPZLATTICE_BACKEND", "").strip().lower()
if _requested and _requested not in KERNELS:
    raise ImportError(f"KPZLATTICE_BACKEND={_requested!r} unavailable; have {sorted(KERNELS)}")
BACKEND = _requested or ("compiled" if "compiled" in KERNELS else "python")


def get_kernel(name=None):
    name = BACKEND if name is None else name
    try:
        return KERNELS[name]
    except KeyError:
        raise ValueError(f"unknown KMC backend {name!r}; have {sorted(KERNELS)}") from None
