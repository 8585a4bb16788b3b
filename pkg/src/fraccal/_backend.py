"""Select the compiled kernels when available, else the numpy fallback.

Set ``FRACCAL_BACKEND=python`` to force the fallback.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _kernels_py


def _load() -> tuple[ModuleType, str]:
    if os.environ.get("FRACCAL_BACKEND", "").lower() == "python":
        return _kernels_py, "python"
    try:
        from . import _kernels
    except ImportError:
        return _kernels_py, "python"
    return _kernels, "compiled"


kernels, name = _load()


def available() -> dict[str, ModuleType]:
    """All importable backends, keyed by name."""
    found = {"python": _kernels_py}
    try:
        from . import _kernels

        found["compiled"] = _kernels
    except ImportError:
        pass
    return found
