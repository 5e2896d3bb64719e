"""Hot kernels: compiled extension when built, pure Python otherwise.

Set ``STATSLICE_PURE=1`` to force the pure-Python implementation.
"""

import os

from . import purepy

BACKEND = "python"
scan_deps = purepy.scan_deps
closure = purepy.closure

if not os.environ.get("STATSLICE_PURE"):
    try:
        from . import _scan
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "cython"
        scan_deps = _scan.scan_deps
        closure = _scan.closure

__all__ = ["BACKEND", "scan_deps", "closure", "purepy"]
