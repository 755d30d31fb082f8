"""Kernel backend selection.

The compiled extension is used when importable. Set
``LEGGED_INEKF_BACKEND=python`` to force the numpy fallback.
"""

import os

from . import _pykernels

_choice = os.environ.get("LEGGED_INEKF_BACKEND", "auto").lower()

if _choice == "python":
    backend = _pykernels
else:
    try:
        from . import _ckernels as backend
    except ImportError:
        if _choice == "cython":
            raise
        backend = _pykernels

BACKEND_NAME = backend.NAME


def available_backends():
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
