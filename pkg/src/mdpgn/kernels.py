"""Kernel selection: the compiled extension when importable, else pure Python.

Set ``MDPGN_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _fallback

if os.environ.get("MDPGN_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
    COMPILED = False
else:
    try:
        from . import _kernels as _impl

        COMPILED = True
    except ImportError:
        _impl = _fallback
        COMPILED = False

recurrent_chain = _impl.recurrent_chain
tetris_playouts = _impl.tetris_playouts
BACKEND = "cython" if COMPILED else "python"
