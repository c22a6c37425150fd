"""Kernel backend selection.

Imports the compiled Cython core when it is available and falls back to
the NumPy implementation otherwise. Set PROXFLOW_PURE=1 to force the
fallback (used by the parity tests and the benchmark).
"""

import os

if os.environ.get("PROXFLOW_PURE", "") not in ("", "0"):
    from ._pure import *  # noqa: F401,F403

    BACKEND = "pure"
else:
    try:
        from ._core import *  # noqa: F401,F403

        BACKEND = "cython"
    except ImportError:
        from ._pure import *  # noqa: F401,F403

        BACKEND = "pure"

from ._pure import __all__  # noqa: E402

__all__ = __all__ + ["BACKEND"]
