"""Selects the compiled stepping kernel when available, pure python otherwise.

Set the environment variable ``ROMFAM_PURE_PYTHON=1`` before import to force
the fallback (the benchmark uses this to compare both paths).
"""

import os

from . import _stepkernel_py

if os.environ.get("ROMFAM_PURE_PYTHON"):
    trapezoidal_loop = _stepkernel_py.trapezoidal_loop
    HAVE_COMPILED_KERNEL = False
else:
    try:
        from ._stepkernel import trapezoidal_loop

        HAVE_COMPILED_KERNEL = True
    except ImportError:
        trapezoidal_loop = _stepkernel_py.trapezoidal_loop
        HAVE_COMPILED_KERNEL = False
