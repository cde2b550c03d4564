"""Pick the compiled kernels when available, else the pure-Python ones.

Set ``TIMEBLIND_PURE_PYTHON=1`` before import to force the fallback.
"""

import os

if os.environ.get("TIMEBLIND_PURE_PYTHON", "") not in ("", "0"):
    from . import _pykernels as kernels

    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels

        BACKEND = "cython"
    except ImportError:
        from . import _pykernels as kernels

        BACKEND = "python"

posterior_moments = kernels.posterior_moments
hungarian = kernels.hungarian
