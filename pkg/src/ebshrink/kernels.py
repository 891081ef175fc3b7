"""Backend selection for the mixture log-likelihood kernels.

Prefers the compiled extension, falls back to numpy.  Set
``EBSHRINK_PURE_PYTHON=1`` to force the fallback (useful for benchmarking
and for debugging suspected kernel issues).  Both backends implement the
same contract; results agree to floating-point roundoff, not bitwise,
because summation orders differ.
"""

import os

from . import _kernels_py

if os.environ.get("EBSHRINK_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels_c as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

component_loglik = _impl.component_loglik
weighted_mixture_loglik = _impl.weighted_mixture_loglik
