"""Kernel backend selection.

The compiled Cython extension is preferred when importable; the pure-numpy
fallback is used otherwise. ``CELLLOC_KERNELS=py`` forces the fallback,
``CELLLOC_KERNELS=c`` insists on the extension (import error if missing).
"""

import os

from . import _py

_choice = os.environ.get("CELLLOC_KERNELS", "").strip().lower()

if _choice in ("py", "python"):
    _impl = _py
    BACKEND = "python"
elif _choice in ("c", "compiled"):
    from . import _core as _impl

    BACKEND = "compiled"
else:
    try:
        from . import _core as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = _py
        BACKEND = "python"

moment_matrix = _impl.moment_matrix
knn_predict = _impl.knn_predict
median_filter = _impl.median_filter
hmm_forward_filter = _impl.hmm_forward_filter
viterbi_path = _impl.viterbi_path
