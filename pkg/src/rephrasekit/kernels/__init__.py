"""Kernel backend selection.

Tries the compiled Cython extension first and falls back to the numpy
implementation. ``REPHRASEKIT_KERNELS=py`` forces the fallback,
``REPHRASEKIT_KERNELS=c`` requires the extension (import error if it is
missing). The active backend is visible via ``backend_name()``.
"""

import os

from rephrasekit.kernels import numpy_backend

_FORCED = os.environ.get("REPHRASEKIT_KERNELS", "").lower()

if _FORCED in ("py", "numpy", "python"):
    _backend = numpy_backend
elif _FORCED in ("c", "compiled", "cython"):
    from rephrasekit.kernels import _ckernels as _backend
else:
    try:
        from rephrasekit.kernels import _ckernels as _backend
    except ImportError:
        _backend = numpy_backend

lstm_gates_forward = _backend.lstm_gates_forward
lstm_gates_backward = _backend.lstm_gates_backward
lcs_kept = _backend.lcs_kept


def backend_name() -> str:
    return "compiled" if _backend.__name__.endswith("_ckernels") else "numpy"


def get_backend(name: str):
    """Fetch a backend module by name ("compiled" or "numpy"); for benchmarks."""
    if name == "numpy":
        return numpy_backend
    if name == "compiled":
        from rephrasekit.kernels import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")
