"""Backend selection for the hot density kernels.

Prefers the compiled Cython extension and falls back to the numpy
implementation when it is unavailable.  Set PASSIVEWIFI_KERNELS=python
(or =c) to force a backend; forcing "c" raises if the extension did not
build.  ``benchmarks/bench_kernels.py`` compares the two.
"""

import os

from . import _pykernels

GAUSSIAN = _pykernels.GAUSSIAN
EPANECHNIKOV = _pykernels.EPANECHNIKOV
TOPHAT = _pykernels.TOPHAT

_forced = os.environ.get("PASSIVEWIFI_KERNELS", "").strip().lower()

if _forced in ("python", "py", "numpy"):
    _impl = _pykernels
    BACKEND = "python"
elif _forced in ("", "c", "compiled"):
    try:
        from . import _ckernels as _impl
        BACKEND = "c"
    except ImportError:
        if _forced:
            raise
        _impl = _pykernels
        BACKEND = "python"
else:
    raise RuntimeError(f"PASSIVEWIFI_KERNELS={_forced!r}: expected 'c' or 'python'")

kde_eval = _impl.kde_eval
kde_eval_blocks = _impl.kde_eval_blocks
kde_log_accumulate = _impl.kde_log_accumulate


def available_backends():
    """Map backend name -> module, for parity tests and benchmarks."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels
        found["c"] = _ckernels
    except ImportError:
        pass
    return found
