"""Gather/scatter kernels for spiral convolutions.

Two interchangeable backends: a compiled Cython extension and a pure numpy
fallback. Both produce bitwise-identical results (same accumulation order),
so which one is active never changes any output. Selection happens at
import: the compiled module is preferred when present, and the environment
variable ``MESHANIM_KERNELS`` forces ``python`` or ``c``.

API (float64 only):

``gather(values, table, sentinel)``
    values (B, R, C), table (N, L) -> (B, N, L*C); sentinel rows read as 0.
``scatter_add(grad, table, sentinel, rows)``
    grad (B, N, L*C) -> (B, rows, C); transpose of gather.
"""

import os

from . import _fallback

_forced = os.environ.get("MESHANIM_KERNELS", "").strip().lower()

if _forced == "python":
    _impl = _fallback
    BACKEND = "python"
elif _forced == "c":
    from . import _spiralcore as _impl  # noqa: F401  (raises if not built)

    BACKEND = "c"
else:
    try:
        from . import _spiralcore as _impl  # type: ignore[no-redef]

        BACKEND = "c"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

gather = _impl.gather
scatter_add = _impl.scatter_add

__all__ = ["gather", "scatter_add", "BACKEND"]
