"""Hot-kernel backend selection.

The compiled Cython extension is preferred when importable; the pure NumPy
module is a drop-in replacement.  Set ``CEBOOST_PURE=1`` to force the
fallback (used by the parity tests and the benchmark).
"""

import os

from . import pure

if os.environ.get("CEBOOST_PURE"):
    _impl = pure
else:
    try:
        from . import _ck as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = pure

BACKEND = _impl.BACKEND

em_l63 = _impl.em_l63
em_l96 = _impl.em_l96
em_topo = _impl.em_topo
em_spekf = _impl.em_spekf
cg_filter = _impl.cg_filter
cg_smoother = _impl.cg_smoother
cg_sample = _impl.cg_sample


def backend_name():
    return BACKEND
