"""Kernel backend selection.

The compiled extension (``_core``) is preferred when it imported cleanly;
otherwise the pure-NumPy fallback (``_fallback``) is used. Both compute
bit-identical results. Set ``ASPECTREC_NO_EXTENSION=1`` to force the
fallback, e.g. to benchmark or to rule out the extension when debugging.
"""

import os

from . import _fallback

try:
    from . import _core
except ImportError:
    _core = None

if _core is not None and not os.environ.get("ASPECTREC_NO_EXTENSION"):
    _active = _core
else:
    _active = _fallback


def active_backend():
    """Name of the backend in use: 'compiled' or 'numpy'."""
    return "compiled" if _active is _core else "numpy"


def available_backends():
    """Mapping of backend name to implementation module."""
    out = {"numpy": _fallback}
    if _core is not None:
        out["compiled"] = _core
    return out


def conv2d_same(image, kernel):
    return _active.conv2d_same(image, kernel)


def tplbp_codes(image, dy, dx, w, alpha, tau, r0, r1, c0, c1):
    return _active.tplbp_codes(image, dy, dx, w, alpha, tau, r0, r1, c0, c1)
