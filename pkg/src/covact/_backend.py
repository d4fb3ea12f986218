"""Select the coordinate-pass implementation.

The compiled kernel is used when it imports, unless ``COVACT_BACKEND=python``
is set. Solvers may also request a backend explicitly by name.
"""

import os

from . import _pypass

try:
    from . import _ckernels
except ImportError:  # not built
    _ckernels = None

_BACKENDS = {"python": _pypass}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels


def available():
    return sorted(_BACKENDS)


def default_name():
    forced = os.environ.get("COVACT_BACKEND", "").strip().lower()
    if forced:
        return forced
    return "cython" if "cython" in _BACKENDS else "python"


def get(name="auto"):
    """Module exposing ``coordinate_pass`` for backend ``name`` ("auto", "cython", "python")."""
    if name in (None, "auto"):
        name = default_name()
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {available()}") from None
