"""Backend selection for the hot loops.

The numba kernels are used by default.  Set ``PERCOLAB_DISABLE_NUMBA=1`` (or
run without numba installed) to use the vectorized numpy kernels instead.
Both backends produce identical results.
"""

import importlib
import os

_TRUE = ("1", "true", "yes", "on")


def load(name):
    """Return the kernel module for ``"numba"`` or ``"numpy"``."""
    if name == "numba":
        return importlib.import_module("._nb", __name__)
    if name == "numpy":
        return importlib.import_module("._np", __name__)
    raise ValueError(f"unknown backend {name!r}")


def _select():
    if os.environ.get("PERCOLAB_DISABLE_NUMBA", "").strip().lower() in _TRUE:
        return load("numpy")
    try:
        return load("numba")
    except ImportError:
        return load("numpy")


_active = _select()


def active():
    return _active


def use(name):
    """Switch the process-wide backend; returns the previous backend name."""
    global _active
    prev = _active.NAME
    _active = load(name)
    return prev


def backend_name():
    return _active.NAME
