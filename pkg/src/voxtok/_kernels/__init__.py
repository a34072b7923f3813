"""Kernel backend selection.

The compiled extension (``voxtok._native``) is preferred when importable;
otherwise the pure-numpy implementations take over.  Both produce
bit-identical results; the compiled kernels are just faster.  Set
``VOXTOK_NO_NATIVE=1`` to force the fallback (used by the benchmark and the
backend-parity tests).
"""

import os

from voxtok._kernels import numpy_backend

if os.environ.get("VOXTOK_NO_NATIVE", "0") == "1":
    backend = numpy_backend
    BACKEND_NAME = "numpy"
else:
    try:
        from voxtok import _native as backend

        BACKEND_NAME = "native"
    except ImportError:
        backend = numpy_backend
        BACKEND_NAME = "numpy"


def get_backend(name):
    """Return a kernel module by name ('numpy' or 'native')."""
    if name == "numpy":
        return numpy_backend
    if name == "native":
        from voxtok import _native

        return _native
    raise ValueError(f"unknown backend {name!r}")


def available_backends():
    names = ["numpy"]
    try:
        from voxtok import _native  # noqa: F401

        names.append("native")
    except ImportError:
        pass
    return names
