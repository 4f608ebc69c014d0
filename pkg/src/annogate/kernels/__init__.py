"""Training kernels with a compiled fast path.

The compiled extension is optional: when it failed to build or is missing,
the numpy implementation is selected at import time. Set
``ANNOGATE_KERNELS=numpy`` (or ``cython``) to force a backend; forcing an
unavailable backend raises at first use.
"""

from __future__ import annotations

import os

from . import _ce_numpy

_BACKENDS = {"numpy": _ce_numpy}

try:  # pragma: no cover - availability depends on the build
    from . import _ce_cython

    _BACKENDS["cython"] = _ce_cython
except ImportError:  # pragma: no cover
    _ce_cython = None


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def get_backend(name: str | None = None):
    """Resolve a kernel backend module by name.

    ``None`` picks the environment override if set, else the compiled
    backend when available, else numpy.
    """
    if name is None:
        name = os.environ.get("ANNOGATE_KERNELS")
    if name is None:
        name = "cython" if "cython" in _BACKENDS else "numpy"
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(
            f"kernel backend {name!r} not available; " f"built: {available_backends()}"
        ) from None


def backend_name() -> str:
    return get_backend().NAME
