"""Backend selection for the hot loops.

The compiled extension ``_ckernels`` is used when it imports; otherwise the
numpy fallback in ``_pykernels`` is used.  Set ``WUPGRAPH_PURE_PYTHON=1`` to
force the fallback.
"""
import os

from . import _pykernels as python_backend

BACKEND = "python"
_impl = python_backend

if os.environ.get("WUPGRAPH_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = python_backend

energy = _impl.energy
energy_gradient = _impl.energy_gradient
variance_rowsums = _impl.variance_rowsums
objective_parts = _impl.objective_parts


def compiled_backend():
    """Return the compiled module, or None when it is unavailable."""
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels
