"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the NumPy reference
implementation takes over.  Set ``SPIKEONET_PURE_PYTHON=1`` to force the
fallback (the benchmark and the backend-parity tests rely on this switch).
"""

import importlib
import os

from spikeonet import _kernels_py

RESET_TO_REST = _kernels_py.RESET_TO_REST
RESET_SUBTRACT = _kernels_py.RESET_SUBTRACT
REFRACTORY_NONE = _kernels_py.REFRACTORY_NONE
REFRACTORY_DOUBLE = _kernels_py.REFRACTORY_DOUBLE
REFRACTORY_RAISED = _kernels_py.REFRACTORY_RAISED

KERNEL_NAMES = ("lif_euler", "lif_integral", "stdp_pairs", "tridiag_solve")


def load_backend(name):
    """Return the kernel module for ``"cython"`` or ``"python"``."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        return importlib.import_module("spikeonet._kernels")
    raise ValueError(f"unknown kernel backend {name!r}")


def available_backends():
    names = ["python"]
    try:
        load_backend("cython")
    except ImportError:
        pass
    else:
        names.insert(0, "cython")
    return names


def _select():
    if os.environ.get("SPIKEONET_PURE_PYTHON", "").strip() not in ("", "0"):
        return "python", _kernels_py
    try:
        return "cython", load_backend("cython")
    except ImportError:
        return "python", _kernels_py


BACKEND, _impl = _select()

lif_euler = _impl.lif_euler
lif_integral = _impl.lif_integral
stdp_pairs = _impl.stdp_pairs
tridiag_solve = _impl.tridiag_solve
