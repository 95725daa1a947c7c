"""Kernel backend selection.

Two interchangeable backends implement the hot kernels: a compiled extension
(`robod._kernels`, Cython + BLAS) and a pure-numpy fallback
(`robod._kernels_py`). The compiled one is preferred when present; the
environment variable ROBOD_BACKEND overrides:

    ROBOD_BACKEND=c      require the compiled backend (error if missing)
    ROBOD_BACKEND=py     force the pure-Python backend
    ROBOD_BACKEND=auto   compiled if available, else pure Python (default)

Within one backend every operation is bitwise deterministic; across backends
results agree to ~1e-13 relative (BLAS summation order differs).
"""

from __future__ import annotations

import os

from . import _kernels_py
from .errors import ConfigError


def _select():
    mode = os.environ.get("ROBOD_BACKEND", "auto").strip().lower()
    if mode not in ("auto", "c", "py"):
        raise ConfigError(
            f"ROBOD_BACKEND must be one of auto/c/py, got {mode!r}"
        )
    if mode == "py":
        return _kernels_py
    try:
        from . import _kernels  # compiled extension, may be absent
        return _kernels
    except ImportError:
        if mode == "c":
            raise ConfigError(
                "ROBOD_BACKEND=c but the compiled extension is not built; "
                "reinstall with a C compiler available or use ROBOD_BACKEND=py"
            ) from None
        return _kernels_py


kernels = _select()

ACT_IDENTITY = _kernels_py.ACT_IDENTITY
ACT_LEAKY_RELU = _kernels_py.ACT_LEAKY_RELU
ACT_SIGMOID = _kernels_py.ACT_SIGMOID
ACT_RELU = _kernels_py.ACT_RELU

be_forward = kernels.be_forward
be_backward = kernels.be_backward
adam_update = kernels.adam_update
rowwise_sqerr = kernels.rowwise_sqerr
dropout_mask_apply = kernels.dropout_mask_apply
act_apply = kernels.act_apply
act_grad_from_output = kernels.act_grad_from_output


def backend_name() -> str:
    """'c' when the compiled kernels are active, else 'py'."""
    return kernels.NAME


def available_backends():
    """Names of the backends importable in this installation."""
    names = []
    try:
        from . import _kernels  # noqa: F401
        names.append("c")
    except ImportError:
        pass
    names.append("py")
    return names
