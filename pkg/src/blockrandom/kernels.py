"""Optimizer update kernels, compiled when available.

The Cython extension ``_kernels`` is used if it imported cleanly; otherwise,
or when ``BLOCKRANDOM_PURE_PYTHON=1`` is set, the numpy versions in
``_kernels_py`` are used. ``BACKEND`` names the active choice.
"""
import os

if os.environ.get("BLOCKRANDOM_PURE_PYTHON") == "1":
    from . import _kernels_py as _impl
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        from . import _kernels_py as _impl
        BACKEND = "python"

adam_update = _impl.adam_update
sgd_update = _impl.sgd_update
