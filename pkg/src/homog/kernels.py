"""Backend selection for the assembly kernel.

The compiled extension is used when it imports; setting ``HOMOG_PURE_PYTHON=1``
forces the numpy fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
galerkin_matrix = _kernels_py.galerkin_matrix

if os.environ.get("HOMOG_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        galerkin_matrix = _compiled.galerkin_matrix
        BACKEND = "cython"

python_galerkin_matrix = _kernels_py.galerkin_matrix
