"""Hot inner loops: block matvecs with H, blockwise projections, PIPG steps.

Two interchangeable backends provide the same functions. The numba backend
is used unless the environment variable ``NPIPG_DISABLE_NUMBA`` is set to a
non-empty value other than ``0``, or numba cannot be imported.
"""

import os

_flag = os.environ.get("NPIPG_DISABLE_NUMBA", "")
_want_numba = _flag in ("", "0")

if _want_numba:
    try:
        from . import _numba as backend
    except ImportError:  # pragma: no cover
        from . import _numpy as backend
else:
    from . import _numpy as backend

BACKEND = "numba" if backend.__name__.endswith("_numba") else "numpy"

h_matvec = backend.h_matvec
ht_matvec = backend.ht_matvec
project_sets = backend.project_sets
project_polar = backend.project_polar
pipg_step = backend.pipg_step
pattern_codes = backend.pattern_codes
pipg_run = backend.pipg_run
jacobi_rotate = backend.jacobi_rotate

__all__ = [
    "BACKEND", "h_matvec", "ht_matvec", "project_sets", "project_polar",
    "pipg_step", "pattern_codes", "pipg_run", "jacobi_rotate",
]
