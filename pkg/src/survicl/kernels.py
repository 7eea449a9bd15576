"""Backend selection for the hot loops.

The compiled extension is used when it was built; otherwise (or when
``SURVICL_PURE_PYTHON=1``) the numpy fallback is imported. Both expose
``concordance_td`` and ``breslow_derivatives`` with identical semantics.
"""

import os

from . import _kernels_py as python_backend

compiled_backend = None
if os.environ.get("SURVICL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "compiled" if compiled_backend is not None else "python"

concordance_td = backend.concordance_td
breslow_derivatives = backend.breslow_derivatives
