"""Select the sweep backend at import time.

The compiled ``_sweep`` extension is used when it was built; otherwise the
pure-Python mirror runs. Setting ``MSTAR_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _sweep_py

try:
    from . import _sweep as _sweep_c
except ImportError:  # extension not built
    _sweep_c = None

BACKENDS = {"python": _sweep_py.run_block}
if _sweep_c is not None:
    BACKENDS["cython"] = _sweep_c.run_block

if os.environ.get("MSTAR_PURE_PYTHON", "") not in ("", "0") or _sweep_c is None:
    BACKEND = "python"
else:
    BACKEND = "cython"

run_block = BACKENDS[BACKEND]


def get_run_block(name=None):
    """Return the block-sweep function for ``name`` (default: the selected backend)."""
    if name is None:
        return run_block
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None
