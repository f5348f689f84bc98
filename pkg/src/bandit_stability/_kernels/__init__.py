"""Episode kernels: compiled when available, pure Python otherwise.

Set ``BANDIT_STABILITY_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pyepisode

python_simulate = _pyepisode.simulate
trace = _pyepisode.trace

compiled_simulate = None
if not os.environ.get("BANDIT_STABILITY_PURE_PYTHON"):
    try:
        from ._episode import simulate as compiled_simulate
    except ImportError:
        compiled_simulate = None

if compiled_simulate is not None:
    simulate = compiled_simulate
    BACKEND = "cython"
else:
    simulate = python_simulate
    BACKEND = "python"

__all__ = ["simulate", "python_simulate", "compiled_simulate", "trace", "BACKEND"]
