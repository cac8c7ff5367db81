"""Hot retrieval kernels, compiled when available.

The Cython extension is used when it imports; otherwise the numpy
fallback is selected. Set ``RAGINTENT_PURE_PYTHON=1`` to force the
fallback. Both expose the same functions with identical results.
"""

from __future__ import annotations

import os

from . import _fallback

BACKEND = "python"
_impl = _fallback

if os.environ.get("RAGINTENT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback

dense_scores = _impl.dense_scores
topk = _impl.topk
bm25_scores = _impl.bm25_scores
maxsim_scores = _impl.maxsim_scores


def backends() -> dict:
    """All importable backends by name, for equivalence tests and benchmarks."""
    out = {"python": _fallback}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
