"""Backend selection for the hot kernels.

The compiled extension is preferred; set ``PRIVDISTILL_KERNELS=python`` to
force the numpy fallback (the benchmark and cross-backend tests do this).
"""
import os

from . import _kernels_fallback as fallback

try:
    from . import _kernels as compiled
except ImportError:  # extension not built
    compiled = None

if compiled is not None and os.environ.get("PRIVDISTILL_KERNELS", "").lower() != "python":
    _impl = compiled
    BACKEND = "cython"
else:
    _impl = fallback
    BACKEND = "python"

ce_loss_grad = _impl.ce_loss_grad
distill_loss_grad = _impl.distill_loss_grad
ranking_summary = _impl.ranking_summary


def backends():
    """Mapping of available backend name -> kernel module."""
    out = {"python": fallback}
    if compiled is not None:
        out["cython"] = compiled
    return out
