"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``TACTILE_EXPLORE_PURE_PYTHON`` is set to a non-empty
value other than ``0``, the numpy implementations are used instead.
"""
import os

from . import _pykernels

_FORCE_PURE = os.environ.get("TACTILE_EXPLORE_PURE_PYTHON", "") not in ("", "0")

if _FORCE_PURE:
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

NAMES = (
    "im2col",
    "col2im",
    "maxpool_forward",
    "maxpool_backward",
    "points_in_polygon",
    "rasterize_polygon",
    "gae",
    "icp_batch",
)

im2col = _impl.im2col
col2im = _impl.col2im
maxpool_forward = _impl.maxpool_forward
maxpool_backward = _impl.maxpool_backward
points_in_polygon = _impl.points_in_polygon
rasterize_polygon = _impl.rasterize_polygon
gae = _impl.gae
icp_batch = _impl.icp_batch
conv_output_size = _pykernels.conv_output_size


def backends():
    """Return the available kernel modules keyed by backend name."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        out["compiled"] = _ckernels
    return out
