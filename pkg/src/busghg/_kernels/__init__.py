"""Hot-loop kernels with a compiled core and a pure-Python fallback.

The compiled Cython extension is preferred when importable; setting
``BUSGHG_PURE_KERNELS=1`` forces the NumPy/heapq fallback. ``BACKEND``
reports which implementation is active.
"""

import os

from busghg._kernels import _pure

if os.environ.get("BUSGHG_PURE_KERNELS", "") not in ("", "0"):
    _impl = _pure
else:
    try:
        from busghg._kernels import _ckernels as _impl
    except ImportError:
        _impl = _pure

BACKEND = _impl.BACKEND
haversine_m = _impl.haversine_m
pair_partition = _impl.pair_partition
dijkstra_many = _impl.dijkstra_many
speed_exceeds = _pure.speed_exceeds

__all__ = ["BACKEND", "haversine_m", "pair_partition", "dijkstra_many", "speed_exceeds"]
