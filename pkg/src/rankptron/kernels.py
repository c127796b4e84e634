"""Kernel backend selection.

The compiled extension is used when importable; set
``RANKPTRON_BACKEND=python`` to force the numpy fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("RANKPTRON_BACKEND", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

slam_terms = _impl.slam_terms
slam_loss_direction = _impl.slam_loss_direction
pairwise_witness = _impl.pairwise_witness
dcg_ranked = _impl.dcg_ranked
ap_ranked = _impl.ap_ranked

__all__ = [
    "BACKEND",
    "slam_terms",
    "slam_loss_direction",
    "pairwise_witness",
    "dcg_ranked",
    "ap_ranked",
]
