"""Numeric kernels for the pipeline's hot loops.

Three operations dominate runtime: the pairwise Hellinger distance matrix,
the negative-sampling SGD that lays out the embedding, and Prim's MST over
the mutual-reachability matrix.  Each exists twice with one call signature:

* ``_ckernels`` -- a Cython extension with sequential scalar loops,
* ``_pykernels`` -- a NumPy/SciPy implementation used when the extension
  is unavailable.

The compiled backend is preferred when it imported cleanly.  Set
``NEWSATLAS_KERNELS=python`` (or ``c``) to force a backend; forcing ``c``
without the extension raises at import.  Results are deterministic for a
fixed seed within either backend; the two backends agree to float precision
on the distance and MST kernels but produce different (equally valid) SGD
trajectories because the fallback applies each epoch's updates in batch.
"""

import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["c"] = _ckernels

_choice = os.environ.get("NEWSATLAS_KERNELS", "auto").lower()
if _choice == "auto":
    _choice = "c" if _ckernels is not None else "python"
if _choice not in _BACKENDS:
    raise ImportError(
        f"NEWSATLAS_KERNELS={_choice!r} requested but that backend is not "
        f"available (have: {sorted(_BACKENDS)})"
    )

BACKEND = _choice
_active = _BACKENDS[BACKEND]

pairwise_hellinger = _active.pairwise_hellinger
prim_mst = _active.prim_mst
optimize_embedding = _active.optimize_embedding


def available_backends():
    """Names of the kernel backends importable in this environment."""
    return sorted(_BACKENDS)


def get_backend(name):
    """Return the kernel module for ``name`` ("c" or "python")."""
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown kernel backend {name!r}") from None
