"""newsatlas: neighbourhood topic profiles from local news corpora.

An end-to-end pipeline: deduplicate articles by sentence overlap, geoparse
place mentions to statistical zones, cluster articles into topics with
soft memberships, aggregate memberships into per-location topic
distributions, and evaluate the clustering against annotated article
pairs and external zone statistics.
"""

__version__ = "0.1.0"

from .kernels import BACKEND as KERNEL_BACKEND  # noqa: F401
