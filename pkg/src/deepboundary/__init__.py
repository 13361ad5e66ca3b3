"""Boundary detection from deep feature stacks.

The pipeline: candidate contour points -> per-candidate descriptors
interpolated from a convolutional feature stack -> a small regression head
predicting human-agreement fractions -> a dense boundary probability map.
On top of the maps: normalized-cut eigenvector features, semantic boundary
labeling, and a benchmark harness (ODS/OIS/AP, per-class MF/AP, IOU,
proposal recall).

Hot kernels run in a compiled extension when available; `kernels.backend_name()`
reports which backend is active.
"""

from . import (boundary_map, candidates, evaluation, features, kernels,
               regressor, semlabel, spectral, stencils, tensor_io)

__version__ = "0.1.0"

__all__ = [
    "boundary_map", "candidates", "evaluation", "features", "kernels",
    "regressor", "semlabel", "spectral", "stencils", "tensor_io",
    "__version__",
]
