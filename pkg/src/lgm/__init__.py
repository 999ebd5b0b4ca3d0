"""Latent Gaussian models for individual-level binary and survival outcomes
with regional (iid, Leroux or intrinsic CAR) random effects, fitted by nested
Laplace approximation."""

__version__ = "0.1.0"

from .domain import (  # noqa: E402
    Dataset,
    FitResult,
    GridSettings,
    HyperPoint,
    LatentField,
    Marginal,
    ModelSpec,
    PriorSet,
    ScorePair,
    validate_dataset,
)
from .graph import RegionGraph, icar_structure, leroux_structure, parse_adjacency  # noqa: E402
from .laplace import fit  # noqa: E402
from .criteria import compute_dic, compute_waic  # noqa: E402

__all__ = [
    "Dataset",
    "FitResult",
    "GridSettings",
    "HyperPoint",
    "LatentField",
    "Marginal",
    "ModelSpec",
    "PriorSet",
    "RegionGraph",
    "ScorePair",
    "compute_dic",
    "compute_waic",
    "fit",
    "icar_structure",
    "leroux_structure",
    "parse_adjacency",
    "validate_dataset",
]
