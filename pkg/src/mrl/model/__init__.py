from .brackets import BracketTable, HormanderReport, hormander_rank, lie_bracket
from .diffusion import (
    DiffusionSpec,
    check_assumption3,
    check_ellipticity,
    drift_from_a,
    from_catalog,
    matrix_sqrt,
    sqrt_differential,
)
from .fields import VectorFieldSet, fields_from_catalog

__all__ = [
    "BracketTable",
    "DiffusionSpec",
    "HormanderReport",
    "VectorFieldSet",
    "check_assumption3",
    "check_ellipticity",
    "drift_from_a",
    "fields_from_catalog",
    "from_catalog",
    "hormander_rank",
    "lie_bracket",
    "matrix_sqrt",
    "sqrt_differential",
]
