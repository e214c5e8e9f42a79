"""Dense rasters and the reverse-mode differentiation core."""

from . import autodiff as ad
from .autodiff import (
    GraphError,
    Node,
    ShapeError,
    as_node,
    backward,
    branch_signature,
    constant,
    parameter,
    record,
    register_op,
    unwrap,
)
from .gradcheck import GradCheckError, GradCheckReport, finite_diff_check, gradient_check
from .grids import GridError, check_image, check_same_hw, check_scalar_grid, pixel_grid

__all__ = [
    "ad",
    "GraphError",
    "GradCheckError",
    "GradCheckReport",
    "GridError",
    "Node",
    "ShapeError",
    "as_node",
    "backward",
    "branch_signature",
    "check_image",
    "check_same_hw",
    "check_scalar_grid",
    "constant",
    "finite_diff_check",
    "gradient_check",
    "parameter",
    "pixel_grid",
    "record",
    "register_op",
    "unwrap",
]
