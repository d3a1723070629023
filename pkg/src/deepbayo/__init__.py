"""Branch/trunk operator networks trained with a variational
physics-informed loss, solving PDEs while estimating posterior
distributions over their unknown parameters."""

__version__ = "0.1.0"
