"""bemnet - BEM-structured Green's-function network for interior Helmholtz fields."""

__version__ = "1.0.0"
