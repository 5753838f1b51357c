"""Meta-learned sparse kernels for GP-UCB."""

__version__ = "0.1.0"
