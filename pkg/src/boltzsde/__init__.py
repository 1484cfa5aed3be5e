"""Forward and adjoint Monte Carlo transport in slab phase space with trajectory reuse."""

__version__ = "0.1.0"
