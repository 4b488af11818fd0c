"""Transport maps between log-concave measures built from a heat-diffusion flow."""

__version__ = "0.1.0"
