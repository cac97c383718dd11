"""Mean-residual probabilistic spatiotemporal forecasting."""

__version__ = "0.1.0"
