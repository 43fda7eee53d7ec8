"""render-sandbox: isolated host for generated chart render programs."""

__version__ = "0.1.0"
