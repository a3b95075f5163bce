"""Self-configuring surrogate-model pipeline for desk-scale subsurface flow."""

__version__ = "0.1.0"
