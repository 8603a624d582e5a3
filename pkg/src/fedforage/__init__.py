"""fedforage: desk-scale federated learning with foraging-driven structure search."""

__version__ = "0.1.0"
