"""Population load plasticity models, planning and dispatch for flexible appliances."""

__version__ = "0.1.0"
