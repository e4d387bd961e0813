"""Low-frequency scattering by small bodies of arbitrary shape."""

__version__ = "0.1.0"
