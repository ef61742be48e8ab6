"""fglab: exact-arithmetic laboratory for formal group laws and their towers."""

__version__ = "0.1.0"
