"""KP Spectral - pseudospectral ETDRK4 solver for generalized KP equations."""
__version__ = "0.1.0"
