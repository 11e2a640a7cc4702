"""Dynamic memory construction for experience replay."""
__version__ = "0.1.0"
