"""Wong-Zakai simulation of reflected SDEs in admissible planar domains."""

__version__ = "0.1.0"
