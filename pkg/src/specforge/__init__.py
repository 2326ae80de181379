"""specforge: generate, check, repair and minimize Dafny annotations."""

__version__ = "0.1.0"
