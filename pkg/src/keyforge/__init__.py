"""keyforge: timing-forgery and copy-type attacks against keystroke-based
AI authorship detectors, with the statistical machinery to evaluate them."""

__version__ = "0.1.0"
