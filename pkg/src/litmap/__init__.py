"""litmap: phone-metadata features, boosted-tree classification, rate mapping."""

__version__ = "0.1.0"
