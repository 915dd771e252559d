"""Second-order characteristics of random marked closed sets."""

__version__ = "0.1.0"
