"""Aleph: an abstract machine for a generate-and-test language with effects."""

__version__ = "0.1.0"
