"""Decentralized multitask online learning on communication graphs."""

__version__ = "0.1.0"
