"""
.. include:: ../README.md
"""

__all__ = [
    "archive",
    "bipam",
    "cli",
    "exceptions",
    "imaging",
    "losses",
    "model",
    "network",
    "occlusion",
    "selftest",
    "synthetic",
    "tensor",
]
