"""Python access to the phicascade core library.

Dyadic inputs are passed as strings in the ``m*2^e`` / ``2^-k`` syntax used by the CLI;
masses come back as natural logarithms.
"""

from ._core import Cascade, canonical, length_exponent, normalization_constant

__all__ = ["Cascade", "canonical", "length_exponent", "normalization_constant"]
