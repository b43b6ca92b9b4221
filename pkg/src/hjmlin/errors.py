"""Exceptions and the blow-up sentinel."""

from __future__ import annotations


class HJMError(Exception):
    """Base class for all package errors."""


class DomainError(HJMError, ValueError):
    """Argument outside the domain of an operation."""


class PositivityError(HJMError):
    """A jump violates ``1 + <g(tau), eta> > 0``."""


class BlowupError(HJMError):
    """A quantity was requested past the blow-up time, or ETH was used in arithmetic."""


class _Eth:
    """Marker for values of a solution outside its existence domain.

    Distinct from every float, including nan and inf. Any arithmetic or
    comparison with it raises :class:`BlowupError`.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "ETH"

    def __reduce__(self):
        return (_Eth, ())

    def _fail(self, *args):
        raise BlowupError("arithmetic on ETH (solution does not exist at this point)")

    __add__ = __radd__ = __sub__ = __rsub__ = _fail
    __mul__ = __rmul__ = __truediv__ = __rtruediv__ = _fail
    __pow__ = __rpow__ = __neg__ = __pos__ = __abs__ = _fail
    __float__ = __int__ = _fail
    __lt__ = __le__ = __gt__ = __ge__ = _fail
    __array__ = _fail

    def __bool__(self) -> bool:
        raise BlowupError("truth value of ETH is undefined")


ETH = _Eth()


def is_eth(value) -> bool:
    return value is ETH
