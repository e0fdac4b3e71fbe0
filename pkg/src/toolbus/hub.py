"""Built-in toolsets with fast local implementations.

Everything here is a pure function of JSON-representable numbers, safe to run
from any executor mode and transferable to isolated workers.
"""

from __future__ import annotations

import math

from .core import Tool, tool_from_function

__all__ = ["BaseCalculator", "calculator_tools"]


class BaseCalculator:
    """Arithmetic toolset over 64-bit floats.

    Division and modulo reject zero divisors, square root rejects negative
    inputs; non-finite results (overflow) surface as execution errors because
    JSON cannot carry them.
    """

    @staticmethod
    def add(a: float, b: float) -> float:
        """Add two numbers."""
        return a + b

    @staticmethod
    def subtract(a: float, b: float) -> float:
        """Subtract b from a."""
        return a - b

    @staticmethod
    def multiply(a: float, b: float) -> float:
        """Multiply two numbers."""
        return a * b

    @staticmethod
    def divide(a: float, b: float) -> float:
        """Divide a by b; b must be non-zero."""
        if b == 0:
            raise ZeroDivisionError("division by zero")
        return a / b

    @staticmethod
    def pow(a: float, b: float) -> float:
        """Raise a to the power b."""
        return math.pow(a, b)

    @staticmethod
    def sqrt(a: float) -> float:
        """Square root of a non-negative number."""
        if a < 0:
            raise ValueError("square root of a negative number")
        return math.sqrt(a)

    @staticmethod
    def mod(a: float, b: float) -> float:
        """Remainder of a divided by b; b must be non-zero."""
        if b == 0:
            raise ZeroDivisionError("modulo by zero")
        return math.fmod(a, b)

    @staticmethod
    def average(values: list[float]) -> float:
        """Arithmetic mean of a list of numbers."""
        if not values:
            raise ValueError("average of an empty list")
        return sum(values) / len(values)


def calculator_tools() -> list[Tool]:
    """The eight calculator tools, in declaration order."""
    names = ("add", "subtract", "multiply", "divide", "pow", "sqrt", "mod", "average")
    return [tool_from_function(getattr(BaseCalculator, name)) for name in names]
