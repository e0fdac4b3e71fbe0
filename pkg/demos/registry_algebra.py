"""Namespace algebra: merge, spinoff, and reduce_namespace.

Registries compose like sets keyed by tool name: merge folds one registry
into another with a collision policy, spinoff extracts a namespace into a new
registry, and reduce_namespace strips a prefix in place.
"""

from toolbus import ToolRegistry
from toolbus.hub import calculator_tools

# two teams ship their own toolsets
math_team = ToolRegistry(name="math")
math_team.register_toolset(calculator_tools(), with_namespace="calc")

def shout(s: str) -> str:
    """Upper-case a string."""
    return s.upper()


def reverse(s: str) -> str:
    """Reverse a string."""
    return s[::-1]


text_team = ToolRegistry(name="text")
text_team.register(shout, namespace="text")
text_team.register(reverse, namespace="text")

print("math team:", math_team.names())
print("text team:", text_team.names())

# one application registry serves both
app = ToolRegistry(name="app")
app.merge(math_team)
app.merge(text_team)
print(f"\nmerged into {len(app)} tools")

# later, the calculator moves to its own service: spin it off
calc = app.spinoff("calc")
print("spun off:", calc.names())
print("app keeps:", app.names())

# inside the calculator service the prefix is redundant: strip it
calc.reduce_namespace("calc")
print("reduced:", calc.names())

assert len(calc) == 8 and "add" in calc
print("\nconservation held: nothing lost, nothing duplicated")
