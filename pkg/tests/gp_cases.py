"""Small geometric programs with known optima, shared by the unit and acceptance tests."""

import math

from bilayer_epi.gp import GeometricProgram, Variable

x, y, z = Variable("x"), Variable("y"), Variable("z")


def corpus():
    """(label, program, optimal objective) triples."""
    return [
        ("active bound", GeometricProgram(x, [2 / x]), 2.0),
        ("product floor", GeometricProgram(x * y, [1 / (x * y)]), 1.0),
        ("sum with product floor", GeometricProgram(x + y, [8 / (x * y)]), 4 * math.sqrt(2)),
        ("unconstrained x + 1/x", GeometricProgram(x + 1 / x), 2.0),
        ("upper bounds", GeometricProgram(1 / (x * y), upper_bounds={"x": 4.0, "y": 3.0}), 1 / 12),
        ("box volume", GeometricProgram(1 / (x * y * z), [(2 * x * y + 2 * y * z + 2 * x * z) / 6]), 1.0),
        ("weighted AM-GM", GeometricProgram(x + 2 * y + 3 * z, [1 / (x * y * z)]), 3 * 6 ** (1 / 3)),
        ("monomial equality", GeometricProgram(x + y, [1 / (x * y)], [x / (2 * y)]), 3 / math.sqrt(2)),
        ("square against reciprocal", GeometricProgram(x ** 2 + 1 / y, [y / x]), 3 * 2 ** (-2 / 3)),
        ("reciprocal sum", GeometricProgram(1 / x + 1 / y, [x / 2 + y / 2]), 2.0),
    ]


def infeasible():
    return GeometricProgram(x, [2 / x, x])
