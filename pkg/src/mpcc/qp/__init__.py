"""Linear-quadratic optimal control QP backends.

Problems are stated stage-wise (:class:`StructuredQp`) and can be solved
three ways: a Riccati-factorized interior-point method whose cost grows
linearly with the horizon, a condensed dense method with cubic growth,
and a slow high-accuracy reference for cross-checking.
"""

from .data import (BoundDuals, QpSolution, StageLtv, StructuredQp,
                   TerminalBlock, dump_qp, kkt_report, load_qp)
from .dense import DenseQp, condense, solve_condensed, solve_dense
from .oracle import MAX_REFERENCE_VARIABLES, solve_reference
from .structured import IpmSettings, solve_structured

__all__ = [
    "BoundDuals",
    "DenseQp",
    "IpmSettings",
    "MAX_REFERENCE_VARIABLES",
    "QpSolution",
    "StageLtv",
    "StructuredQp",
    "TerminalBlock",
    "condense",
    "dump_qp",
    "kkt_report",
    "load_qp",
    "solve_condensed",
    "solve_dense",
    "solve_reference",
    "solve_structured",
]
