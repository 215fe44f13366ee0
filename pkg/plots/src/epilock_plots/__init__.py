"""Read-only figure rendering for the lockdown toolkit's CSV artifacts.

Strict layering: nothing here recomputes science; every figure is a view
of the CSV files the command-line pipeline wrote.
"""

from .render import FIGURE_KINDS, render

__version__ = "0.1.0"
