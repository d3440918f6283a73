"""Render publication-style figures from flashsim experiment CSV outputs.

Pure plotting: every statistic (means, confidence intervals, medians) is
read from the simulator's summary files, never recomputed here.
"""

__version__ = "0.1.0"

from .recipes import RECIPES, render  # noqa: F401
