"""Offline figure rendering for msbtm run artifacts (CSV + manifest only)."""

from .artifacts import ArtifactError
from .render import KINDS, FigureRequest, render

__version__ = "0.1.0"
