"""Static figure rendering from run artifact files (CSV/JSON only)."""

__version__ = "0.1.0"

from .render import FIGURE_IDS, ArtifactError, render  # noqa: F401
