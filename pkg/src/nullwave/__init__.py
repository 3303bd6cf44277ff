"""nullwave: numerical laboratory for plane-wave stability in null-form systems."""

__version__ = "0.1.0"

from . import algebra, diagnostics, fdtd, geoptics, modes, profiles, renormalize  # noqa: F401
