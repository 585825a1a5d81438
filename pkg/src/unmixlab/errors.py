"""Error types shared across the package.

Plain precondition violations raise ValueError; the classes here mark failure
modes a caller may want to catch selectively (bad file, degenerate data, a
solver going numerically sideways, inputs outside a physical model's domain).
"""

from __future__ import annotations


class UnmixError(Exception):
    """Base class for package-specific errors."""


class DimensionError(UnmixError, ValueError):
    """Shapes or grids that cannot be made to agree."""


class FormatError(UnmixError):
    """Malformed or unsupported file content."""


class GenerationError(UnmixError):
    """Scene or endmember synthesis could not satisfy its constraints."""


class ExtractionError(UnmixError):
    """Endmember extraction failed (degenerate or rank-deficient data)."""


class NumericalError(UnmixError):
    """A numerical procedure diverged or hit an indefinite system."""


class OutOfModelError(UnmixError, ValueError):
    """Input lies outside the physical model's domain of validity."""
