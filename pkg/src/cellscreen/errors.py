"""Exception hierarchy shared across the package."""


class CellscreenError(Exception):
    """Base class for all package-specific errors."""


class EmptyMask(CellscreenError):
    """An operation required a nonempty mask."""


class DimensionMismatch(CellscreenError):
    """Raster dimensions disagree where they must match."""


class DegenerateBox(CellscreenError):
    """A bounding box with a zero-length side."""


class NoNucleusChannel(CellscreenError):
    """The image has no channel with the ``nucleus`` role."""


class NoSubcellularChannel(CellscreenError):
    """The image has no channel with the ``subcellular_marker`` role."""


class BackendUnavailable(CellscreenError):
    """The segmentation backend could not be used (e.g. graph not loaded)."""


class InvalidPrompt(CellscreenError):
    """A prompt violates its invariants (e.g. out-of-bounds point)."""


class FormatError(CellscreenError):
    """A file did not match the expected container format."""


class UnsupportedOpset(CellscreenError):
    """The graph file declares an opset this build cannot execute."""


class CellLost(CellscreenError):
    """Every prompting iteration produced an empty mask for a cell."""


class DegenerateControls(CellscreenError):
    """Control groups unusable for Z'-factor (too small or zero denominator)."""


class NotEnoughPoints(CellscreenError):
    """Too few distinct concentrations for a dose-response fit."""


class ZeroVariance(CellscreenError):
    """A correlation was requested over a constant signal."""


class LayoutMismatch(CellscreenError):
    """An image could not be joined to a well in the plate layout."""


class EmptyDataset(CellscreenError):
    """An evaluation was requested over zero image pairs."""


class ConfigError(CellscreenError):
    """Run configuration failed validation."""
