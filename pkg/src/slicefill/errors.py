"""Exception types shared across the package.

Every error a caller is expected to branch on gets its own class; the
gateway maps these onto HTTP status codes (4xx for input problems, 5xx
for engine failures).
"""


class SliceFillError(Exception):
    """Base class for all package-specific errors."""


# --- NRRD parsing / volume operations ---

class MagicMismatch(SliceFillError):
    """Input does not start with an NRRD magic line."""


class MalformedHeader(SliceFillError):
    """Header is syntactically broken or missing required fields."""


class UnsupportedField(SliceFillError):
    """Header is valid NRRD but uses a feature outside this parser's scope."""


class TruncatedData(SliceFillError):
    """Payload holds fewer voxels than the header promises."""


class IndexOutOfRange(SliceFillError):
    """Slice index outside the volume's z extent."""


class PatchOutOfBounds(SliceFillError):
    """Patch footprint does not fit inside the slice."""


class SizeMismatch(SliceFillError):
    """Image dimensions differ from what the operation requires."""


# --- raster operations ---

class NonPositiveWindow(SliceFillError):
    """Window width must be > 0."""


class UpscaleRequested(SliceFillError):
    """Downsampling operation asked to enlarge."""


class NonGrayInput(SliceFillError):
    """Buffer expected to be gray-valued has diverging channels."""


class MalformedPng(SliceFillError):
    """Byte stream is not a decodable PNG."""


# --- edge detection ---

class BadThresholds(SliceFillError):
    """Hysteresis thresholds violate 0 < low < high."""


# --- inpainting engines ---

class EmptyMask(SliceFillError):
    """Mask selects no pixels; nothing to fill."""


class FullMask(SliceFillError):
    """Mask selects every pixel; no context to fill from."""


class EngineTimeout(SliceFillError):
    """External engine exceeded its time budget."""


class EngineFailed(SliceFillError):
    """External engine exited nonzero; carries its captured output."""

    def __init__(self, message: str, exit_code: int | None = None,
                 stdout: str = "", stderr: str = ""):
        super().__init__(message)
        self.exit_code = exit_code
        self.stdout = stdout
        self.stderr = stderr


class BadOutput(SliceFillError):
    """External engine produced no readable result image."""
