"""slicefill: inpainting service for axial slices of volumetric scans.

Library layers, bottom to top: NRRD volume I/O (`nrrd`), pixel raster
types and resampling (`raster`), wire-buffer conversion (`maskproc`),
edge detection/completion (`edgemap`), fill engines (`inpaint`), HTTP
service (`gateway`), loopback benchmark (`bench`), CLI (`cli`).
"""

from .edgemap import CannyParams, EdgeMap, canny, complete_edges
from .inpaint import (
    DiffusionConfig,
    EngineConfig,
    ExternalConfig,
    FastMarchingConfig,
    InpaintResult,
    inpaint_diffusion,
    inpaint_external,
    inpaint_fast_marching,
    run_pipeline,
)
from .maskproc import ValidationReport, binarize_mask, reduce_grayscale, validate_pair
from .nrrd import (
    Volume,
    SliceImage,
    apply_axial_patch,
    extract_axial_slice,
    parse_nrrd,
    write_nrrd,
)
from .raster import (
    BinaryMask,
    DisplayMapping,
    GrayImage,
    PixelBuffer,
    decode_png,
    downsample_area,
    downsample_mask,
    encode_png,
    upsample_nearest,
    window_level,
)

__version__ = "0.1.0"
