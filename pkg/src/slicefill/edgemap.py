"""Stage one of the two-stage fill: edge detection and edge completion.

Edges in the known region come from a standard Canny pipeline (Gaussian
blur, Sobel gradients, non-maximum suppression over 8 quantized
directions, double-threshold hysteresis). Output is suppressed on the
hole footprint -- the mask plus a one-pixel dilation, so gradient
artifacts at the mask border never read as anatomy.

Edge completion then bridges the hole deterministically: edge pixels
terminating at the footprint are paired when their directions point at
each other (within 25 degrees) and the straight connection stays inside
the footprint; leftovers are extended straight ahead up to 30 px.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import BadThresholds
from .raster import BinaryMask, GrayImage

__all__ = [
    "CannyParams",
    "EdgeMap",
    "canny",
    "complete_edges",
    "hole_footprint",
    "render_edge_map",
]

MAX_EXTENSION_PX = 30
PAIRING_TOLERANCE_DEG = 25.0
DIRECTION_HISTORY = 5


@dataclass(frozen=True)
class CannyParams:
    """Detector parameters; thresholds are fractions of the maximum
    gradient magnitude so they adapt to the slice's contrast."""

    sigma: float = 1.4
    low: float = 0.10
    high: float = 0.25

    def __post_init__(self):
        if not (0 < self.low < self.high):
            raise BadThresholds(
                f"need 0 < low < high, got low={self.low}, high={self.high}"
            )
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class EdgeMap:
    """Detected edges (known region) and completed edges (hole footprint).

    ``detected`` is zero everywhere on the footprint; ``completed`` is
    zero everywhere off it; the two never overlap.
    """

    detected: np.ndarray  # (h, w) bool
    completed: np.ndarray  # (h, w) bool
    params: CannyParams = field(default_factory=CannyParams)

    @property
    def width(self) -> int:
        return self.detected.shape[1]

    @property
    def height(self) -> int:
        return self.detected.shape[0]

    @classmethod
    def empty(cls, height: int, width: int, params: CannyParams | None = None) -> "EdgeMap":
        z = np.zeros((height, width), dtype=bool)
        return cls(detected=z, completed=z.copy(), params=params or CannyParams())


def _dilate8(mask: np.ndarray) -> np.ndarray:
    """One 3x3 binary dilation."""
    out = mask.copy()
    out[1:, :] |= mask[:-1, :]
    out[:-1, :] |= mask[1:, :]
    out[:, 1:] |= mask[:, :-1]
    out[:, :-1] |= mask[:, 1:]
    out[1:, 1:] |= mask[:-1, :-1]
    out[1:, :-1] |= mask[:-1, 1:]
    out[:-1, 1:] |= mask[1:, :-1]
    out[:-1, :-1] |= mask[1:, 1:]
    return out


def hole_footprint(mask: BinaryMask) -> np.ndarray:
    """Mask plus its one-pixel dilation: the region the edge stage treats
    as unknown."""
    return _dilate8(mask.as_bool)


def _gaussian_kernel(sigma: float, max_radius: int | None = None) -> np.ndarray:
    radius = math.ceil(3.0 * sigma)
    if max_radius is not None:
        radius = max(1, min(radius, max_radius))  # reflect pad needs radius < size
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _convolve_separable(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    radius = len(kernel) // 2
    padded = np.pad(img, radius, mode="reflect")
    tmp = np.zeros_like(padded)
    for i, kv in enumerate(kernel):
        tmp[:, radius:-radius] += kv * padded[:, i:i + img.shape[1]]
    out = np.zeros_like(img)
    for i, kv in enumerate(kernel):
        out += kv * tmp[i:i + img.shape[0], radius:-radius]
    return out


def _sobel(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = np.pad(img, 1, mode="reflect")
    gx = (
        (p[:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:])
        - (p[:-2, :-2] + 2.0 * p[1:-1, :-2] + p[2:, :-2])
    )
    gy = (
        (p[2:, :-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:])
        - (p[:-2, :-2] + 2.0 * p[:-2, 1:-1] + p[:-2, 2:])
    )
    return gx, gy


# Unit steps for the 8 quantized gradient directions, sector s = s * 45deg.
_SECTOR_STEPS = [
    (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)
]


def _nonmax_suppress(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Keep pixels that dominate both neighbors along their quantized
    gradient direction; ties broken toward the positive direction so
    plateau edges thin to one pixel."""
    h, w = mag.shape
    angle = np.arctan2(gy, gx)
    sector = np.round(angle / (math.pi / 4.0)).astype(np.int64) % 8
    padded = np.pad(mag, 1, mode="constant")
    keep = np.zeros((h, w), dtype=bool)
    for s, (dx, dy) in enumerate(_SECTOR_STEPS):
        sel = sector == s
        if not sel.any():
            continue
        ahead = padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
        behind = padded[1 - dy:1 - dy + h, 1 - dx:1 - dx + w]
        keep |= sel & (mag > ahead) & (mag >= behind)
    keep &= mag > 0
    return keep


def _hysteresis(mag: np.ndarray, thinned: np.ndarray, low: float, high: float) -> np.ndarray:
    strong = thinned & (mag >= high)
    weak = thinned & (mag >= low)
    edges = strong.copy()
    h, w = mag.shape
    queue = deque(zip(*np.nonzero(strong)))
    while queue:
        y, x = queue.popleft()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w and weak[ny, nx] and not edges[ny, nx]:
                    edges[ny, nx] = True
                    queue.append((ny, nx))
    return edges


def canny(
    img: GrayImage,
    mask: BinaryMask | None = None,
    params: CannyParams | None = None,
) -> EdgeMap:
    """Detect edges in the known region of ``img``.

    The hole footprint (mask plus 1-px dilation) is removed from the
    thinned gradient *before* hysteresis, so hole content can neither
    appear as edges nor vouch for weak edges outside.
    """
    params = params or CannyParams()
    gray = img.pixels.astype(np.float64)
    kernel = _gaussian_kernel(params.sigma, max_radius=min(img.height, img.width) - 1)
    blurred = _convolve_separable(gray, kernel)
    gx, gy = _sobel(blurred)
    mag = np.hypot(gx, gy)
    max_grad = float(mag.max())
    if max_grad == 0.0:
        return EdgeMap.empty(img.height, img.width, params)

    thinned = _nonmax_suppress(mag, gx, gy)
    if mask is not None:
        thinned &= ~hole_footprint(mask)
    detected = _hysteresis(mag, thinned, params.low * max_grad, params.high * max_grad)
    return EdgeMap(
        detected=detected,
        completed=np.zeros_like(detected),
        params=params,
    )


def _bresenham(p0: tuple[int, int], p1: tuple[int, int]) -> list[tuple[int, int]]:
    """Integer line from p0 to p1 inclusive, (x, y) points."""
    x0, y0 = p0
    x1, y1 = p1
    points = []
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx, sy = (1 if x0 < x1 else -1), (1 if y0 < y1 else -1)
    err = dx + dy
    x, y = x0, y0
    while True:
        points.append((x, y))
        if x == x1 and y == y1:
            return points
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy


@dataclass(frozen=True)
class _Terminal:
    x: int
    y: int
    direction: tuple[float, float]  # unit vector pointing into the hole
    order: int  # row-major rank, the deterministic tie-break


def _trace_direction(
    detected: np.ndarray, footprint: np.ndarray, x: int, y: int
) -> tuple[float, float]:
    """Estimate the forward direction at a terminal from the last up-to-5
    pixels of its edge chain; falls back to pointing at the adjacent
    footprint when the terminal is isolated."""
    h, w = detected.shape
    path = [(x, y)]
    cx, cy = x, y
    for _ in range(DIRECTION_HISTORY - 1):
        candidates = []
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                nx, ny = cx + dx, cy + dy
                if 0 <= nx < w and 0 <= ny < h and detected[ny, nx]:
                    if (nx, ny) not in path:
                        candidates.append((ny, nx))
        if not candidates:
            break
        ny, nx = min(candidates)  # row-major, deterministic
        path.append((nx, ny))
        cx, cy = nx, ny
    if len(path) > 1:
        vx, vy = x - path[-1][0], y - path[-1][1]
    else:
        vx = vy = 0.0
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                nx, ny = x + dx, y + dy
                if 0 <= nx < w and 0 <= ny < h and footprint[ny, nx]:
                    vx += dx
                    vy += dy
        if vx == 0 and vy == 0:
            vx = 1.0
    norm = math.hypot(vx, vy)
    return (vx / norm, vy / norm)


def _find_terminals(detected: np.ndarray, footprint: np.ndarray) -> list[_Terminal]:
    h, w = detected.shape
    adjacent = _dilate8(footprint) & detected
    terminals = []
    for y, x in zip(*np.nonzero(adjacent)):
        x, y = int(x), int(y)
        terminals.append(
            _Terminal(
                x=x,
                y=y,
                direction=_trace_direction(detected, footprint, x, y),
                order=y * w + x,
            )
        )
    return terminals


def _entry_pixel(t: _Terminal, footprint: np.ndarray) -> tuple[int, int]:
    """Footprint pixel the terminal's edge runs into: its 8-neighbor most
    aligned with the forward direction (deterministic tie-break)."""
    h, w = footprint.shape
    best = None
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dx == 0 and dy == 0:
                continue
            nx, ny = t.x + dx, t.y + dy
            if 0 <= nx < w and 0 <= ny < h and footprint[ny, nx]:
                norm = math.hypot(dx, dy)
                align = (dx * t.direction[0] + dy * t.direction[1]) / norm
                key = (-align, ny, nx)
                if best is None or key < best[0]:
                    best = (key, (nx, ny))
    assert best is not None, "terminals are footprint-adjacent by construction"
    return best[1]


def _segment_inside(
    a: _Terminal, b: _Terminal, footprint: np.ndarray
) -> list[tuple[int, int]] | None:
    """Bridge pixels of the straight connection between the terminals'
    footprint entry pixels, or None when the connection leaves the
    footprint. Both endpoints touch their terminals, so an admissible
    bridge always joins the two chains."""
    bridge = _bresenham(_entry_pixel(a, footprint), _entry_pixel(b, footprint))
    for x, y in bridge:
        if not footprint[y, x]:
            return None
    return bridge


def complete_edges(em: EdgeMap, mask: BinaryMask) -> EdgeMap:
    """Bridge detected edges across the hole with straight segments.

    Terminals are paired nearest-first (Euclidean; ties by row-major
    order of the lower-indexed terminal) when both forward rays point at
    each other within the angular tolerance and the straight connection
    stays on the footprint. Unpaired terminals extend straight until
    leaving the footprint or reaching 30 px. Deterministic throughout.
    """
    footprint = hole_footprint(mask)
    detected = em.detected & ~footprint
    completed = np.zeros_like(detected)
    terminals = _find_terminals(detected, footprint)

    cos_tol = math.cos(math.radians(PAIRING_TOLERANCE_DEG))
    candidates = []
    for i in range(len(terminals)):
        for j in range(i + 1, len(terminals)):
            a, b = terminals[i], terminals[j]
            dx, dy = b.x - a.x, b.y - a.y
            dist = math.hypot(dx, dy)
            if dist == 0:
                continue
            ux, uy = dx / dist, dy / dist
            if a.direction[0] * ux + a.direction[1] * uy < cos_tol:
                continue
            if -(b.direction[0] * ux + b.direction[1] * uy) < cos_tol:
                continue
            between = _segment_inside(a, b, footprint)
            if between is None:
                continue
            lo, hi = sorted((a.order, b.order))
            candidates.append((dist, lo, hi, i, j, between))

    candidates.sort(key=lambda c: (c[0], c[1], c[2]))
    paired: set[int] = set()
    for _, _, _, i, j, between in candidates:
        if i in paired or j in paired:
            continue
        paired.add(i)
        paired.add(j)
        for x, y in between:
            completed[y, x] = True

    for i, t in enumerate(terminals):  # already row-major ordered
        if i in paired:
            continue
        for step in range(1, MAX_EXTENSION_PX + 1):
            px = t.x + round(step * t.direction[0])
            py = t.y + round(step * t.direction[1])
            if not (0 <= px < em.width and 0 <= py < em.height):
                break
            if not footprint[py, px]:
                break
            completed[py, px] = True

    completed &= ~detected
    return EdgeMap(detected=detected, completed=completed, params=em.params)


def render_edge_map(em: EdgeMap) -> GrayImage:
    """Debug rendering: detected edges black, completed mid-gray, on white."""
    out = np.full((em.height, em.width), 255, dtype=np.uint8)
    out[em.completed] = 128
    out[em.detected] = 0
    return GrayImage(out)
