"""Fill engines and pipeline dispatch.

Three interchangeable engines fill the masked region of a 100x100 gray
patch:

* diffusion -- two-stage: completed edges become value-carrying barriers,
  then the hole solves the discrete Laplace equation (4-neighbor SOR);
* fast_marching -- single-stage Telea-style boundary-inward fill;
* external -- file handoff to a separate process:
  ``<command> <uid>_input.png <uid>_mask.png <uid>_output.png``, exit 0
  means success, output read back as RGB PNG. Mask convention on disk:
  255 = hole, 0 = context. Files are uid-scoped and removed on every
  exit path.

Whatever the engine does, unmasked pixels of the result are forced back
to the input byte-for-byte.
"""

from __future__ import annotations

import heapq
import math
import re
import shlex
import subprocess
import time
import uuid
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .edgemap import CannyParams, EdgeMap, canny, complete_edges
from .errors import (
    BadOutput,
    EmptyMask,
    EngineFailed,
    EngineTimeout,
    FullMask,
    MalformedPng,
    SizeMismatch,
)
from .maskproc import reduce_grayscale
from .raster import BinaryMask, GrayImage, PixelBuffer, decode_png, encode_png

__all__ = [
    "DiffusionConfig",
    "FastMarchingConfig",
    "ExternalConfig",
    "EngineConfig",
    "InpaintResult",
    "inpaint_diffusion",
    "inpaint_fast_marching",
    "inpaint_external",
    "run_pipeline",
    "UID_PATTERN",
]

UID_PATTERN = re.compile(r"^[A-Za-z0-9_-]{1,64}$")

ENGINE_NAMES = ("diffusion", "fast_marching", "external")


@dataclass(frozen=True)
class DiffusionConfig:
    max_iters: int = 20000
    tolerance: float = 1e-4
    omega: float = 1.8  # SOR relaxation

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")
        if not (1.0 <= self.omega < 2.0):
            raise ValueError("omega must satisfy 1 <= omega < 2")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class FastMarchingConfig:
    radius_eps: int = 5  # px neighborhood for the weighted average

    def __post_init__(self):
        if self.radius_eps < 1:
            raise ValueError("radius_eps must be >= 1")


@dataclass(frozen=True)
class ExternalConfig:
    command: tuple[str, ...]
    working_dir: Path
    timeout: float = 30.0

    def __post_init__(self):
        if isinstance(self.command, str):
            object.__setattr__(self, "command", tuple(shlex.split(self.command)))
        else:
            object.__setattr__(self, "command", tuple(self.command))
        if not self.command:
            raise ValueError("command must not be empty")
        object.__setattr__(self, "working_dir", Path(self.working_dir))
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")


@dataclass(frozen=True)
class EngineConfig:
    kind: str = "diffusion"
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    fast_marching: FastMarchingConfig = field(default_factory=FastMarchingConfig)
    external: ExternalConfig | None = None
    canny: CannyParams = field(default_factory=CannyParams)

    def __post_init__(self):
        if self.kind not in ENGINE_NAMES:
            raise ValueError(f"unknown engine kind {self.kind!r}")


@dataclass
class InpaintResult:
    """Filled patch plus engine diagnostics."""

    image: GrayImage
    engine: str
    engine_ms: float
    iterations: int | None = None
    front_steps: int | None = None
    converged: bool = True
    solution: np.ndarray | None = None  # float fill, diffusion only
    edge_map: EdgeMap | None = None


def _check_pair(img: GrayImage, mask: BinaryMask) -> np.ndarray:
    if (img.width, img.height) != (mask.width, mask.height):
        raise SizeMismatch(
            f"image {img.width}x{img.height} vs mask {mask.width}x{mask.height}"
        )
    return mask.as_bool


def _identity_result(img: GrayImage, engine: str) -> InpaintResult:
    return InpaintResult(
        image=GrayImage(img.pixels.copy()),
        engine=engine,
        engine_ms=0.0,
        iterations=0,
        front_steps=0,
    )


# --- diffusion engine -------------------------------------------------------

def _components(unknown: np.ndarray) -> list[np.ndarray]:
    """4-connected components of the unknown set, as boolean grids."""
    h, w = unknown.shape
    seen = np.zeros_like(unknown)
    comps = []
    for sy, sx in zip(*np.nonzero(unknown)):
        if seen[sy, sx]:
            continue
        comp = np.zeros_like(unknown)
        queue = deque([(int(sy), int(sx))])
        seen[sy, sx] = comp[sy, sx] = True
        while queue:
            y, x = queue.popleft()
            for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                if 0 <= ny < h and 0 <= nx < w and unknown[ny, nx] and not seen[ny, nx]:
                    seen[ny, nx] = comp[ny, nx] = True
                    queue.append((ny, nx))
        comps.append(comp)
    return comps


def _seed_barrier_values(
    values: np.ndarray, mask: np.ndarray, barrier: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Assign values to barrier pixels inside the mask.

    Each 8-connected barrier chain takes the mean over its contact
    clusters -- groups of chain pixels that lie outside the mask and so
    still carry image values (one cluster per chain end, typically two).
    Chains with no contact at all are left to the solver as unknowns.
    """
    h, w = values.shape
    out = values.copy()
    seen = np.zeros_like(barrier)
    unresolved = np.zeros_like(barrier)
    for sy, sx in zip(*np.nonzero(barrier)):
        if seen[sy, sx]:
            continue
        chain = []
        queue = deque([(int(sy), int(sx))])
        seen[sy, sx] = True
        while queue:
            y, x = queue.popleft()
            chain.append((y, x))
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w and barrier[ny, nx] and not seen[ny, nx]:
                        seen[ny, nx] = True
                        queue.append((ny, nx))
        contacts = [(y, x) for y, x in chain if not mask[y, x]]
        if not contacts:
            for y, x in chain:
                if mask[y, x]:
                    unresolved[y, x] = True
            continue
        # cluster contact pixels (8-connectivity within the chain)
        cluster_means = []
        remaining = set(contacts)
        while remaining:
            start = min(remaining)
            cluster = [start]
            remaining.discard(start)
            queue = deque([start])
            while queue:
                y, x = queue.popleft()
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        q = (y + dy, x + dx)
                        if q in remaining:
                            remaining.discard(q)
                            cluster.append(q)
                            queue.append(q)
            cluster_means.append(float(np.mean([values[y, x] for y, x in cluster])))
        seed = float(np.mean(cluster_means))
        for y, x in chain:
            if mask[y, x]:
                out[y, x] = seed
    return out, unresolved


_DIRS = ((-1, 0), (1, 0), (0, -1), (0, 1))


def inpaint_diffusion(
    img: GrayImage,
    mask: BinaryMask,
    edges: EdgeMap | None,
    cfg: DiffusionConfig | None = None,
) -> InpaintResult:
    """Solve the hole as a discrete Laplace problem with SOR.

    Completed-edge pixels act as barriers: links from unknowns to them
    are severed, and the in-mask portion of each edge chain is fixed to
    a value seeded from the chain's own contact with the known region.
    An unknown component that loses every Dirichlet contact this way is
    re-coupled to its edge neighbors, so enclosed pockets stay
    constrained.
    """
    cfg = cfg or DiffusionConfig()
    hole = _check_pair(img, mask)
    if not hole.any():
        return _identity_result(img, "diffusion")
    if hole.all():
        raise FullMask("mask covers every pixel; no context to fill from")

    t0 = time.perf_counter()
    h, w = hole.shape
    values = img.pixels.astype(np.float64)
    barrier = edges.completed.copy() if edges is not None else np.zeros_like(hole)

    seeded, unresolved = _seed_barrier_values(values, hole, barrier)
    barrier = barrier & ~unresolved
    unknown = hole & ~barrier

    V = seeded.copy()
    known_mean = float(values[~hole].mean())
    V[unknown] = known_mean

    # Unknown components with no Dirichlet contact get their barrier
    # links re-opened (the barrier values are their only constraint).
    blocked = barrier
    allow_barrier = np.zeros_like(unknown)
    padded_free = np.pad(~blocked & ~unknown, 1, constant_values=False)
    has_contact = np.zeros_like(unknown)
    for dy, dx in _DIRS:
        has_contact |= padded_free[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
    has_contact &= unknown
    for comp in _components(unknown):
        if not (comp & has_contact).any():
            allow_barrier |= comp

    # Per-direction open-link weights from each unknown pixel.
    weights = {}
    deg = np.zeros((h, w))
    padded_barrier = np.pad(blocked, 1, constant_values=True)  # off-grid = closed
    for dy, dx in _DIRS:
        neighbor_blocked = padded_barrier[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
        in_grid = np.ones((h, w), dtype=bool)
        if dy == -1:
            in_grid[0, :] = False
        if dy == 1:
            in_grid[-1, :] = False
        if dx == -1:
            in_grid[:, 0] = False
        if dx == 1:
            in_grid[:, -1] = False
        open_link = in_grid & (~neighbor_blocked | allow_barrier)
        weights[(dy, dx)] = open_link.astype(np.float64)
        deg += weights[(dy, dx)]

    safe_deg = np.where(deg > 0, deg, 1.0)
    parity = (np.add.outer(np.arange(h), np.arange(w)) % 2).astype(bool)
    colors = [unknown & parity, unknown & ~parity]

    tol = cfg.tolerance * 255.0
    iterations = 0
    converged = False
    for iterations in range(1, cfg.max_iters + 1):
        delta = 0.0
        for sel in colors:
            if not sel.any():
                continue
            P = np.pad(V, 1)
            neigh = np.zeros((h, w))
            for dy, dx in _DIRS:
                neigh += weights[(dy, dx)] * P[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
            gs = neigh / safe_deg
            update = cfg.omega * (gs - V)
            update = np.where(sel & (deg > 0), update, 0.0)
            V = V + update
            delta = max(delta, float(np.abs(update).max()))
        if delta < tol:
            converged = True
            break

    out = img.pixels.copy()
    fill = np.clip(np.floor(V + 0.5), 0, 255).astype(np.uint8)
    out[hole] = fill[hole]
    return InpaintResult(
        image=GrayImage(out),
        engine="diffusion",
        engine_ms=(time.perf_counter() - t0) * 1000.0,
        iterations=iterations,
        converged=converged,
        solution=V,
        edge_map=edges,
    )


# --- fast-marching engine ---------------------------------------------------

_KNOWN, _BAND, _INSIDE = 0, 1, 2
_FAR = 1.0e6


def _outward_distance(hole: np.ndarray, cap: float) -> np.ndarray:
    """Eikonal distance from the hole boundary across the known region,
    capped at ``cap``. Stored negated on the known side so the weight
    terms can tell ring depth apart, as the classical scheme does."""
    h, w = hole.shape
    dist = np.full((h, w), _FAR)
    state = np.full((h, w), _INSIDE, dtype=np.uint8)
    heap: list[tuple[float, int, int]] = []
    for y, x in zip(*np.nonzero(~hole)):
        y, x = int(y), int(x)
        for dy, dx in _DIRS:
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and hole[ny, nx]:
                dist[y, x] = 0.0
                state[y, x] = _BAND
                heapq.heappush(heap, (0.0, y, x))
                break
    while heap:
        d, y, x = heapq.heappop(heap)
        if d > dist[y, x] or d > cap:
            continue
        state[y, x] = _KNOWN
        for dy, dx in _DIRS:
            ny, nx = y + dy, x + dx
            if not (0 <= ny < h and 0 <= nx < w) or hole[ny, nx]:
                continue
            if state[ny, nx] == _KNOWN:
                continue
            nd = min(
                _eikonal_step(dist, state, ny - 1, nx, ny, nx - 1),
                _eikonal_step(dist, state, ny + 1, nx, ny, nx - 1),
                _eikonal_step(dist, state, ny - 1, nx, ny, nx + 1),
                _eikonal_step(dist, state, ny + 1, nx, ny, nx + 1),
            )
            if nd < dist[ny, nx]:
                dist[ny, nx] = nd
                state[ny, nx] = _BAND
                heapq.heappush(heap, (float(nd), ny, nx))
    return dist


def _eikonal_step(T: np.ndarray, f: np.ndarray, y1, x1, y2, x2) -> float:
    h, w = T.shape

    def usable(y, x):
        return 0 <= y < h and 0 <= x < w and f[y, x] != _INSIDE

    u1, u2 = usable(y1, x1), usable(y2, x2)
    if u1 and u2:
        a1, a2 = T[y1, x1], T[y2, x2]
        if abs(a1 - a2) >= 1.0:
            return 1.0 + min(a1, a2)
        return 0.5 * (a1 + a2 + math.sqrt(2.0 - (a1 - a2) ** 2))
    if u1:
        return 1.0 + T[y1, x1]
    if u2:
        return 1.0 + T[y2, x2]
    return _FAR


def _telea_fill(
    result: np.ndarray, T: np.ndarray, f: np.ndarray, y: int, x: int, eps: int
) -> float:
    h, w = result.shape

    def grad_component(ya, xa, yb, xb):
        ok_a = 0 <= ya < h and 0 <= xa < w and f[ya, xa] != _INSIDE
        ok_b = 0 <= yb < h and 0 <= xb < w and f[yb, xb] != _INSIDE
        if ok_a and ok_b:
            return 0.5 * (T[ya, xa] - T[yb, xb])
        if ok_a:
            return T[ya, xa] - T[y, x]
        if ok_b:
            return T[y, x] - T[yb, xb]
        return 0.0

    gtx = grad_component(y, x + 1, y, x - 1)
    gty = grad_component(y + 1, x, y - 1, x)

    y0, y1 = max(0, y - eps), min(h, y + eps + 1)
    x0, x1 = max(0, x - eps), min(w, x + eps + 1)
    ry = y - np.arange(y0, y1, dtype=np.float64)[:, None]
    rx = x - np.arange(x0, x1, dtype=np.float64)[None, :]
    d2 = rx * rx + ry * ry
    valid = (f[y0:y1, x0:x1] != _INSIDE) & (d2 <= eps * eps) & (d2 > 0)
    if not valid.any():
        return float(result[y, x])
    dst = 1.0 / (d2 * np.sqrt(d2) + 1e-20)
    lev = 1.0 / (1.0 + np.abs(T[y0:y1, x0:x1] - T[y, x]))
    direc = np.maximum(gtx * rx + gty * ry, 1e-6)
    wgt = np.abs(dst * lev * direc) * valid
    total = float(wgt.sum())
    if total <= 0:
        return float(result[y0:y1, x0:x1][valid].mean())
    return float((wgt * result[y0:y1, x0:x1]).sum() / total)


def inpaint_fast_marching(
    img: GrayImage, mask: BinaryMask, cfg: FastMarchingConfig | None = None
) -> InpaintResult:
    """Telea-style fill: march from the hole boundary inward, each pixel
    taking a direction/distance/level-set weighted average of already
    known neighbors within ``radius_eps``."""
    cfg = cfg or FastMarchingConfig()
    hole = _check_pair(img, mask)
    if not hole.any():
        return _identity_result(img, "fast_marching")
    if hole.all():
        raise FullMask("mask covers every pixel; no context to fill from")

    t0 = time.perf_counter()
    h, w = hole.shape
    result = img.pixels.astype(np.float64)
    f = np.where(hole, _INSIDE, _KNOWN).astype(np.uint8)
    # Known side carries negative ring distance; only boundary pixels
    # (distance 0) ever feed the inside eikonal, so ordering is unaffected
    # while the direction/level weights see proper level sets.
    outward = _outward_distance(hole, cap=float(cfg.radius_eps) + 2.0)
    T = np.where(hole, _FAR, -np.minimum(outward, cfg.radius_eps + 2.0))

    # initial band: known pixels 4-adjacent to the hole, all at T=0
    band0 = np.zeros_like(hole)
    band0[:-1, :] |= hole[1:, :] & ~hole[:-1, :]
    band0[1:, :] |= hole[:-1, :] & ~hole[1:, :]
    band0[:, :-1] |= hole[:, 1:] & ~hole[:, :-1]
    band0[:, 1:] |= hole[:, :-1] & ~hole[:, 1:]
    heap: list[tuple[float, int, int]] = []
    for y, x in zip(*np.nonzero(band0)):
        f[y, x] = _BAND
        heapq.heappush(heap, (0.0, int(y), int(x)))

    steps = 0
    while heap:
        _, y, x = heapq.heappop(heap)
        f[y, x] = _KNOWN
        steps += 1
        for dy, dx in _DIRS:
            ny, nx = y + dy, x + dx
            if not (0 <= ny < h and 0 <= nx < w) or f[ny, nx] != _INSIDE:
                continue
            T[ny, nx] = min(
                _eikonal_step(T, f, ny - 1, nx, ny, nx - 1),
                _eikonal_step(T, f, ny + 1, nx, ny, nx - 1),
                _eikonal_step(T, f, ny - 1, nx, ny, nx + 1),
                _eikonal_step(T, f, ny + 1, nx, ny, nx + 1),
            )
            result[ny, nx] = _telea_fill(result, T, f, ny, nx, cfg.radius_eps)
            f[ny, nx] = _BAND
            heapq.heappush(heap, (float(T[ny, nx]), ny, nx))

    out = img.pixels.copy()
    fill = np.clip(np.floor(result + 0.5), 0, 255).astype(np.uint8)
    out[hole] = fill[hole]
    return InpaintResult(
        image=GrayImage(out),
        engine="fast_marching",
        engine_ms=(time.perf_counter() - t0) * 1000.0,
        front_steps=steps,
    )


# --- external engine --------------------------------------------------------

def inpaint_external(
    img: GrayImage, mask: BinaryMask, uid: str, cfg: ExternalConfig
) -> InpaintResult:
    """File-based handoff to an external process, uid-scoped.

    Writes ``<uid>_input.png`` and ``<uid>_mask.png``, invokes the
    configured command with input, mask and output paths appended, reads
    ``<uid>_output.png`` back on exit 0. Every file matching ``<uid>_*``
    is deleted afterwards no matter how the invocation ends.
    """
    if not UID_PATTERN.match(uid):
        raise ValueError(f"uid {uid!r} must match [A-Za-z0-9_-]{{1,64}}")
    _check_pair(img, mask)

    workdir = cfg.working_dir
    workdir.mkdir(parents=True, exist_ok=True)
    input_path = workdir / f"{uid}_input.png"
    mask_path = workdir / f"{uid}_mask.png"
    output_path = workdir / f"{uid}_output.png"

    t0 = time.perf_counter()
    try:
        input_path.write_bytes(encode_png(img))
        mask_path.write_bytes(encode_png(GrayImage(mask.pixels)))
        argv = list(cfg.command) + [str(input_path), str(mask_path), str(output_path)]
        try:
            proc = subprocess.run(
                argv,
                cwd=workdir,
                capture_output=True,
                text=True,
                timeout=cfg.timeout,
            )
        except subprocess.TimeoutExpired as exc:
            raise EngineTimeout(
                f"engine exceeded {cfg.timeout}s: {' '.join(cfg.command)}"
            ) from exc
        if proc.returncode != 0:
            raise EngineFailed(
                f"engine exited {proc.returncode}: "
                f"stdout={proc.stdout.strip()!r} stderr={proc.stderr.strip()!r}",
                exit_code=proc.returncode,
                stdout=proc.stdout,
                stderr=proc.stderr,
            )
        if not output_path.exists():
            raise BadOutput(f"engine wrote no output file {output_path.name}")
        try:
            decoded = decode_png(output_path.read_bytes())
        except MalformedPng as exc:
            raise BadOutput(f"engine output not decodable: {exc}") from exc
        if isinstance(decoded, PixelBuffer):
            gray, _ = reduce_grayscale(decoded)
        else:
            gray = decoded
        if (gray.width, gray.height) != (img.width, img.height):
            raise BadOutput(
                f"engine output {gray.width}x{gray.height}, "
                f"expected {img.width}x{img.height}"
            )
        return InpaintResult(
            image=gray,
            engine="external",
            engine_ms=(time.perf_counter() - t0) * 1000.0,
        )
    finally:
        for leftover in workdir.glob(f"{uid}_*"):
            try:
                leftover.unlink()
            except OSError:
                pass


# --- pipeline ---------------------------------------------------------------

def generate_uid() -> str:
    return uuid.uuid4().hex


def run_pipeline(
    img: GrayImage,
    mask: BinaryMask,
    cfg: EngineConfig | None = None,
    uid: str | None = None,
) -> InpaintResult:
    """Dispatch the full fill for one request.

    diffusion runs edge detection and completion first; fast_marching is
    single-stage; external delegates to the configured command. In every
    case unmasked pixels of the output are overwritten from the input,
    so context preservation holds regardless of what the engine did.
    """
    cfg = cfg or EngineConfig()
    hole = _check_pair(img, mask)
    if not hole.any():
        raise EmptyMask("mask selects no pixels")
    if hole.all():
        raise FullMask("mask covers every pixel")

    if cfg.kind == "diffusion":
        em = complete_edges(canny(img, mask, cfg.canny), mask)
        result = inpaint_diffusion(img, mask, em, cfg.diffusion)
    elif cfg.kind == "fast_marching":
        result = inpaint_fast_marching(img, mask, cfg.fast_marching)
    else:
        if cfg.external is None:
            raise ValueError("external engine requested but not configured")
        result = inpaint_external(img, mask, uid or generate_uid(), cfg.external)

    enforced = result.image.pixels.copy()
    enforced[~hole] = img.pixels[~hole]
    result.image = GrayImage(enforced)
    return result
