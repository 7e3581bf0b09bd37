"""Shared fixtures and independent oracles.

The oracles here deliberately share no code with the package: the NRRD
generator packs bytes with struct/gzip directly, the Laplace oracle is a
dense linear solve, the downsampling oracle is a plain block mean, and
connectivity is checked by flood fill.
"""

from __future__ import annotations

import gzip as gzip_mod
import struct
import sys
import textwrap
from collections import deque

import numpy as np
import pytest

from slicefill.gateway import GatewayConfig, GatewayServer

# --- independent NRRD generator (oracle side) -------------------------------

_STRUCT_CODES = {
    "uint8": "B", "int16": "h", "uint16": "H",
    "int32": "i", "float32": "f", "float64": "d",
}

_NRRD_TYPE_TOKENS = {
    "uint8": "uchar", "int16": "short", "uint16": "ushort",
    "int32": "int", "float32": "float", "float64": "double",
}


def independent_nrrd_bytes(
    dims: tuple[int, int, int],
    voxel_type: str,
    flat_values,
    encoding: str = "raw",
    endian: str = "little",
    extra_lines: tuple[str, ...] = (),
) -> bytes:
    """Hand-packed NRRD stream: header via string formatting, payload via
    struct. Never touches slicefill code."""
    nx, ny, nz = dims
    values = list(flat_values)
    assert len(values) == nx * ny * nz
    prefix = "<" if endian == "little" else ">"
    payload = struct.pack(f"{prefix}{len(values)}{_STRUCT_CODES[voxel_type]}", *values)
    if encoding == "gzip":
        payload = gzip_mod.compress(payload)
    header = f"NRRD0004\ntype: {_NRRD_TYPE_TOKENS[voxel_type]}\ndimension: 3\n"
    header += f"sizes: {nx} {ny} {nz}\n"
    if voxel_type != "uint8":
        header += f"endian: {endian}\n"
    header += f"encoding: {encoding}\n"
    for line in extra_lines:
        header += line + "\n"
    header += "\n"
    return header.encode("ascii") + payload


# --- dense Laplace oracle ----------------------------------------------------

def dense_laplace_fill(values: np.ndarray, hole: np.ndarray) -> np.ndarray:
    """Exact solve of the 4-neighbor Laplace system on the hole pixels.

    Off-grid neighbors are simply absent (reduced stencil degree); known
    pixels enter as Dirichlet data. Returns the full float grid.
    """
    h, w = values.shape
    idx = -np.ones((h, w), dtype=np.int64)
    ys, xs = np.nonzero(hole)
    for n, (y, x) in enumerate(zip(ys, xs)):
        idx[y, x] = n
    n_unknown = len(ys)
    if n_unknown == 0:
        return values.astype(np.float64)
    A = np.zeros((n_unknown, n_unknown))
    b = np.zeros(n_unknown)
    for n, (y, x) in enumerate(zip(ys, xs)):
        degree = 0
        for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
            if not (0 <= ny < h and 0 <= nx < w):
                continue
            degree += 1
            if hole[ny, nx]:
                A[n, idx[ny, nx]] = -1.0
            else:
                b[n] += float(values[ny, nx])
        A[n, n] = degree
    solution = np.linalg.solve(A, b)
    out = values.astype(np.float64).copy()
    out[hole] = solution
    return out


# --- block-mean downsample oracle ---------------------------------------------

def block_mean(gray: np.ndarray, factor: int) -> np.ndarray:
    """Integer-factor area mean by explicit block averaging."""
    h, w = gray.shape
    assert h % factor == 0 and w % factor == 0
    view = gray.reshape(h // factor, factor, w // factor, factor).astype(np.float64)
    return view.mean(axis=(1, 3))


# --- flood-fill connectivity oracle -------------------------------------------

def flood_reachable(grid: np.ndarray, seeds) -> np.ndarray:
    """Pixels of ``grid`` 8-connected to any of the (y, x) ``seeds``."""
    h, w = grid.shape
    comp = np.zeros_like(grid, dtype=bool)
    queue = deque()
    for seed in seeds:
        if grid[seed] and not comp[seed]:
            comp[seed] = True
            queue.append(seed)
    while queue:
        y, x = queue.popleft()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w and grid[ny, nx] and not comp[ny, nx]:
                    comp[ny, nx] = True
                    queue.append((ny, nx))
    return comp


def connected_component(grid: np.ndarray, seed: tuple[int, int]) -> np.ndarray:
    """8-connected component of ``grid`` containing ``seed`` (y, x)."""
    return flood_reachable(grid, [seed])


# --- request helpers -----------------------------------------------------------

def gray_flat_rgba(gray: np.ndarray) -> list[int]:
    """Expand (100,100) gray bytes to the flat RGBA wire array."""
    g = np.asarray(gray, dtype=np.uint8)
    rgba = np.stack([g, g, g, np.full_like(g, 255)], axis=-1)
    return rgba.reshape(-1).tolist()


def mask_flat_rgba(hole: np.ndarray) -> list[int]:
    """Encode a boolean hole grid as the flat RGBA mask array (red carries
    the stroke, alpha half-transparent like the drawing surface)."""
    m = np.asarray(hole, dtype=bool)
    r = np.where(m, 255, 0).astype(np.uint8)
    zero = np.zeros_like(r)
    alpha = np.where(m, 128, 0).astype(np.uint8)
    return np.stack([r, zero, zero, alpha], axis=-1).reshape(-1).tolist()


# --- engine scripts --------------------------------------------------------------

IDENTITY_ENGINE = textwrap.dedent(
    """\
    import sys
    from PIL import Image
    src, mask, out = sys.argv[1:4]
    Image.open(src).convert("RGB").save(out)
    """
)

FAILING_ENGINE = textwrap.dedent(
    """\
    import sys
    sys.stderr.write("boom")
    sys.exit(3)
    """
)

SLEEPY_ENGINE = textwrap.dedent(
    """\
    import sys, time
    time.sleep(float(sys.argv[4]) if len(sys.argv) > 4 else 30.0)
    """
)

DELAYED_IDENTITY_ENGINE = textwrap.dedent(
    """\
    import sys, time
    from PIL import Image
    time.sleep(0.5)
    src, mask, out = sys.argv[1:4]
    Image.open(src).convert("RGB").save(out)
    """
)


@pytest.fixture
def engine_script(tmp_path):
    """Write one of the canned engine scripts; returns its command tuple."""

    def make(source: str, name: str = "engine.py") -> tuple[str, ...]:
        path = tmp_path / name
        path.write_text(source)
        return (sys.executable, str(path))

    return make


# --- gateway fixture ----------------------------------------------------------------

@pytest.fixture
def gateway_factory(tmp_path):
    """Start GatewayServer instances on free ports; all shut down at teardown."""
    servers: list[GatewayServer] = []

    def start(**overrides) -> GatewayServer:
        overrides.setdefault("working_dir", tmp_path / "work")
        config = GatewayConfig(host="127.0.0.1", port=0, **overrides)
        server = GatewayServer(config)
        server.start_background()
        servers.append(server)
        return server

    yield start
    for server in servers:
        server.shutdown()


@pytest.fixture
def base_url(gateway_factory):
    server = gateway_factory()
    return f"http://127.0.0.1:{server.port}"


# --- deterministic randomness -----------------------------------------------------

@pytest.fixture
def rng():
    return np.random.default_rng(0xC0FFEE)
