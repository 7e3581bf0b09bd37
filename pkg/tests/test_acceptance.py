"""Acceptance suite: one test per release criterion, each at its stated
tolerance, with an explicit pass/fail line printed to the terminal.

Runs entirely without the browser front-end; the HTTP surface is
exercised with scripted requests against embedded servers.
"""

import json
import time

import numpy as np
import pytest
import requests
from skimage import feature as sk_feature

from slicefill import nrrd
from slicefill.edgemap import canny, complete_edges
from slicefill.gateway import TimingBreakdown
from slicefill.inpaint import (
    DiffusionConfig,
    EngineConfig,
    ExternalConfig,
    inpaint_diffusion,
    run_pipeline,
)
from slicefill.maskproc import binarize_mask
from slicefill.raster import BinaryMask, GrayImage, PixelBuffer

from conftest import (
    FAILING_ENGINE,
    IDENTITY_ENGINE,
    SLEEPY_ENGINE,
    DELAYED_IDENTITY_ENGINE,
    dense_laplace_fill,
    flood_reachable,
    gray_flat_rgba,
    mask_flat_rgba,
)


@pytest.fixture
def criterion(capsys, request):
    """Print one '[acceptance] <name>: PASS/FAIL' line per criterion."""

    class Reporter:
        def __init__(self):
            self.name = request.node.name.removeprefix("test_")

        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            verdict = "PASS" if exc_type is None else "FAIL"
            with capsys.disabled():
                print(f"[acceptance] {self.name}: {verdict}")
            return False

    return Reporter()


def test_binarization_conformance(criterion, rng):
    with criterion:
        t0 = time.perf_counter()
        total = 0
        mismatches = 0
        while total < 1_000_000:
            rgba = rng.integers(0, 256, (100, 100, 4)).astype(np.uint8)
            out = binarize_mask(PixelBuffer(rgba)).pixels
            expected = np.where(rgba[..., 0] != 0, 255, 0).astype(np.uint8)
            mismatches += int((out != expected).sum())
            total += rgba.shape[0] * rgba.shape[1]
        elapsed = time.perf_counter() - t0
        assert mismatches == 0
        assert total >= 1_000_000
        assert elapsed < 5.0, f"took {elapsed:.2f}s"


def _random_pair(rng):
    kind = rng.integers(0, 3)
    if kind == 0:
        img = rng.integers(0, 256, (100, 100)).astype(np.uint8)
    elif kind == 1:
        y, x = np.mgrid[0:100, 0:100]
        img = ((x * rng.integers(1, 3) + y * rng.integers(0, 3)) % 256).astype(np.uint8)
    else:
        y, x = np.mgrid[0:100, 0:100]
        cx, cy = rng.integers(20, 80, 2)
        img = np.where((x - cx) ** 2 + (y - cy) ** 2 < 400, 210, 40).astype(np.uint8)
        img = (img + rng.integers(0, 20, (100, 100))).clip(0, 255).astype(np.uint8)
    hole = np.zeros((100, 100), bool)
    w, h = rng.integers(3, 21, 2)
    x0 = rng.integers(0, 100 - w)
    y0 = rng.integers(0, 100 - h)
    hole[y0:y0 + h, x0:x0 + w] = True
    if rng.integers(0, 2):
        w2, h2 = rng.integers(2, 12, 2)
        x2 = rng.integers(0, 100 - w2)
        y2 = rng.integers(0, 100 - h2)
        hole[y2:y2 + h2, x2:x2 + w2] = True
    return GrayImage(img), BinaryMask.from_bool(hole)


def test_context_preservation_all_engines(criterion, rng, engine_script, tmp_path):
    with criterion:
        external = ExternalConfig(
            command=engine_script(IDENTITY_ENGINE), working_dir=tmp_path / "work"
        )
        configs = [
            EngineConfig(kind="diffusion"),
            EngineConfig(kind="fast_marching"),
            EngineConfig(kind="external", external=external),
        ]
        pairs = [_random_pair(rng) for _ in range(200)]
        for cfg in configs:
            for i, (img, mask) in enumerate(pairs):
                out = run_pipeline(img, mask, cfg, uid=f"ctx-{cfg.kind}-{i}")
                keep = ~mask.as_bool
                assert np.array_equal(
                    out.image.pixels[keep], img.pixels[keep]
                ), f"{cfg.kind} pair {i}"


def test_diffusion_dense_oracle_all_small_masks(criterion):
    with criterion:
        t0 = time.perf_counter()
        rng = np.random.default_rng(12)
        img = rng.integers(0, 256, (12, 12)).astype(np.uint8)
        cfg = DiffusionConfig(tolerance=1e-9, max_iters=200000)
        worst = 0.0
        count = 0
        for mh in range(1, 6):
            for mw in range(1, 6):
                for y0 in range(0, 12 - mh + 1):
                    for x0 in range(0, 12 - mw + 1):
                        hole = np.zeros((12, 12), bool)
                        hole[y0:y0 + mh, x0:x0 + mw] = True
                        res = inpaint_diffusion(
                            GrayImage(img), BinaryMask.from_bool(hole), None, cfg
                        )
                        oracle = dense_laplace_fill(img.astype(np.float64), hole)
                        diff = float(np.abs(res.solution - oracle)[hole].max())
                        worst = max(worst, diff)
                        count += 1
        elapsed = time.perf_counter() - t0
        assert count == 2500  # every size <= 5x5 at every position
        assert worst <= 1e-3, f"worst deviation {worst:.2e}"
        assert elapsed < 60.0, f"took {elapsed:.1f}s"


def test_max_principle_diffusion(criterion, rng):
    with criterion:
        for _ in range(200):
            img, mask = _random_pair(rng)
            res = inpaint_diffusion(img, mask, None)
            hole = mask.as_bool
            known = img.pixels[~hole]
            filled = res.image.pixels[hole]
            assert filled.min() >= known.min()
            assert filled.max() <= known.max()


def test_canny_reference_check(criterion):
    with criterion:
        # constant image: zero edges
        em = canny(GrayImage(np.full((100, 100), 123, np.uint8)))
        assert not em.detected.any()

        # step fixture: edge within 1 px of the step column
        step = np.zeros((100, 100), np.uint8)
        step[:, 50:] = 255
        det = canny(GrayImage(step)).detected
        ys, xs = np.nonzero(det)
        assert len(ys) > 0
        assert set(xs.tolist()) <= {49, 50, 51}
        assert set(ys.tolist()) == set(range(100))

        # five fixtures against the independent reference implementation
        yy, xx = np.mgrid[0:100, 0:100]
        rect = np.zeros((100, 100), np.uint8)
        rect[30:70, 25:75] = 200
        fixtures = [
            step,
            step.T.copy(),
            rect,
            np.where((xx - 50) ** 2 + (yy - 50) ** 2 <= 30 ** 2, 220, 20).astype(np.uint8),
            np.where(xx + yy > 100, 240, 10).astype(np.uint8),
        ]
        for i, img in enumerate(fixtures):
            mine = canny(GrayImage(img)).detected
            ref = sk_feature.canny(img.astype(float) / 255.0, sigma=1.4)
            disagreement = int((mine != ref).sum()) / mine.size
            assert disagreement <= 0.02, f"fixture {i}: {disagreement:.2%}"


def test_edge_bridging_20_fixtures(criterion):
    with criterion:
        def half_plane(angle_deg):
            yy, xx = np.mgrid[0:100, 0:100].astype(float)
            a = np.radians(angle_deg)
            side = (xx - 50) * np.cos(a) + (yy - 50) * np.sin(a)
            return np.where(side > 0, 230, 15).astype(np.uint8)

        def disk(cx, cy, r):
            yy, xx = np.mgrid[0:100, 0:100]
            return BinaryMask.from_bool((xx - cx) ** 2 + (yy - cy) ** 2 <= r * r)

        def rect(x0, y0, x1, y1):
            hole = np.zeros((100, 100), bool)
            hole[y0:y1, x0:x1] = True
            return BinaryMask.from_bool(hole)

        masks = [disk(50, 50, 10), disk(50, 50, 16), rect(38, 42, 66, 61), disk(44, 55, 12)]
        bridged = 0
        for angle in (0, 22, 45, 67, 90):
            img = GrayImage(half_plane(angle))
            for mask in masks:
                em = complete_edges(canny(img, mask), mask)
                union = em.detected | em.completed
                ys, xs = np.nonzero(em.detected)
                a = np.radians(angle)
                proj = (xs - 50) * -np.sin(a) + (ys - 50) * np.cos(a)
                side_a = [(int(y), int(x)) for y, x, p in zip(ys, xs, proj) if p < -2]
                side_b = [(int(y), int(x)) for y, x, p in zip(ys, xs, proj) if p > 2]
                assert side_a and side_b
                comp = flood_reachable(union, side_a)
                assert any(comp[s] for s in side_b), f"angle {angle} not bridged"
                bridged += 1
        assert bridged == 20


def test_nrrd_roundtrip_and_patch_locality(criterion, rng):
    with criterion:
        types = ["uint8", "int16", "uint16", "int32", "float32", "float64"]
        for i in range(100):
            nx, ny, nz = (int(rng.integers(1, 65)) for _ in range(3))
            voxel_type = types[i % len(types)]
            encoding = "raw" if i % 2 == 0 else "gzip"
            dtype = np.dtype(voxel_type)
            if np.issubdtype(dtype, np.integer):
                info = np.iinfo(dtype)
                data = rng.integers(
                    info.min, info.max, size=(nz, ny, nx), endpoint=True
                ).astype(dtype)
            else:
                data = (rng.random((nz, ny, nx)) * 2000 - 1000).astype(dtype)
            vol = nrrd.Volume(
                data=data,
                voxel_type=voxel_type,
                encoding=encoding,
                endianness="little" if i % 3 else "big",
            )
            again = nrrd.parse_nrrd(nrrd.write_nrrd(vol))
            assert again.dims == vol.dims
            assert again.voxel_type == voxel_type
            assert again.data.tobytes() == vol.data.tobytes(), f"volume {i}"

        # patch locality: exactly the 10000 footprint voxels change
        z, y, x = np.mgrid[0:3, 0:120, 0:130]
        vol = nrrd.Volume(
            data=(x + y + z + 1).astype(np.int16), voxel_type="int16"
        )
        patch = nrrd.SliceImage(values=np.zeros((100, 100)))
        out = nrrd.apply_axial_patch(vol, 1, (15, 10), patch)
        diff = out.data != vol.data
        assert int(diff.sum()) == 10000  # ramp is nonzero everywhere in range
        footprint = np.zeros_like(diff)
        footprint[1, 10:110, 15:115] = True
        assert not (diff & ~footprint).any()


def _body(rng):
    image = rng.integers(0, 256, (100, 100)).astype(np.uint8)
    hole = np.zeros((100, 100), bool)
    hole[35:65, 40:75] = True
    return {"image": gray_flat_rgba(image), "mask": mask_flat_rgba(hole)}


def test_protocol_roundtrip_size_and_hygiene(criterion, gateway_factory, engine_script, rng):
    with criterion:
        # valid request: 200 with a 40000-length result
        identity = gateway_factory(external_command=engine_script(IDENTITY_ENGINE))
        base = f"http://127.0.0.1:{identity.port}"
        body = _body(rng)
        raw = json.dumps(body).encode()
        assert 100_000 <= len(raw) <= 500_000, f"body {len(raw)} bytes"
        r = requests.post(f"{base}/inpaint", params={"uid": "acc-ok"}, json=body)
        assert r.status_code == 200
        assert len(r.json()["result"]) == 40000

        workdir = identity.gateway.config.working_dir

        # success path hygiene (external engine)
        r = requests.post(
            f"{base}/inpaint", params={"uid": "acc-ext", "engine": "external"}, json=body
        )
        assert r.status_code == 200
        assert list(workdir.glob("acc-ext_*")) == []

        # validation failure hygiene
        bad = dict(body)
        bad["image"] = body["image"][:8]
        r = requests.post(
            f"{base}/inpaint", params={"uid": "acc-bad", "engine": "external"}, json=bad
        )
        assert r.status_code == 400
        assert list(workdir.glob("acc-bad_*")) == []

        # engine failure hygiene
        failing = gateway_factory(external_command=engine_script(FAILING_ENGINE, "fail.py"))
        fb = f"http://127.0.0.1:{failing.port}"
        r = requests.post(
            f"{fb}/inpaint", params={"uid": "acc-fail", "engine": "external"}, json=body
        )
        assert r.status_code == 500
        assert list(failing.gateway.config.working_dir.glob("acc-fail_*")) == []

        # timeout hygiene
        sleepy = gateway_factory(
            external_command=engine_script(SLEEPY_ENGINE, "sleep.py"),
            external_timeout=0.5,
        )
        sb = f"http://127.0.0.1:{sleepy.port}"
        r = requests.post(
            f"{sb}/inpaint", params={"uid": "acc-slow", "engine": "external"}, json=body
        )
        assert r.status_code == 500
        assert list(sleepy.gateway.config.working_dir.glob("acc-slow_*")) == []


def test_timing_structure(criterion, gateway_factory, engine_script, rng):
    with criterion:
        body = _body(rng)

        # segments monotone and consistent; diffusion completes < 2 s
        plain = gateway_factory()
        base = f"http://127.0.0.1:{plain.port}"
        t0 = time.perf_counter()
        r = requests.post(f"{base}/inpaint", params={"uid": "timing-1"}, json=body)
        wall = time.perf_counter() - t0
        assert r.status_code == 200
        assert wall < 2.0, f"diffusion request took {wall:.2f}s"
        t = TimingBreakdown.parse_header(r.headers["X-Inpaint-Timing"])
        assert t.received <= t.engine_start <= t.engine_end <= t.responded
        pre = (t.engine_start - t.received) * 1000
        post = (t.responded - t.engine_end) * 1000
        assert abs((pre + t.engine_ms + post) - t.total_ms) < 5.0

        # engine dominates server time with a 500 ms external engine
        sleepy = gateway_factory(
            external_command=engine_script(DELAYED_IDENTITY_ENGINE, "delayed.py")
        )
        sb = f"http://127.0.0.1:{sleepy.port}"
        r = requests.post(
            f"{sb}/inpaint", params={"uid": "timing-2", "engine": "external"}, json=body
        )
        assert r.status_code == 200
        t = TimingBreakdown.parse_header(r.headers["X-Inpaint-Timing"])
        assert t.engine_ms >= 500.0
        assert t.engine_ms / t.total_ms > 0.8, (
            f"engine share {t.engine_ms / t.total_ms:.1%}"
        )
