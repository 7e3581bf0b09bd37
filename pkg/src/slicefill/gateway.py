"""HTTP service: the inpaint route plus volume-session plumbing.

Routes (HTTP/1.1, JSON unless noted):

* ``POST /inpaint?uid=<id>&engine=<e>`` -- body
  ``{"image": [...40000 ints], "mask": [...40000 ints]}``; 200 with
  ``{"result": [...40000]}``, 4xx/5xx with ``{"error": "..."}``. Timing
  breakdown goes out in the ``X-Inpaint-Timing`` header.
* ``POST /volumes`` -- raw NRRD body -> ``{volume_id, dims, voxel_type}``.
* ``GET /volumes/{id}/slices/{k}?window=&level=`` -> ``image/png``.
* ``POST /volumes/{id}/slices/{k}/patch`` -- body
  ``{"origin": [x0, y0], "result": [...40000]}``.
* ``GET /volumes/{id}/download`` -> NRRD bytes.
* ``GET /healthz`` -> ``{"ok": true}``.

Volumes live in an in-memory store with TTL eviction and an LRU cap;
each holds a write lock so patches serialize per volume while readers
stay lock-free on the immutable snapshots.
"""

from __future__ import annotations

import json
import re
import secrets
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlsplit

from . import nrrd
from .errors import (
    BadOutput,
    EngineFailed,
    EngineTimeout,
    IndexOutOfRange,
    PatchOutOfBounds,
    SliceFillError,
)
from .inpaint import (
    UID_PATTERN,
    DiffusionConfig,
    EngineConfig,
    ExternalConfig,
    FastMarchingConfig,
    run_pipeline,
)
from .maskproc import binarize_mask, reduce_grayscale, validate_pair
from .raster import PixelBuffer, encode_png, window_level

__all__ = [
    "GatewayConfig",
    "TimingBreakdown",
    "VolumeStore",
    "InpaintGateway",
    "GatewayServer",
    "DEFAULT_WINDOW",
    "DEFAULT_LEVEL",
]

DEFAULT_WINDOW = 400.0
DEFAULT_LEVEL = 40.0

FLAT_LEN = 100 * 100 * 4

_ENGINE_PARAM = {"diffusion": "diffusion", "fmm": "fast_marching", "external": "external"}


@dataclass
class GatewayConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    working_dir: Path = field(default_factory=lambda: Path("/tmp/slicefill-work"))
    default_engine: str = "diffusion"
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    fast_marching: FastMarchingConfig = field(default_factory=FastMarchingConfig)
    external_command: tuple[str, ...] | None = None
    external_timeout: float = 30.0
    session_ttl: float = 7200.0  # seconds
    session_cap: int = 32
    static_dir: Path | None = None  # optional front-end bundle served at /

    def __post_init__(self):
        self.working_dir = Path(self.working_dir)
        if self.default_engine not in _ENGINE_PARAM:
            raise ValueError(f"default_engine must be one of {sorted(_ENGINE_PARAM)}")


@dataclass(frozen=True)
class TimingBreakdown:
    """Monotonic stamps for one inpaint request, seconds."""

    received: float
    engine_start: float
    engine_end: float
    responded: float

    def __post_init__(self):
        if not (self.received <= self.engine_start <= self.engine_end <= self.responded):
            raise ValueError("timing stamps must be monotone")

    @property
    def total_ms(self) -> float:
        return (self.responded - self.received) * 1000.0

    @property
    def engine_ms(self) -> float:
        return (self.engine_end - self.engine_start) * 1000.0

    @property
    def overhead_ms(self) -> float:
        return self.total_ms - self.engine_ms

    def to_header(self) -> str:
        """Millisecond offsets from ``received``."""
        base = self.received
        parts = [
            ("received", 0.0),
            ("engine_start", (self.engine_start - base) * 1000.0),
            ("engine_end", (self.engine_end - base) * 1000.0),
            ("responded", (self.responded - base) * 1000.0),
        ]
        return ",".join(f"{k}={v:.3f}" for k, v in parts)

    @classmethod
    def parse_header(cls, header: str) -> "TimingBreakdown":
        vals = {}
        for item in header.split(","):
            k, _, v = item.partition("=")
            vals[k.strip()] = float(v) / 1000.0
        return cls(
            received=vals["received"],
            engine_start=vals["engine_start"],
            engine_end=vals["engine_end"],
            responded=vals["responded"],
        )


class _RequestError(Exception):
    """Internal carrier for an HTTP error response."""

    def __init__(self, status: int, message: str, fields: list[str] | None = None):
        super().__init__(message)
        self.status = status
        self.message = message
        self.fields = fields


@dataclass
class _VolumeEntry:
    volume: nrrd.Volume
    write_lock: threading.Lock = field(default_factory=threading.Lock)
    last_access: float = field(default_factory=time.monotonic)


class VolumeStore:
    """In-memory volume sessions: TTL eviction plus an LRU size cap."""

    def __init__(self, ttl: float = 7200.0, cap: int = 32):
        self._ttl = ttl
        self._cap = max(1, cap)
        self._entries: dict[str, _VolumeEntry] = {}
        self._lock = threading.RLock()

    def _evict(self) -> None:
        now = time.monotonic()
        expired = [k for k, e in self._entries.items() if now - e.last_access > self._ttl]
        for k in expired:
            del self._entries[k]
        while len(self._entries) > self._cap:
            oldest = min(self._entries, key=lambda k: self._entries[k].last_access)
            del self._entries[oldest]

    def put(self, volume: nrrd.Volume) -> str:
        with self._lock:
            volume_id = secrets.token_hex(8)
            self._entries[volume_id] = _VolumeEntry(volume=volume)
            self._evict()
            return volume_id

    def entry(self, volume_id: str) -> _VolumeEntry | None:
        with self._lock:
            self._evict()
            e = self._entries.get(volume_id)
            if e is not None:
                e.last_access = time.monotonic()
            return e

    def get(self, volume_id: str) -> nrrd.Volume | None:
        e = self.entry(volume_id)
        return e.volume if e else None

    def replace(self, volume_id: str, volume: nrrd.Volume) -> None:
        with self._lock:
            e = self._entries.get(volume_id)
            if e is not None:
                e.volume = volume
                e.last_access = time.monotonic()

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)


class InpaintGateway:
    """Route handlers, independent of the HTTP plumbing for testability."""

    def __init__(self, config: GatewayConfig):
        self.config = config
        self.store = VolumeStore(ttl=config.session_ttl, cap=config.session_cap)
        self.config.working_dir.mkdir(parents=True, exist_ok=True)
        self._active = 0
        self._idle = threading.Condition()

    @contextmanager
    def track_request(self):
        """Counts in-flight dispatches so shutdown can wait for them
        (idle keep-alive connections are not in-flight work)."""
        with self._idle:
            self._active += 1
        try:
            yield
        finally:
            with self._idle:
                self._active -= 1
                self._idle.notify_all()

    def wait_idle(self, timeout: float = 30.0) -> bool:
        with self._idle:
            return self._idle.wait_for(lambda: self._active == 0, timeout=timeout)

    # -- helpers --

    def _engine_config(self, engine_param: str | None) -> EngineConfig:
        name = engine_param or self.config.default_engine
        if name not in _ENGINE_PARAM:
            raise _RequestError(
                400, f"unknown engine {name!r}; expected diffusion|fmm|external",
                fields=["engine"],
            )
        kind = _ENGINE_PARAM[name]
        external = None
        if kind == "external":
            if not self.config.external_command:
                raise _RequestError(
                    400, "external engine requested but no command configured",
                    fields=["engine"],
                )
            external = ExternalConfig(
                command=self.config.external_command,
                working_dir=self.config.working_dir,
                timeout=self.config.external_timeout,
            )
        return EngineConfig(
            kind=kind,
            diffusion=self.config.diffusion,
            fast_marching=self.config.fast_marching,
            external=external,
        )

    @staticmethod
    def _flat_rgba(body: dict, key: str) -> PixelBuffer:
        values = body.get(key)
        if not isinstance(values, list) or len(values) != FLAT_LEN:
            raise _RequestError(
                400,
                f"field {key!r} must be a flat array of {FLAT_LEN} integers",
                fields=[key],
            )
        try:
            return PixelBuffer.from_flat(values, 100, 100)
        except (ValueError, TypeError) as exc:
            raise _RequestError(400, f"field {key!r}: {exc}", fields=[key])

    # -- routes --

    def handle_inpaint(
        self, uid: str | None, engine_param: str | None, body: dict, received: float
    ) -> tuple[int, dict, TimingBreakdown, dict[str, str]]:
        engine_start = engine_end = received
        extra_headers: dict[str, str] = {}

        def breakdown() -> TimingBreakdown:
            return TimingBreakdown(
                received=received,
                engine_start=engine_start,
                engine_end=engine_end,
                responded=time.monotonic(),
            )

        try:
            if not uid or not UID_PATTERN.match(uid):
                raise _RequestError(
                    400, "uid must match [A-Za-z0-9_-]{1,64}", fields=["uid"]
                )
            cfg = self._engine_config(engine_param)
            image_buf = self._flat_rgba(body, "image")
            mask_buf = self._flat_rgba(body, "mask")

            gray, divergent = reduce_grayscale(image_buf)
            if divergent:
                # tolerated (red wins) but surfaced for client debugging
                extra_headers["X-Channel-Divergence"] = str(divergent)
            mask = binarize_mask(mask_buf)
            report = validate_pair(gray, mask)
            if report.mask_empty:
                raise _RequestError(400, "mask selects no pixels", fields=["mask"])
            if report.mask_full:
                raise _RequestError(
                    400, "mask covers the whole patch; no context left", fields=["mask"]
                )

            engine_start = time.monotonic()
            result = run_pipeline(gray, mask, cfg, uid=uid)
            engine_end = time.monotonic()

            payload = {"result": result.image.to_rgba().to_flat()}
            return 200, payload, breakdown(), extra_headers
        except _RequestError as exc:
            engine_end = max(engine_end, engine_start)
            body_out: dict = {"error": exc.message}
            if exc.fields:
                body_out["fields"] = exc.fields
            return exc.status, body_out, breakdown(), extra_headers
        except (EngineFailed, EngineTimeout, BadOutput) as exc:
            engine_end = time.monotonic()
            return 500, {"error": str(exc)}, breakdown(), extra_headers
        except SliceFillError as exc:
            engine_end = max(engine_end, engine_start)
            return 400, {"error": str(exc)}, breakdown(), extra_headers

    def handle_upload(self, body: bytes) -> tuple[int, dict]:
        try:
            volume = nrrd.parse_nrrd(body)
        except SliceFillError as exc:
            return 400, {"error": f"{type(exc).__name__}: {exc}"}
        volume_id = self.store.put(volume)
        return 200, {
            "volume_id": volume_id,
            "dims": list(volume.dims),
            "voxel_type": volume.voxel_type,
        }

    def handle_slice(
        self, volume_id: str, k_text: str, window: float, level: float
    ) -> tuple[int, bytes | dict, str]:
        volume = self.store.get(volume_id)
        if volume is None:
            return 404, {"error": f"unknown volume {volume_id!r}"}, "application/json"
        try:
            k = int(k_text)
        except ValueError:
            return 400, {"error": f"slice index {k_text!r} not an integer"}, "application/json"
        try:
            slc = nrrd.extract_axial_slice(volume, k)
            gray = window_level(slc.values, window, level)
        except SliceFillError as exc:
            return 400, {"error": f"{type(exc).__name__}: {exc}"}, "application/json"
        return 200, encode_png(gray), "image/png"

    def handle_patch(self, volume_id: str, k_text: str, body: dict) -> tuple[int, dict]:
        entry = self.store.entry(volume_id)
        if entry is None:
            return 404, {"error": f"unknown volume {volume_id!r}"}
        try:
            k = int(k_text)
        except ValueError:
            return 400, {"error": f"slice index {k_text!r} not an integer"}
        origin = body.get("origin")
        if (
            not isinstance(origin, list)
            or len(origin) != 2
            or not all(isinstance(v, int) for v in origin)
        ):
            return 400, {"error": "field 'origin' must be [x0, y0]", "fields": ["origin"]}
        try:
            buf = self._flat_rgba(body, "result")
        except _RequestError as exc:
            return exc.status, {"error": exc.message, "fields": exc.fields or []}
        gray, _ = reduce_grayscale(buf)
        patch = nrrd.SliceImage(values=gray.pixels, slice_index=k)
        with entry.write_lock:
            current = entry.volume
            try:
                updated = nrrd.apply_axial_patch(current, k, (origin[0], origin[1]), patch)
            except (PatchOutOfBounds, IndexOutOfRange, SliceFillError) as exc:
                return 400, {"error": f"{type(exc).__name__}: {exc}"}
            self.store.replace(volume_id, updated)
        return 200, {"ok": True}

    def handle_download(self, volume_id: str) -> tuple[int, bytes | dict, str]:
        volume = self.store.get(volume_id)
        if volume is None:
            return 404, {"error": f"unknown volume {volume_id!r}"}, "application/json"
        return 200, nrrd.write_nrrd(volume), "application/octet-stream"


_ROUTE_SLICE = re.compile(r"^/volumes/([0-9a-f]+)/slices/(-?\d+)$")
_ROUTE_PATCH = re.compile(r"^/volumes/([0-9a-f]+)/slices/(-?\d+)/patch$")
_ROUTE_DOWNLOAD = re.compile(r"^/volumes/([0-9a-f]+)/download$")


def _make_handler(gateway: InpaintGateway):
    class Handler(BaseHTTPRequestHandler):
        server_version = "slicefill"
        protocol_version = "HTTP/1.1"
        timeout = 60  # reap dead idle keep-alive connections

        def log_message(self, fmt, *args):  # keep test output quiet
            pass

        # -- plumbing --

        def _read_body(self) -> bytes:
            length = int(self.headers.get("Content-Length", "0") or "0")
            return self.rfile.read(length) if length > 0 else b""

        def _send(
            self,
            status: int,
            payload: bytes,
            content_type: str,
            extra: dict[str, str] | None = None,
        ) -> None:
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(payload)))
            self.send_header("Access-Control-Allow-Origin", "*")
            for k, v in (extra or {}).items():
                self.send_header(k, v)
            self.end_headers()
            self.wfile.write(payload)

        def _send_json(
            self, status: int, obj: dict, extra: dict[str, str] | None = None
        ) -> None:
            self._send(
                status,
                json.dumps(obj).encode("utf-8"),
                "application/json",
                extra,
            )

        def do_OPTIONS(self):
            self.send_response(204)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Content-Length", "0")
            self.end_headers()

        # -- dispatch --

        def do_POST(self):
            with gateway.track_request():
                self._post()

        def do_GET(self):
            with gateway.track_request():
                self._get()

        def _post(self):
            received = time.monotonic()
            url = urlsplit(self.path)
            query = parse_qs(url.query)
            raw = self._read_body()

            if url.path == "/inpaint":
                try:
                    body = json.loads(raw.decode("utf-8"))
                    if not isinstance(body, dict):
                        raise ValueError("body must be a JSON object")
                except (ValueError, UnicodeDecodeError) as exc:
                    self._send_json(400, {"error": f"body not valid JSON: {exc}"})
                    return
                uid = query.get("uid", [None])[0]
                engine = query.get("engine", [None])[0]
                status, payload, timing, extra = gateway.handle_inpaint(
                    uid, engine, body, received
                )
                extra["X-Inpaint-Timing"] = timing.to_header()
                self._send_json(status, payload, extra=extra)
                return

            if url.path == "/volumes":
                status, payload = gateway.handle_upload(raw)
                self._send_json(status, payload)
                return

            m = _ROUTE_PATCH.match(url.path)
            if m:
                try:
                    body = json.loads(raw.decode("utf-8"))
                    if not isinstance(body, dict):
                        raise ValueError("body must be a JSON object")
                except (ValueError, UnicodeDecodeError) as exc:
                    self._send_json(400, {"error": f"body not valid JSON: {exc}"})
                    return
                status, payload = gateway.handle_patch(m.group(1), m.group(2), body)
                self._send_json(status, payload)
                return

            self._send_json(404, {"error": f"no such route: POST {url.path}"})

        def _get(self):
            url = urlsplit(self.path)
            query = parse_qs(url.query)

            if url.path in ("/healthz", "/health"):
                self._send_json(200, {"ok": True})
                return

            m = _ROUTE_SLICE.match(url.path)
            if m:
                try:
                    window = float(query.get("window", [DEFAULT_WINDOW])[0])
                    level = float(query.get("level", [DEFAULT_LEVEL])[0])
                except ValueError:
                    self._send_json(400, {"error": "window/level must be numbers"})
                    return
                status, payload, ctype = gateway.handle_slice(
                    m.group(1), m.group(2), window, level
                )
                if isinstance(payload, dict):
                    self._send_json(status, payload)
                else:
                    self._send(status, payload, ctype)
                return

            m = _ROUTE_DOWNLOAD.match(url.path)
            if m:
                status, payload, ctype = gateway.handle_download(m.group(1))
                if isinstance(payload, dict):
                    self._send_json(status, payload)
                else:
                    self._send(
                        status,
                        payload,
                        ctype,
                        extra={
                            "Content-Disposition": f'attachment; filename="{m.group(1)}.nrrd"'
                        },
                    )
                return

            if gateway.config.static_dir is not None:
                if self._serve_static(url.path):
                    return

            self._send_json(404, {"error": f"no such route: GET {url.path}"})

        def _serve_static(self, path: str) -> bool:
            root = gateway.config.static_dir.resolve()
            rel = path.lstrip("/") or "index.html"
            target = (root / rel).resolve()
            if not str(target).startswith(str(root)) or not target.is_file():
                return False
            ctype = {
                ".html": "text/html",
                ".js": "application/javascript",
                ".css": "text/css",
                ".png": "image/png",
                ".svg": "image/svg+xml",
                ".map": "application/json",
            }.get(target.suffix, "application/octet-stream")
            self._send(200, target.read_bytes(), ctype)
            return True

    return Handler


class GatewayServer:
    """Owns the listening socket and serve loop; usable embedded or standalone."""

    def __init__(self, config: GatewayConfig):
        self.gateway = InpaintGateway(config)
        # Binding happens here, so callers see OSError for port conflicts
        # before any serving thread starts.
        self._httpd = ThreadingHTTPServer(
            (config.host, config.port), _make_handler(self.gateway)
        )
        # Handler threads are daemons: shutdown waits for in-flight
        # dispatches via the gateway's counter, while threads merely
        # parked on idle keep-alive connections must not block exit.
        self._httpd.daemon_threads = True
        self._httpd.block_on_close = False
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def host(self) -> str:
        return self._httpd.server_address[0]

    def start_background(self) -> None:
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def shutdown(self) -> None:
        self._httpd.shutdown()
        if self._thread is not None:
            self._thread.join(timeout=10)
        self.close()

    def close(self) -> None:
        """Stop listening after in-flight requests complete."""
        self.gateway.wait_idle(timeout=30.0)
        self._httpd.server_close()
