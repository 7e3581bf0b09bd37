"""Timing benchmark: real loopback requests against an embedded gateway.

One inpaint round-trip decomposes into five segments:

    client_prep | network | server_overhead | engine | client_handle

client_prep and client_handle are measured around the request; the
server reports its own received/engine/responded stamps in the
X-Inpaint-Timing header; network is what remains of the round-trip after
subtracting server time. The five segments sum to the measured total by
construction, so percentage shares always add up to 100.
"""

from __future__ import annotations

import json
import time
import urllib.request
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gateway import GatewayConfig, GatewayServer, TimingBreakdown
from .raster import BinaryMask, GrayImage

__all__ = ["SEGMENTS", "BenchResult", "run_bench", "format_table", "format_tsv", "write_report"]

SEGMENTS = ("client_prep", "network", "server_overhead", "engine", "client_handle")


@dataclass
class BenchResult:
    engine: str
    runs: int
    samples: dict[str, list[float]]  # segment -> ms per run

    @property
    def totals(self) -> list[float]:
        return [
            sum(self.samples[seg][i] for seg in SEGMENTS) for i in range(self.runs)
        ]

    def mean(self, seg: str) -> float:
        return sum(self.samples[seg]) / self.runs

    def shares(self) -> dict[str, float]:
        total = sum(self.mean(seg) for seg in SEGMENTS)
        if total <= 0:
            return {seg: 0.0 for seg in SEGMENTS}
        return {seg: 100.0 * self.mean(seg) / total for seg in SEGMENTS}


def fixture_pair() -> tuple[GrayImage, BinaryMask]:
    """Deterministic CT-ish patch: smooth background, bright disk, and a
    blob mask over part of the disk."""
    yy, xx = np.mgrid[0:100, 0:100].astype(np.float64)
    background = 60.0 + 0.6 * xx + 0.25 * yy
    disk = ((xx - 50) ** 2 + (yy - 50) ** 2) <= 20 ** 2
    img = background.copy()
    img[disk] = 200.0
    image = GrayImage(np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8))
    hole = ((xx - 56) ** 2 + (yy - 47) ** 2) <= 14 ** 2
    return image, BinaryMask.from_bool(hole)


def _post_inpaint(port: int, uid: str, engine: str, body: bytes):
    req = urllib.request.Request(
        f"http://127.0.0.1:{port}/inpaint?uid={uid}&engine={engine}",
        data=body,
        headers={"Content-Type": "application/json"},
        method="POST",
    )
    with urllib.request.urlopen(req, timeout=120) as resp:
        return resp.read(), resp.headers.get("X-Inpaint-Timing", "")


def run_bench(
    n: int,
    engine: str = "diffusion",
    external_command: tuple[str, ...] | None = None,
    external_timeout: float = 60.0,
    working_dir: Path | None = None,
) -> BenchResult:
    """Run ``n`` self-requests over loopback HTTP and collect segments."""
    if n < 1:
        raise ValueError("n must be >= 1")
    config = GatewayConfig(
        host="127.0.0.1",
        port=0,
        external_command=external_command,
        external_timeout=external_timeout,
    )
    if working_dir is not None:
        config.working_dir = Path(working_dir)
    server = GatewayServer(config)
    server.start_background()
    try:
        image, mask = fixture_pair()
        samples: dict[str, list[float]] = {seg: [] for seg in SEGMENTS}
        for i in range(n):
            t0 = time.perf_counter()
            payload = {
                "image": image.to_rgba().to_flat(),
                "mask": mask.pixels.repeat(4).tolist(),
            }
            # mask wire format is RGBA too: R carries the stroke
            body = json.dumps(payload).encode("utf-8")
            t1 = time.perf_counter()
            raw, timing_header = _post_inpaint(server.port, f"bench-{i:04d}", engine, body)
            t2 = time.perf_counter()
            parsed = json.loads(raw.decode("utf-8"))
            if "result" not in parsed:
                raise RuntimeError(f"bench request failed: {parsed.get('error')}")
            np.asarray(parsed["result"], dtype=np.uint8)
            t3 = time.perf_counter()

            timing = TimingBreakdown.parse_header(timing_header)
            roundtrip_ms = (t2 - t1) * 1000.0
            server_ms = timing.total_ms
            samples["client_prep"].append((t1 - t0) * 1000.0)
            samples["network"].append(max(0.0, roundtrip_ms - server_ms))
            samples["server_overhead"].append(timing.overhead_ms)
            samples["engine"].append(timing.engine_ms)
            samples["client_handle"].append((t3 - t2) * 1000.0)
        return BenchResult(engine=engine, runs=n, samples=samples)
    finally:
        server.shutdown()


def _stats(values: list[float]) -> tuple[float, float, float]:
    return (sum(values) / len(values), min(values), max(values))


def format_table(result: BenchResult) -> str:
    shares = result.shares()
    lines = [
        f"inpaint timing over {result.runs} run(s), engine={result.engine}",
        f"{'segment':<16}{'mean ms':>10}{'min ms':>10}{'max ms':>10}{'share %':>9}",
    ]
    for seg in SEGMENTS:
        mean, lo, hi = _stats(result.samples[seg])
        lines.append(f"{seg:<16}{mean:>10.2f}{lo:>10.2f}{hi:>10.2f}{shares[seg]:>9.1f}")
    mean, lo, hi = _stats(result.totals)
    lines.append(f"{'total':<16}{mean:>10.2f}{lo:>10.2f}{hi:>10.2f}{100.0:>9.1f}")
    return "\n".join(lines)


def format_tsv(result: BenchResult) -> str:
    shares = result.shares()
    rows = ["segment\tmean_ms\tmin_ms\tmax_ms\tshare_pct"]
    for seg in SEGMENTS:
        mean, lo, hi = _stats(result.samples[seg])
        rows.append(f"{seg}\t{mean:.3f}\t{lo:.3f}\t{hi:.3f}\t{shares[seg]:.2f}")
    mean, lo, hi = _stats(result.totals)
    rows.append(f"total\t{mean:.3f}\t{lo:.3f}\t{hi:.3f}\t100.00")
    return "\n".join(rows)


def write_report(result: BenchResult, out_dir: Path) -> list[Path]:
    """Write the TSV table plus two figures into ``out_dir``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    tsv_path = out_dir / "bench.tsv"
    tsv_path.write_text(format_tsv(result) + "\n")
    written.append(tsv_path)

    means = [result.mean(seg) for seg in SEGMENTS]
    mins = [min(result.samples[seg]) for seg in SEGMENTS]
    maxs = [max(result.samples[seg]) for seg in SEGMENTS]
    xs = np.arange(len(SEGMENTS))

    fig, ax = plt.subplots(figsize=(7, 4))
    yerr = [
        [m - lo for m, lo in zip(means, mins)],
        [hi - m for m, hi in zip(means, maxs)],
    ]
    ax.bar(xs, means, yerr=yerr, capsize=4, color="#4878a8")
    ax.set_xticks(xs)
    ax.set_xticklabels(SEGMENTS, rotation=20, ha="right")
    ax.set_ylabel("time (ms)")
    ax.set_title(f"inpaint request segments, engine={result.engine}, n={result.runs}")
    fig.tight_layout()
    seg_path = out_dir / "bench_segments.png"
    fig.savefig(seg_path, dpi=120)
    plt.close(fig)
    written.append(seg_path)

    shares = result.shares()
    fig, ax = plt.subplots(figsize=(7, 2.8))
    left = 0.0
    for seg in SEGMENTS:
        ax.barh([0], [shares[seg]], left=left, label=seg)
        if shares[seg] >= 4.0:
            ax.text(
                left + shares[seg] / 2, 0, f"{shares[seg]:.0f}%",
                ha="center", va="center", fontsize=8, color="white",
            )
        left += shares[seg]
    ax.set_xlim(0, 100)
    ax.set_yticks([])
    ax.set_xlabel("share of total (%)")
    ax.legend(loc="upper center", bbox_to_anchor=(0.5, -0.35), ncol=5, fontsize=8)
    fig.tight_layout()
    share_path = out_dir / "bench_shares.png"
    fig.savefig(share_path, dpi=120)
    plt.close(fig)
    written.append(share_path)

    return written
