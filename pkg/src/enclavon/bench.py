"""Gateway round-trip latency report over a real local TCP socket.

Runs an echo function through the full stack (encode, frame, socket, serve
loop, reply) and reports the distribution. Informational only; there is no
pass/fail threshold. Writes the raw samples as CSV and a histogram figure
next to it.
"""

from __future__ import annotations

import csv
import socket
import statistics
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from .runtime import App, Channel, Gateway, Role, WireCapture, enclave_handshake, serve_loop
from .wire import I64


@dataclass(frozen=True)
class BenchReport:
    rounds: int
    mean_ms: float
    median_ms: float
    p95_ms: float
    csv_path: Path
    fig_path: Path

    def summary(self) -> str:
        return (
            f"mean local-socket gateway round-trip: {self.mean_ms:.3f} ms "
            f"(median {self.median_ms:.3f} ms, p95 {self.p95_ms:.3f} ms, "
            f"{self.rounds} rounds)"
        )


def _build(app: App):
    handle = app.register_function("echo", lambda n: n, arg_codecs=(I64,), result_codec=I64)
    return handle


def run_bench(rounds: int = 500, out_dir: str | Path = "bench_out", warmup: int = 20) -> BenchReport:
    if rounds < 1:
        raise ValueError("need at least one round")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    enclave_app = App(Role.ENCLAVE)
    _build(enclave_app)
    enclave_app.seal()

    listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    listener.bind(("127.0.0.1", 0))
    listener.listen(1)
    port = listener.getsockname()[1]

    def serve() -> None:
        conn, _ = listener.accept()
        listener.close()
        channel = Channel(conn, sent_direction=WireCapture.E2C)
        try:
            enclave_handshake(enclave_app, channel)
            serve_loop(enclave_app, channel)
        finally:
            channel.close()

    thread = threading.Thread(target=serve, daemon=True)
    thread.start()

    client_app = App(Role.CLIENT)
    handle = _build(client_app)
    client_app.seal()
    sock = socket.create_connection(("127.0.0.1", port), timeout=10)
    channel = Channel(sock)
    channel.set_timeout(10_000)
    gw = Gateway(channel)
    gw.handshake(client_app)

    samples_ms: list[float] = []
    try:
        for i in range(warmup):
            gw.call(handle, i)
        for i in range(rounds):
            t0 = time.perf_counter()
            got = gw.call(handle, i)
            samples_ms.append((time.perf_counter() - t0) * 1000)
            assert got == i
    finally:
        channel.close()
        thread.join(timeout=5)

    csv_path = out / "latency.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "latency_ms"])
        writer.writerows((i, f"{ms:.6f}") for i, ms in enumerate(samples_ms))

    fig_path = out / "latency.png"
    _plot_histogram(samples_ms, fig_path)

    ordered = sorted(samples_ms)
    return BenchReport(
        rounds=rounds,
        mean_ms=statistics.fmean(samples_ms),
        median_ms=statistics.median(samples_ms),
        p95_ms=ordered[min(len(ordered) - 1, int(0.95 * len(ordered)))],
        csv_path=csv_path,
        fig_path=fig_path,
    )


def _plot_histogram(samples_ms: list[float], path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.hist(samples_ms, bins=40, color="#4878a8", edgecolor="white")
    ax.set_xlabel("gateway round-trip (ms)")
    ax.set_ylabel("count")
    ax.set_title("local-socket gateway latency")
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
