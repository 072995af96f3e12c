"""End-to-end check of the serve subcommand over a real socket."""

from __future__ import annotations

import socket
import subprocess
import sys
import time

import httpx
import pytest

from ffprid.core import EvalParams
from ffprid.dataio import GroundTruthTrack, ScoreRecord
from ffprid.engine import run_pipeline, write_run_results
from ffprid.geometry import BoundingBox, DetectionRecord


def eta6_run():
    """One alerted segment whose gallery holds 8 items (top-6 shown)."""
    track = GroundTruthTrack.from_frame_boxes(
        "q1", {f: BoundingBox(0, 0, 10, 20) for f in range(0, 10)}
    )
    detections, scores = [], []
    for i in range(8):
        bbox = BoundingBox(0, 0, 10, 20) if i == 0 else BoundingBox(
            100 + 20 * i, 0, 110 + 20 * i, 20
        )
        detections.append(DetectionRecord(frame=i, det_index=0, bbox=bbox,
                                          confidence=0.9))
        scores.append(ScoreRecord("q1", f"f{i}_d0", 0.9 - 0.05 * i))
    return run_pipeline(
        [track], detections, scores, ["q1"],
        EvalParams(tau=10, beta=0.5, eta=6), total_frames=10,
    )


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.fixture()
def server(tmp_path):
    results_path = tmp_path / "run.json"
    write_run_results(eta6_run(), results_path)
    port = free_port()
    proc = subprocess.Popen(
        [sys.executable, "-m", "ffprid.cli", "serve",
         "--results", str(results_path), "--port", str(port),
         "--audit-log", str(tmp_path / "audit.jsonl")],
        stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL,
    )
    base = f"http://127.0.0.1:{port}"
    try:
        deadline = time.time() + 15
        while True:
            try:
                httpx.get(f"{base}/api/metrics", timeout=1)
                break
            except httpx.TransportError:
                if time.time() > deadline:
                    raise RuntimeError("service did not come up")
                time.sleep(0.1)
        yield base
    finally:
        proc.terminate()
        proc.wait(timeout=10)


def test_full_operator_flow_over_http(server):
    alerts = httpx.get(f"{server}/api/alerts", params={"status": "pending"}).json()
    assert len(alerts["alerts"]) == 1
    alert = alerts["alerts"][0]
    assert len(alert["candidates"]) == 6
    ranked = [c["similarity"] for c in alert["candidates"]]
    assert ranked == sorted(ranked, reverse=True)

    image = httpx.get(server + alert["candidates"][0]["image_url"])
    assert image.status_code == 200
    assert image.headers["content-type"] == "image/png"

    decision = httpx.post(
        f"{server}/api/alerts/{alert['alert_id']}/decision",
        json={"decision": "confirm", "matched_item_id": "f0_d0"},
    )
    assert decision.status_code == 200

    duplicate = httpx.post(
        f"{server}/api/alerts/{alert['alert_id']}/decision",
        json={"decision": "reject"},
    )
    assert duplicate.status_code == 409

    metrics = httpx.get(f"{server}/api/metrics").json()
    assert metrics["validated"]["confirmed_tc"] == 1
    assert metrics["machine"]["tc"] == 1
    assert httpx.get(
        f"{server}/api/alerts", params={"status": "pending"}
    ).json()["alerts"] == []
