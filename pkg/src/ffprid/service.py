"""Alert-queue service: replays a pipeline run for a human operator.

Every TC/TMC/FC segment result becomes one alert, enqueued in segment
order (temporal order of the video, not similarity order). Decisions are
serialized through a single lock, recorded exactly once per alert, and
appended to a JSON-Lines audit log from which the session metrics can be
reconstructed. Silences never reach the operator.

Candidate crops are served from their `crop` file references when present;
metadata-only worlds get generated placeholder tiles showing the item id
and similarity, so the console works without real video data.
"""

from __future__ import annotations

import io
import json
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Literal, Optional

from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, Response
from fastapi.staticfiles import StaticFiles
from PIL import Image, ImageDraw
from pydantic import BaseModel

from .core import ALERT_OUTCOMES, MetricValue, OutcomeCounts, ScoredGalleryItem
from .dataio import PathLike, Segment
from .engine import PipelineResult

PENDING = "pending"
CONFIRMED = "confirmed"
REJECTED = "rejected"


class UnknownAlertError(KeyError):
    pass


class AlertAlreadyDecidedError(RuntimeError):
    pass


@dataclass(frozen=True)
class AlertRecord:
    alert_id: str
    query_id: str
    segment: Segment
    candidates: tuple[ScoredGalleryItem, ...]
    created_at: float
    status: str = PENDING
    decided_item: Optional[str] = None
    decided_at: Optional[float] = None


@dataclass(frozen=True)
class HybridMetrics:
    """Machine outcomes plus what the operator has validated so far."""

    machine: OutcomeCounts
    machine_fr: MetricValue
    machine_tvr: MetricValue
    confirmed_tc: int
    workload: int  # alerts issued to the operator
    decided: int
    pending: int
    validated_fr: MetricValue
    validated_tvr: MetricValue


def _build_alerts(result: PipelineResult, replay_speed: float) -> list[AlertRecord]:
    ordered = sorted(
        (
            r
            for r in result.segment_results
            if r.outcome in ALERT_OUTCOMES
        ),
        key=lambda r: (r.segment.index, result.queries.index(r.query_id)),
    )
    alerts = []
    for i, r in enumerate(ordered, start=1):
        created = r.segment.end_frame / replay_speed if replay_speed > 0 else 0.0
        alerts.append(
            AlertRecord(
                alert_id=f"a{i:05d}",
                query_id=r.query_id,
                segment=r.segment,
                candidates=r.top_eta,
                created_at=created,
            )
        )
    return alerts


class AlertQueue:
    """In-memory alert state with a single-writer decision log.

    replay_speed is in frames per wall-clock second; 0 (the default) means
    immediate replay: every alert is visible from the start.
    """

    def __init__(
        self,
        result: PipelineResult,
        replay_speed: float = 0.0,
        audit_path: Optional[PathLike] = None,
        clock=time.monotonic,
    ):
        self.result = result
        self.replay_speed = replay_speed
        self._clock = clock
        self._start = clock()
        self._lock = threading.Lock()
        self._alerts: dict[str, AlertRecord] = {
            a.alert_id: a for a in _build_alerts(result, replay_speed)
        }
        self.audit_log: list[dict] = []
        self._audit_path = Path(audit_path) if audit_path else None
        if self._audit_path:
            self._audit_path.write_text("", encoding="utf-8")

    def elapsed(self) -> float:
        return self._clock() - self._start

    def _issued(self, alert: AlertRecord) -> bool:
        return alert.created_at <= self.elapsed()

    def alerts(self, status: Optional[str] = None) -> list[AlertRecord]:
        """Issued alerts in creation order, optionally filtered by status."""
        with self._lock:
            issued = sorted(
                (a for a in self._alerts.values() if self._issued(a)),
                key=lambda a: (a.created_at, a.alert_id),
            )
        if status is None:
            return issued
        return [a for a in issued if a.status == status]

    def get(self, alert_id: str) -> AlertRecord:
        try:
            return self._alerts[alert_id]
        except KeyError:
            raise UnknownAlertError(alert_id) from None

    def decide(
        self,
        alert_id: str,
        decision: str,
        matched_item_id: Optional[str] = None,
    ) -> AlertRecord:
        """Record one operator decision; a second decision is a conflict."""
        if decision not in (CONFIRMED, REJECTED):
            raise ValueError(f"decision must be 'confirm' or 'reject', got {decision}")
        with self._lock:
            alert = self._alerts.get(alert_id)
            if alert is None:
                raise UnknownAlertError(alert_id)
            if alert.status != PENDING:
                raise AlertAlreadyDecidedError(alert_id)
            decided = replace(
                alert,
                status=decision,
                decided_item=matched_item_id if decision == CONFIRMED else None,
                decided_at=self.elapsed(),
            )
            self._alerts[alert_id] = decided
            entry = {
                "alert_id": alert_id,
                "decision": decision,
                "matched_item_id": decided.decided_item,
                "decided_at": decided.decided_at,
            }
            self.audit_log.append(entry)
            if self._audit_path:
                with self._audit_path.open("a", encoding="utf-8", newline="\n") as fh:
                    fh.write(json.dumps(entry) + "\n")
        return decided

    def snapshot(self) -> HybridMetrics:
        """Consistent metrics: every decision recorded before the call counts."""
        with self._lock:
            issued = [a for a in self._alerts.values() if self._issued(a)]
            confirmed = sum(1 for a in issued if a.status == CONFIRMED)
            decided = sum(1 for a in issued if a.status != PENDING)
            workload = len(issued)
        machine = self.result.counts
        present = machine.present
        alerts = machine.alerts
        return HybridMetrics(
            machine=machine,
            machine_fr=self.result.fr,
            machine_tvr=self.result.tvr,
            confirmed_tc=confirmed,
            workload=workload,
            decided=decided,
            pending=workload - decided,
            validated_fr=MetricValue(confirmed / present) if present else MetricValue(None),
            validated_tvr=MetricValue(confirmed / alerts) if alerts else MetricValue(None),
        )


def replay_audit_log(result: PipelineResult, audit_path: PathLike) -> AlertQueue:
    """Rebuild a queue by re-applying the decisions of an audit-log file."""
    queue = AlertQueue(result)
    path = Path(audit_path)
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            entry = json.loads(line)
            queue.decide(
                entry["alert_id"], entry["decision"], entry.get("matched_item_id")
            )
    return queue


_DECISIONS = {"confirm": CONFIRMED, "reject": REJECTED}

_TILE_SIZE = (160, 240)


def placeholder_png(lines: list[str], shade: int = 64) -> bytes:
    """A gray tile with the given text lines, for metadata-only worlds."""
    image = Image.new("RGB", _TILE_SIZE, (shade, shade, shade + 16))
    draw = ImageDraw.Draw(image)
    draw.rectangle(
        (2, 2, _TILE_SIZE[0] - 3, _TILE_SIZE[1] - 3), outline=(220, 220, 220)
    )
    for i, line in enumerate(lines):
        draw.text((10, 14 + 18 * i), line, fill=(240, 240, 240))
    buffer = io.BytesIO()
    image.save(buffer, format="PNG")
    return buffer.getvalue()


def _candidate_image_url(alert: AlertRecord, item: ScoredGalleryItem) -> str:
    if item.crop:
        return f"/api/images/crop/{item.crop}"
    return f"/api/images/placeholder/{alert.alert_id}/{item.item_id}.png"


def _alert_to_json(alert: AlertRecord) -> dict:
    return {
        "alert_id": alert.alert_id,
        "query_id": alert.query_id,
        "segment": {
            "index": alert.segment.index,
            "start_frame": alert.segment.start_frame,
            "end_frame": alert.segment.end_frame,
        },
        "query_image_url": f"/api/images/placeholder/{alert.alert_id}/query.png",
        "candidates": [
            {
                "item_id": item.item_id,
                "similarity": item.similarity,
                "image_url": _candidate_image_url(alert, item),
            }
            for item in alert.candidates
        ],
        "created_at": alert.created_at,
        "status": alert.status,
        "decided_item": alert.decided_item,
    }


def _metric_json(m: MetricValue) -> Optional[float]:
    return m.value if m.defined else None


class DecisionBody(BaseModel):
    decision: Literal["confirm", "reject"]
    matched_item_id: Optional[str] = None


def create_app(
    queue: AlertQueue,
    crops_root: Optional[PathLike] = None,
    static_dir: Optional[PathLike] = None,
) -> FastAPI:
    """Wire an AlertQueue to the HTTP + JSON protocol."""
    app = FastAPI(title="ffprid alert service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    crops_root = Path(crops_root).resolve() if crops_root else None

    @app.get("/api/alerts")
    def list_alerts(status: Optional[str] = Query(default=None)):
        if status is not None and status not in (PENDING, CONFIRMED, REJECTED):
            raise HTTPException(status_code=400, detail=f"unknown status {status!r}")
        alerts = queue.alerts(status=status)
        return {"alerts": [_alert_to_json(a) for a in alerts]}

    @app.post("/api/alerts/{alert_id}/decision")
    def record_decision(alert_id: str, body: DecisionBody):
        try:
            decided = queue.decide(
                alert_id, _DECISIONS[body.decision], body.matched_item_id
            )
        except UnknownAlertError:
            raise HTTPException(status_code=404, detail=f"unknown alert {alert_id}")
        except AlertAlreadyDecidedError:
            raise HTTPException(
                status_code=409, detail=f"alert {alert_id} already decided"
            )
        return _alert_to_json(decided)

    @app.get("/api/metrics")
    def metrics():
        snap = queue.snapshot()
        return {
            "machine": {
                "tc": snap.machine.tc,
                "tmc": snap.machine.tmc,
                "fs": snap.machine.fs,
                "fc": snap.machine.fc,
                "ts": snap.machine.ts,
                "fr": _metric_json(snap.machine_fr),
                "tvr": _metric_json(snap.machine_tvr),
            },
            "validated": {
                "confirmed_tc": snap.confirmed_tc,
                "fr": _metric_json(snap.validated_fr),
                "tvr": _metric_json(snap.validated_tvr),
            },
            "workload": snap.workload,
            "decided": snap.decided,
            "pending": snap.pending,
        }

    @app.get("/api/images/{ref:path}")
    def image(ref: str):
        if ref.startswith("placeholder/"):
            parts = ref.split("/")
            if len(parts) != 3:
                raise HTTPException(status_code=404, detail="bad placeholder ref")
            _, alert_id, name = parts
            try:
                alert = queue.get(alert_id)
            except UnknownAlertError:
                raise HTTPException(status_code=404, detail=f"unknown alert {alert_id}")
            if name == "query.png":
                png = placeholder_png(["query", alert.query_id], shade=32)
                return Response(content=png, media_type="image/png")
            item_id = name.removesuffix(".png")
            for item in alert.candidates:
                if item.item_id == item_id:
                    png = placeholder_png(
                        [item.item_id, f"sim {item.similarity:.3f}",
                         item.true_identity or ""]
                    )
                    return Response(content=png, media_type="image/png")
            raise HTTPException(status_code=404, detail=f"unknown item {item_id}")
        if ref.startswith("crop/"):
            if crops_root is None:
                raise HTTPException(status_code=404, detail="no crops directory")
            target = (crops_root / ref[len("crop/"):]).resolve()
            if not target.is_relative_to(crops_root) or not target.is_file():
                raise HTTPException(status_code=404, detail="crop not found")
            return FileResponse(target)
        raise HTTPException(status_code=404, detail="unknown image ref")

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="console")

    return app
