"""Append-only JSON-lines event store with an in-memory index.

Every mutation is one appended line: {"seq", "type", "at", "payload"}. The
index (current detection states, audit trails, processed-scene keys) is
rebuilt by replaying the log at open, so a crash between an append and any
in-memory bookkeeping loses nothing. A torn trailing line from a crashed
writer is ignored on replay.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

from ..analysis import DetectionRecord
from ..errors import ConflictError, NotFoundError

LOG_NAME = "events.jsonl"


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass(frozen=True)
class NotificationRecord:
    """Draft notification for a confirmed detection."""

    notification_id: str
    detection_id: str
    site_id: str
    site_name: str
    country: str
    operator: str  # "unknown" when not resolvable
    flux_t_per_h: float
    prior_detection_count: int
    plume_image_ref: str
    issued_at: str
    recipient_role: str = "government"
    status: str = "draft"

    def __post_init__(self):
        if self.prior_detection_count < 0:
            raise ValueError("prior detection count must be >= 0")
        if self.recipient_role not in ("government", "operator"):
            raise ValueError(f"bad recipient role {self.recipient_role!r}")
        if self.status not in ("draft", "issued", "feedback_received"):
            raise ValueError(f"bad notification status {self.status!r}")

    def to_json_dict(self) -> dict:
        return dict(self.__dict__)


class AlertStore:
    """Single-writer event log; readers query the replayed index."""

    def __init__(self, root, clock=utc_now):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.log_path = self.root / LOG_NAME
        self.clock = clock
        self.seq = 0
        self.detections: dict[str, DetectionRecord] = {}
        self.audit: dict[str, list[dict]] = {}
        self.notifications: list[NotificationRecord] = []
        self.scene_events: list[dict] = []
        self._scene_keys: set[tuple[str, str]] = set()
        self._replay()

    # -- log plumbing -----------------------------------------------------

    def _replay(self) -> None:
        if not self.log_path.exists():
            return
        with open(self.log_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    event = json.loads(line)
                except json.JSONDecodeError:
                    break  # torn trailing write; everything before it is good
                self._apply(event)

    def _append(self, event_type: str, payload: dict) -> dict:
        event = {
            "seq": self.seq + 1,
            "type": event_type,
            "at": self.clock(),
            "payload": payload,
        }
        with open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
        self._apply(event)
        return event

    def _apply(self, event: dict) -> None:
        if event["seq"] <= self.seq:
            raise ConflictError(f"non-monotonic sequence {event['seq']} after {self.seq}")
        self.seq = event["seq"]
        payload = event["payload"]
        kind = event["type"]
        if kind == "detection":
            record = DetectionRecord.from_json_dict(payload)
            self.detections[record.detection_id] = record
            self.audit.setdefault(record.detection_id, []).append(event)
        elif kind == "review":
            rec = self.detections[payload["detection_id"]]
            self.detections[rec.detection_id] = replace(
                rec,
                review_status=payload["verdict"],
                reviewer_note=payload.get("note", ""),
                reviewer=payload.get("reviewer", ""),
            )
            self.audit.setdefault(rec.detection_id, []).append(event)
        elif kind == "notification":
            self.notifications.append(NotificationRecord(**payload))
        elif kind == "scene":
            self.scene_events.append(payload)
            self._scene_keys.add((payload["site_id"], payload["acquisition_time"]))
        # unknown event types are preserved in the log but ignored here

    # -- pipeline bookkeeping ----------------------------------------------

    def scene_processed(self, site_id: str, acquisition_time: str) -> bool:
        return (site_id, acquisition_time) in self._scene_keys

    def record_scene(
        self, site_id: str, acquisition_time: str, scene_ref: str,
        score: float, detection_id: str | None, note: str = "",
    ) -> None:
        self._append(
            "scene",
            {
                "site_id": site_id,
                "acquisition_time": acquisition_time,
                "scene_ref": scene_ref,
                "score": score,
                "detection_id": detection_id,
                "note": note,
            },
        )

    def add_detection(self, record: DetectionRecord) -> DetectionRecord:
        if record.detection_id in self.detections:
            raise ConflictError(f"detection {record.detection_id} already stored")
        self._append("detection", record.to_json_dict())
        return record

    # -- review workflow -----------------------------------------------------

    def get(self, detection_id: str) -> DetectionRecord:
        try:
            return self.detections[detection_id]
        except KeyError:
            raise NotFoundError(f"no detection {detection_id!r}") from None

    def review(self, detection_id: str, verdict: str, note: str = "", reviewer: str = "") -> DetectionRecord:
        """pending -> confirmed|rejected; anything else is a conflict."""
        record = self.get(detection_id)
        if verdict not in ("confirmed", "rejected"):
            raise ValueError(f"verdict must be confirmed or rejected, got {verdict!r}")
        if record.review_status != "pending":
            raise ConflictError(
                f"detection {detection_id} already {record.review_status}"
            )
        if verdict == "confirmed" and record.n_plume_pixels <= 0:
            raise ConflictError("cannot confirm a detection with an empty mask")
        self._append(
            "review",
            {"detection_id": detection_id, "verdict": verdict, "note": note, "reviewer": reviewer},
        )
        return self.get(detection_id)

    def prior_confirmed_count(self, site_id: str, before_time: str) -> int:
        return sum(
            1
            for rec in self.detections.values()
            if rec.site_id == site_id
            and rec.review_status == "confirmed"
            and rec.acquisition_time < before_time
        )

    def make_notification(self, detection_id: str, registry) -> NotificationRecord:
        record = self.get(detection_id)
        if record.review_status != "confirmed":
            raise ConflictError(
                f"detection {detection_id} is {record.review_status}, not confirmed"
            )
        site = registry.get(record.site_id)
        notification = NotificationRecord(
            notification_id=f"ntf-{self.seq + 1:06d}",
            detection_id=detection_id,
            site_id=site.site_id,
            site_name=site.name,
            country=site.country,
            operator=site.operator or "unknown",
            flux_t_per_h=record.flux_t_per_h,
            prior_detection_count=self.prior_confirmed_count(
                record.site_id, record.acquisition_time
            ),
            plume_image_ref=f"/api/alerts/{detection_id}/layers/delta_ch4.png",
            issued_at=self.clock(),
        )
        self._append("notification", notification.to_json_dict())
        return notification

    # -- queries ---------------------------------------------------------------

    def list_detections(
        self, status: str | None = None, site: str | None = None, since: str | None = None,
    ) -> list[DetectionRecord]:
        records = list(self.detections.values())
        if status:
            records = [r for r in records if r.review_status == status]
        if site:
            records = [r for r in records if r.site_id == site]
        if since:
            records = [r for r in records if r.acquisition_time >= since]
        records.sort(key=lambda r: (-r.scene_score, r.acquisition_time, r.detection_id))
        return records

    def site_timeline(self, site_id: str) -> dict:
        """Confirmed detections plus every observed scene date, in time order."""
        detections = sorted(
            (
                r
                for r in self.detections.values()
                if r.site_id == site_id and r.review_status == "confirmed"
            ),
            key=lambda r: r.acquisition_time,
        )
        coverage = sorted(
            {e["acquisition_time"] for e in self.scene_events if e["site_id"] == site_id}
        )
        return {
            "site_id": site_id,
            "detections": [
                {
                    "detection_id": r.detection_id,
                    "acquisition_time": r.acquisition_time,
                    "flux_t_per_h": r.flux_t_per_h,
                    "scene_score": r.scene_score,
                }
                for r in detections
            ],
            "scene_dates": coverage,
        }
