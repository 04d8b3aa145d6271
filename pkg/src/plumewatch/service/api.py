"""HTTP review API over the alert store (JSON over HTTP/1.1).

Mutating endpoints require an ``X-Reviewer`` header naming the analyst; the
store serializes all writes, readers see the replayed index.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Header, HTTPException, Query, Response
from pydantic import BaseModel

from ..errors import ConflictError, NotFoundError
from .registry import SiteRegistry
from .render import layer_manifest, render_layer
from .store import AlertStore


class ReviewBody(BaseModel):
    verdict: str
    note: str = ""


def create_app(store: AlertStore, registry: SiteRegistry, scenes_dir) -> FastAPI:
    app = FastAPI(title="plumewatch alert service", version="1")
    scenes_dir = Path(scenes_dir)

    def _record_or_404(detection_id: str):
        try:
            return store.get(detection_id)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    def _require_reviewer(x_reviewer: str | None) -> str:
        if not x_reviewer:
            raise HTTPException(status_code=401, detail="X-Reviewer header required")
        return x_reviewer

    @app.get("/api/alerts")
    def list_alerts(
        status: str | None = None,
        site: str | None = None,
        since: str | None = None,
        page: int = Query(1, ge=1),
        page_size: int = Query(50, ge=1, le=500),
    ):
        records = store.list_detections(status=status, site=site, since=since)
        start = (page - 1) * page_size
        return {
            "total": len(records),
            "page": page,
            "page_size": page_size,
            "alerts": [r.to_json_dict() for r in records[start : start + page_size]],
        }

    @app.get("/api/alerts/{detection_id}")
    def get_alert(detection_id: str):
        return _record_or_404(detection_id).to_json_dict()

    @app.get("/api/alerts/{detection_id}/layers/{name}.png")
    def get_layer(detection_id: str, name: str):
        record = _record_or_404(detection_id)
        try:
            png = render_layer(store.root, scenes_dir, record, name)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return Response(content=png, media_type="image/png")

    @app.post("/api/alerts/{detection_id}/review")
    def post_review(detection_id: str, body: ReviewBody, x_reviewer: str | None = Header(None)):
        reviewer = _require_reviewer(x_reviewer)
        _record_or_404(detection_id)
        try:
            record = store.review(detection_id, body.verdict, note=body.note, reviewer=reviewer)
        except ConflictError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return record.to_json_dict()

    @app.post("/api/alerts/{detection_id}/notification")
    def post_notification(detection_id: str, x_reviewer: str | None = Header(None)):
        _require_reviewer(x_reviewer)
        _record_or_404(detection_id)
        try:
            notification = store.make_notification(detection_id, registry)
        except ConflictError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return notification.to_json_dict()

    @app.get("/api/sites")
    def list_sites():
        return {"sites": [dict(s.__dict__) for s in registry]}

    @app.get("/api/sites/{site_id}/timeline")
    def site_timeline(site_id: str):
        if site_id not in registry:
            raise HTTPException(status_code=404, detail=f"unknown site {site_id!r}")
        return store.site_timeline(site_id)

    @app.get("/api/layers/manifest")
    def get_manifest():
        return layer_manifest()

    return app
