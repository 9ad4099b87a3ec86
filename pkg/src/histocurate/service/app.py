"""HTTP facade for the reference-case-search workflow.

The store and catalog are read-only after startup; query results are cached
under a deterministic id (a hash of the canonical request), so replaying a
request sequence yields identical bodies.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import threading
from dataclasses import dataclass

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from PIL import Image

from .. import retrieval as rt
from ..catalog import Catalog, TileRef, load_manifest, load_slide_image, read_tile
from ..errors import DataError
from . import schemas

SYNC_TILE_LIMIT = 10_000  # larger candidate sets run as background jobs
THUMBNAIL_MAX = 1024


@dataclass
class ServiceConfig:
    store_path: str
    manifest_path: str
    default_k: int = 5
    hide_diagnoses: bool = False
    frontend_dir: str | None = None
    tile_size: int = 256


class QueryRegistry:
    """Completed and in-flight queries keyed by deterministic id."""

    def __init__(self):
        self._lock = threading.Lock()
        self._entries: dict[str, dict] = {}

    def get(self, query_id: str) -> dict | None:
        with self._lock:
            return self._entries.get(query_id)

    def put(self, query_id: str, entry: dict) -> None:
        with self._lock:
            self._entries[query_id] = entry


def query_id_for(body: schemas.QueryRequest) -> str:
    canonical = json.dumps(
        {
            "slide_id": body.slide_id,
            "roi": [(t.x, t.y) for t in body.roi],
            "k": body.k,
            "top_n": body.top_n,
        },
        sort_keys=True,
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _png_bytes(array) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(array).save(buf, format="PNG")
    return buf.getvalue()


def create_app(config: ServiceConfig) -> FastAPI:
    store = rt.EmbeddingStore.load(config.store_path)
    catalog: Catalog = load_manifest(config.manifest_path)
    registry = QueryRegistry()

    app = FastAPI(title="histocurate reference-case search", version="0.1.0")

    @app.exception_handler(HTTPException)
    async def http_error(request: Request, exc: HTTPException):
        return JSONResponse(status_code=exc.status_code, content={"error": str(exc.detail)})

    @app.exception_handler(RequestValidationError)
    async def validation_error(request: Request, exc: RequestValidationError):
        first = exc.errors()[0]
        where = ".".join(str(p) for p in first.get("loc", ()))
        return JSONResponse(
            status_code=422, content={"error": f"invalid request: {where}: {first.get('msg')}"}
        )

    def get_record(slide_id: str):
        if slide_id not in catalog:
            raise HTTPException(status_code=404, detail=f"unknown slide {slide_id!r}")
        return catalog.get(slide_id)

    def visible_diagnosis(diagnosis):
        return None if config.hide_diagnoses else diagnosis

    @app.get("/api/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", slides=len(store))

    @app.get("/api/slides", response_model=list[schemas.SlideSummary])
    def slides():
        return [
            schemas.SlideSummary(
                slide_id=rec.slide_id,
                diagnosis=visible_diagnosis(rec.diagnosis),
                tissue_type=rec.tissue_type,
                staining=rec.staining,
                staining_category=rec.staining_category,
                lab=rec.lab,
                in_store=rec.slide_id in store,
            )
            for rec in catalog
        ]

    @app.get("/api/slides/{slide_id}/meta", response_model=schemas.SlideMeta)
    def slide_meta(slide_id: str):
        rec = get_record(slide_id)
        image = load_slide_image(catalog, slide_id)
        tiles = (
            [schemas.TilePoint(x=int(x), y=int(y)) for x, y in store.get(slide_id).coords]
            if slide_id in store
            else []
        )
        return schemas.SlideMeta(
            slide_id=rec.slide_id,
            diagnosis=visible_diagnosis(rec.diagnosis),
            tissue_type=rec.tissue_type,
            staining=rec.staining,
            staining_category=rec.staining_category,
            lab=rec.lab,
            in_store=rec.slide_id in store,
            case_id=rec.case_id,
            scanner=rec.scanner,
            prep=rec.prep,
            mpp=rec.mpp,
            width=image.shape[1],
            height=image.shape[0],
            tile_size=config.tile_size,
            tiles=tiles,
        )

    @app.get("/api/slides/{slide_id}/tiles/{x}/{y}")
    def slide_tile(slide_id: str, x: int, y: int):
        get_record(slide_id)
        try:
            tile = read_tile(catalog, TileRef(slide_id, x, y, config.tile_size))
        except DataError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return Response(content=_png_bytes(tile), media_type="image/png")

    @app.get("/api/slides/{slide_id}/thumbnail")
    def slide_thumbnail(slide_id: str):
        get_record(slide_id)
        image = load_slide_image(catalog, slide_id)
        pil = Image.fromarray(image)
        pil.thumbnail((THUMBNAIL_MAX, THUMBNAIL_MAX), Image.LANCZOS)
        buf = io.BytesIO()
        pil.save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    def execute_query(query_id: str, body: schemas.QueryRequest):
        try:
            roi = rt.QueryROI(body.slide_id, [(t.x, t.y) for t in body.roi])
            result = rt.query_topn(store, roi, k=body.k, topn=body.top_n)
        except DataError as exc:
            registry.put(query_id, {"status": "error", "error": str(exc), "code": 422})
            return
        entries = [
            schemas.ResultEntry(rank=i + 1, slide_id=e.slide_id, score=e.score, diagnosis=e.diagnosis)
            for i, e in enumerate(result.entries)
        ]
        heatmaps = {}
        for slide_id, (coords, values) in result.similarity_maps.items():
            heatmaps[slide_id] = {
                (int(cx), int(cy)): float(v) for (cx, cy), v in zip(coords, values)
            }
        registry.put(
            query_id,
            {"status": "done", "body": body, "entries": entries, "heatmaps": heatmaps},
        )

    @app.post("/api/queries", response_model=schemas.QueryCreated)
    def create_query(body: schemas.QueryRequest):
        rec = get_record(body.slide_id)
        if body.slide_id not in store:
            raise HTTPException(
                status_code=422, detail=f"slide {rec.slide_id!r} has no embeddings in the store"
            )
        slide = store.get(body.slide_id)
        grid = {(int(x), int(y)) for x, y in slide.coords}
        for t in body.roi:
            if (t.x, t.y) not in grid:
                raise HTTPException(
                    status_code=422,
                    detail=f"ROI tile ({t.x},{t.y}) outside the tile grid of {body.slide_id!r}",
                )

        query_id = query_id_for(body)
        existing = registry.get(query_id)
        if existing is None:
            candidate_tiles = store.total_tiles - slide.coords.shape[0]
            if candidate_tiles <= SYNC_TILE_LIMIT:
                execute_query(query_id, body)
            else:
                registry.put(query_id, {"status": "pending"})
                threading.Thread(target=execute_query, args=(query_id, body), daemon=True).start()
        return schemas.QueryCreated(query_id=query_id)

    def get_finished(query_id: str) -> dict:
        entry = registry.get(query_id)
        if entry is None:
            raise HTTPException(status_code=404, detail=f"unknown query {query_id!r}")
        if entry["status"] == "error":
            raise HTTPException(status_code=entry.get("code", 422), detail=entry["error"])
        return entry

    @app.get("/api/queries/{query_id}", response_model=schemas.QueryResult)
    def query_result(query_id: str):
        entry = get_finished(query_id)
        if entry["status"] == "pending":
            return schemas.QueryResult(
                query_id=query_id, status="pending", slide_id="", k=0, top_n=0, results=[]
            )
        body: schemas.QueryRequest = entry["body"]
        return schemas.QueryResult(
            query_id=query_id,
            status="done",
            slide_id=body.slide_id,
            k=body.k,
            top_n=body.top_n,
            results=entry["entries"],
        )

    @app.get("/api/queries/{query_id}/heatmap/{slide_id}", response_model=schemas.HeatmapResponse)
    def query_heatmap(query_id: str, slide_id: str):
        entry = get_finished(query_id)
        if entry["status"] == "pending":
            raise HTTPException(status_code=409, detail="query still running")
        if slide_id not in entry["heatmaps"]:
            raise HTTPException(
                status_code=404, detail=f"slide {slide_id!r} not among the ranked results"
            )
        image = load_slide_image(catalog, slide_id)
        ny = math.ceil(image.shape[0] / config.tile_size)
        nx = math.ceil(image.shape[1] / config.tile_size)
        values: list[list[float | None]] = [[None] * nx for _ in range(ny)]
        for (x, y), v in entry["heatmaps"][slide_id].items():
            values[y // config.tile_size][x // config.tile_size] = v
        return schemas.HeatmapResponse(
            slide_id=slide_id, tile_size=config.tile_size, nx=nx, ny=ny, values=values
        )

    if config.frontend_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=config.frontend_dir, html=True), name="frontend")

    return app
