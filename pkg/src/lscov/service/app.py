"""HTTP routes of the campaign service."""

from typing import List, Optional

from fastapi import FastAPI, HTTPException, Query, Response

from .. import __version__
from ..bloom import derive_params
from ..collector import CampaignConfig
from ..logic_state import digest_block_sequence
from .manager import CampaignHandle, CampaignManager, UnknownCampaignError
from .models import (
    CampaignCreate,
    CampaignInfo,
    CampaignStatus,
    DeriveRequest,
    DigestRequest,
    DigestResponse,
    FilterParamsModel,
    HealthResponse,
    RowModel,
    RowsResponse,
    SnapshotRequest,
    SnapshotResponse,
)


def _info(handle: CampaignHandle) -> CampaignInfo:
    return CampaignInfo(
        id=handle.id,
        name=handle.name,
        state=handle.state,
        endpoint=handle.config.endpoint if not handle.config.replay else None,
        replay=handle.config.replay,
        period=handle.config.period,
        params=FilterParamsModel(
            n_bits=handle.engine.filter.n_bits,
            n_hashes=handle.engine.filter.n_hashes,
            n_bytes=(handle.engine.filter.n_bits + 7) // 8,
        ),
    )


def _status(handle: CampaignHandle) -> CampaignStatus:
    stat = handle.engine.status()
    return CampaignStatus(
        **_info(handle).model_dump(),
        execs=stat["execs"],
        malformed=stat["malformed"],
        abnormal=stat["abnormal"],
        overflowed=stat["overflowed"],
        coverage=stat["coverage"],
        exact_distinct=stat["exact_distinct"],
        density=stat["density"],
        saturated=stat["saturated"],
        t_sec=stat["t_sec"],
        rows=stat["rows"],
        error=handle.error,
    )


def create_app(manager: Optional[CampaignManager] = None) -> FastAPI:
    app = FastAPI(title="lscov", version=__version__)
    mgr = manager or CampaignManager()
    app.state.manager = mgr

    def fetch(cid: str) -> CampaignHandle:
        try:
            return mgr.get(cid)
        except UnknownCampaignError:
            raise HTTPException(404, f"no campaign {cid}") from None

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/params/derive", response_model=FilterParamsModel)
    def derive(req: DeriveRequest) -> FilterParamsModel:
        params = derive_params(req.n_e, req.epsilon)
        return FilterParamsModel(
            n_bits=params.n_bits, n_hashes=params.n_hashes,
            n_bytes=(params.n_bits + 7) // 8)

    @app.post("/digests", response_model=DigestResponse)
    def digests(req: DigestRequest) -> DigestResponse:
        out = []
        for seq in req.sequences:
            out.append(f"{digest_block_sequence(seq):032x}")
        return DigestResponse(digests=out)

    @app.post("/campaigns", response_model=CampaignStatus, status_code=201)
    def create_campaign(req: CampaignCreate) -> CampaignStatus:
        config = CampaignConfig(
            n_e=req.n_e, epsilon=req.epsilon,
            n_bits=req.n_bits, n_hashes=req.n_hashes,
            period=req.period, endpoint=req.endpoint,
            replay=req.replay, pace=req.pace,
            exact_oracle=req.exact_oracle,
            snapshot=req.snapshot, snapshot_period=req.snapshot_period,
            duration=req.duration, resume_from=req.resume_from,
        )
        try:
            config.filter_params()
            config.resolved_pace()
            handle = mgr.create(config, name=req.name)
        except (ValueError, OSError) as exc:
            raise HTTPException(400, str(exc)) from exc
        return _status(handle)

    @app.get("/campaigns", response_model=List[CampaignInfo])
    def list_campaigns() -> "list[CampaignInfo]":
        return [_info(h) for h in mgr.list()]

    @app.get("/campaigns/{cid}", response_model=CampaignStatus)
    def campaign_status(cid: str) -> CampaignStatus:
        return _status(fetch(cid))

    @app.get("/campaigns/{cid}/rows", response_model=RowsResponse)
    def campaign_rows(cid: str) -> RowsResponse:
        handle = fetch(cid)
        rows = [RowModel(**row.as_report_dict())
                for row in list(handle.engine.rows)]
        return RowsResponse(id=cid, rows=rows)

    @app.get("/campaigns/{cid}/report")
    def campaign_report(
            cid: str,
            format: str = Query(default="csv", pattern="^(csv|json)$"),
    ) -> Response:
        handle = fetch(cid)
        if format == "json":
            return Response(content=handle.engine.render_json(),
                            media_type="application/json")
        return Response(content=handle.engine.render_csv(),
                        media_type="text/csv")

    @app.post("/campaigns/{cid}/stop", response_model=CampaignStatus)
    def stop_campaign(cid: str) -> CampaignStatus:
        fetch(cid)
        try:
            handle = mgr.stop(cid)
        except TimeoutError as exc:
            raise HTTPException(504, str(exc)) from exc
        return _status(handle)

    @app.post("/campaigns/{cid}/snapshot", response_model=SnapshotResponse)
    def snapshot_campaign(cid: str, req: SnapshotRequest) -> SnapshotResponse:
        handle = fetch(cid)
        handle.engine.snapshot(req.path)
        return SnapshotResponse(id=cid, path=req.path)

    @app.delete("/campaigns/{cid}", status_code=204)
    def delete_campaign(cid: str) -> Response:
        fetch(cid)
        mgr.delete(cid)
        return Response(status_code=204)

    return app


app = create_app()
