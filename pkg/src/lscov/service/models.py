"""Request/response schemas of the campaign service."""

from typing import List, Optional

from pydantic import BaseModel, Field


class DeriveRequest(BaseModel):
    n_e: int = Field(ge=1, description="expected distinct logic states")
    epsilon: float = Field(gt=0.0, lt=1.0, description="false-positive rate")


class FilterParamsModel(BaseModel):
    n_bits: int
    n_hashes: int
    n_bytes: int


class CampaignCreate(BaseModel):
    """Campaign setup. Give n_bits/n_hashes together to pin geometry,
    or n_e/epsilon to derive it, or nothing for the 64 MB default.
    A live campaign gets a unix endpoint allocated unless one is given;
    setting `replay` instead consumes a recorded trace file.
    """

    name: Optional[str] = None
    n_e: Optional[int] = Field(default=None, ge=1)
    epsilon: Optional[float] = Field(default=None, gt=0.0, lt=1.0)
    n_bits: Optional[int] = Field(default=None, ge=64)
    n_hashes: Optional[int] = Field(default=None, ge=1, le=16)
    period: float = Field(default=10.0, ge=1.0)
    endpoint: Optional[str] = None
    replay: Optional[str] = None
    pace: Optional[str] = None
    exact_oracle: bool = False
    snapshot: Optional[str] = None
    snapshot_period: Optional[float] = Field(default=None, gt=0.0)
    duration: Optional[float] = Field(default=None, gt=0.0)
    resume_from: Optional[str] = None


class CampaignInfo(BaseModel):
    id: str
    name: str
    state: str
    endpoint: Optional[str]
    replay: Optional[str]
    period: float
    params: FilterParamsModel


class CampaignStatus(CampaignInfo):
    execs: int
    malformed: int
    abnormal: int
    overflowed: int
    coverage: float
    exact_distinct: Optional[int]
    density: float
    saturated: bool
    t_sec: float
    rows: int
    error: Optional[str]


class RowModel(BaseModel):
    t_sec: float
    execs: int
    coverage: float
    new_per_sec_ins: float
    new_per_sec_avg: float
    new_per_exec_ins_pct: float
    new_per_exec_avg_pct: float


class RowsResponse(BaseModel):
    id: str
    rows: List[RowModel]


class SnapshotRequest(BaseModel):
    path: str


class SnapshotResponse(BaseModel):
    id: str
    path: str


class DigestRequest(BaseModel):
    """Block id sequences to digest through the recording semantics."""

    sequences: List[List[int]]


class DigestResponse(BaseModel):
    digests: List[str]


class HealthResponse(BaseModel):
    status: str
    version: str
