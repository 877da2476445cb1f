"""Request/response models for the verification service."""

from pydantic import BaseModel, Field


class TrajectoryIn(BaseModel):
    id: str
    states: list[list[float]]


class CheckRequest(BaseModel):
    formula: str


class CheckResponse(BaseModel):
    formula: str
    bounded: bool
    length: int | None = None
    pnf: str
    formula_hash: str
    components: list[str]


class FitRequest(BaseModel):
    kind: str = "ar"  # "ar" | "hold-last"
    order: int = 2
    t: int
    horizon: int | None = None
    formula: str | None = None  # used to derive the horizon when not given
    tau0: int | str = "current"  # "zero" | "current" | explicit step
    trajectories: list[TrajectoryIn]


class FitResponse(BaseModel):
    predictor_id: str
    kind: str
    t: int
    horizon: int
    dim: int


class CalibrateRequest(BaseModel):
    predictor_id: str
    method: str = "direct"  # "direct" | "indirect"
    formula: str
    delta: float = Field(gt=0, lt=1)
    tau0: int | str = "current"
    norm: str = "L2"
    trajectories: list[TrajectoryIn]


class RegionOut(BaseModel):
    threshold: float | None  # None encodes an infinite constant
    rank: int
    sample_size: int
    delta: float


class CalibrateResponse(BaseModel):
    calibration_id: str
    method: str
    delta: float
    t: int
    tau0: int
    horizon: int
    formula_hash: str | None
    norm: str | None = None
    region: RegionOut | None = None
    regions: dict[int, RegionOut] | None = None
    any_infinite: bool


class VerifyRequest(BaseModel):
    calibration_id: str
    prefix: list[list[float]]  # observed states x_0 .. x_t


class VerifyResponse(BaseModel):
    method: str
    robustness: float | None  # None encodes -inf/+inf
    robustness_infinite: int = 0  # -1, 0, +1
    guaranteed: bool
    delta: float
    t: int
    tau0: int
    horizon: int
    formula_hash: str
    predicate_bounds: dict[str, dict[int, float | None]] | None = None
    record: str


class ObservedVerifyRequest(BaseModel):
    formula: str
    tau0: int | str = "zero"
    prefix: list[list[float]]


class EvaluateRequest(BaseModel):
    method: str = "direct"
    system: str = "drift-sine"
    formula: str
    tau0: int | str = "current"
    t: int
    delta: float = Field(gt=0, lt=1)
    split: tuple[int, int, int] = (700, 200, 100)
    seed: int = 0
    predictor: str = "ar:2"
    norm: str = "L2"
    noise_scale: float | None = None
    length: int | None = None


class HistogramOut(BaseModel):
    label: str
    bin_edges: list[float]
    counts: list[int]
    marker: float | None


class EvaluateResponse(BaseModel):
    method: str
    delta: float
    n_test: int
    guaranteed_satisfied: int
    guaranteed_violated: int
    not_guaranteed_satisfied: int
    not_guaranteed_violated: int
    coverage_count: int
    coverage_fraction: float
    region_infinite: bool
    histograms: list[HistogramOut]


class MinDeltaRequest(BaseModel):
    method: str = "direct"
    formula: str
    tau0: int | str = "current"
    t: int
    grid: list[float]
    norm: str = "L2"
    predictor_id: str
    trajectories: list[TrajectoryIn]  # validation set
    prefix: list[list[float]]


class MinDeltaResponse(BaseModel):
    certified: bool
    delta: float | None = None
    verdict: VerifyResponse | None = None


class HealthResponse(BaseModel):
    status: str
    version: str
