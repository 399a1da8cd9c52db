from typing import Optional

from sqlmodel import Field, SQLModel

SCHEMA_VERSION = 1


class ResultRecord(SQLModel):
    schema_version: int = SCHEMA_VERSION
    run_id: str
    subcommand: str
    mechanism: str
    idc: Optional[str] = None
    trial: int
    seed: int
    vertex_count: Optional[int] = None
    universe_size: int
    edge_probability: Optional[float] = None
    n: float
    n2: float
    epsilon: float
    delta: float
    alpha: Optional[float] = None
    beta: float
    k: int
    queries_answered: int = 0
    max_error: Optional[float] = None  # sampled queries
    mean_error: Optional[float] = None
    max_error_bruteforce: Optional[float] = None  # exact over all cuts, small graphs
    update_count: int = 0
    update_bound: Optional[int] = None
    exhausted: bool = False
    exit_reason: Optional[str] = None
    threshold: Optional[float] = None
    sigma: Optional[float] = None
    privacy_epsilon: Optional[float] = None  # None when a non-private step ran
    privacy_delta: Optional[float] = None
    private: bool = True
    bound_mw: Optional[float] = None
    bound_fk: Optional[float] = None
    bound_mm: Optional[float] = None
    bound_rr: Optional[float] = None
    per_cut_error: Optional[float] = None
    # cut-norm distances, small graphs only: to the noisy graph z, then to the true graph
    residual_clip: Optional[float] = None
    residual_projected: Optional[float] = None
    residual_true_clip: Optional[float] = None
    residual_true_projected: Optional[float] = None
    residual_true_rounded: Optional[float] = None
    runtime_seconds: float = Field(default=0.0, ge=0)
    config_json: str = "{}"


class AnswerRow(SQLModel):
    run_id: str
    trial: int
    position: int
    kind: str
    answer: Optional[float] = None
    query_json: str
