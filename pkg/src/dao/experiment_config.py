import json
from typing import Literal, Optional

from pydantic import model_validator
from sqlmodel import Field, SQLModel


class ExperimentConfig(SQLModel):
    subcommand: Literal["release-online", "release-offline", "rr-synth", "bench"] = "release-online"
    mechanism: Literal["online", "ic", "rr"] = "online"
    idc: Literal["fk", "mw", "mm"] = "mw"
    distinguisher: Literal["expmech", "svd"] = "expmech"
    eps: float = Field(default=1.0, gt=0)
    delta: float = Field(default=1e-6, ge=0, lt=1)
    alpha: Optional[float] = Field(default=None, gt=0)
    alpha_auto: bool = False
    beta: float = Field(default=0.05, gt=0, lt=1)
    k: int = Field(default=100, ge=1)
    graph: Optional[str] = None
    gen_v: int = Field(default=10, ge=2)
    gen_p: float = Field(default=0.5, ge=0, le=1)
    gen_m: Optional[int] = Field(default=None, ge=0)
    seed: int = 0
    trials: int = Field(default=1, ge=1)
    zero_noise: bool = False
    sigma_constant: float = Field(default=1000.0, gt=0)
    T_constant: float = Field(default=4.0, gt=0)
    budget: int = Field(default=50, ge=1)
    sampled_cuts: int = Field(default=1000, ge=1)
    sweep_v: list[int] = [6, 8, 10, 12]
    sweep_p: list[float] = [0.3, 0.5]
    sweep_eps: list[float] = [1.0]
    out: Optional[str] = None
    format: Literal["csv", "json"] = "csv"

    @model_validator(mode="after")
    def check_alpha(self):
        if self.subcommand in ("release-online", "release-offline") and self.alpha is None and not self.alpha_auto:
            raise ValueError("Pass --alpha or --alpha-auto.")
        if self.mechanism != "rr" and self.delta == 0:
            raise ValueError(f"The {self.mechanism} mechanism needs delta > 0.")
        return self

    def to_json(self) -> str:
        return json.dumps(self.model_dump(), sort_keys=True)
