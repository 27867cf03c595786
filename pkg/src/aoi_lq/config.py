"""JSON run configuration shared by all CLI subcommands."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError

from .errors import AoiLqError
from .game import GameSpec

Matrix = Union[float, list[float], list[list[float]]]


class ConfigError(Exception):
    """Unreadable or invalid configuration (CLI exit status 1)."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class GameModel(_Strict):
    A: Matrix
    B1: Matrix
    B2: Matrix
    Q: Matrix
    R1: Matrix
    R2: Matrix
    G: Optional[Matrix] = None
    Sigma0: Optional[Matrix] = None


class SensingModel(_Strict):
    b: PositiveFloat
    h: PositiveFloat


class SolverModel(_Strict):
    tol: PositiveFloat = 1e-9
    max_iter: PositiveInt = 50


class MdpModel(_Strict):
    lam: Optional[float] = Field(default=None, alias="lambda", ge=0)
    beta: float = Field(default=0.99, gt=0, lt=1)
    N_max: int = Field(default=64, ge=2)
    vi_tol: PositiveFloat = 1e-8
    bisection_tol: PositiveFloat = 1e-4


class SimModel(_Strict):
    T: PositiveFloat = 5000.0
    dt: Optional[PositiveFloat] = None
    seed: int = Field(default=0, ge=0)
    record_stride: Optional[int] = Field(default=None, ge=0)
    scheme: Literal["exact", "euler_maruyama"] = "exact"
    redraw: Literal["Once", "PerCycle"] = "Once"
    eta: Optional[PositiveInt] = None
    divergence_guard: Optional[PositiveFloat] = None


class SweepModel(_Strict):
    axis: Optional[Literal["h", "b"]] = None
    values: Optional[list[PositiveFloat]] = None
    seeds: PositiveInt = 20


class RunConfig(_Strict):
    game: GameModel
    sensing: Optional[SensingModel] = None
    solver: SolverModel = Field(default_factory=SolverModel)
    mdp: MdpModel = Field(default_factory=MdpModel)
    sim: SimModel = Field(default_factory=SimModel)
    sweep: SweepModel = Field(default_factory=SweepModel)
    output_dir: Optional[str] = None
    meta: Optional[dict] = None

    def game_spec(self) -> GameSpec:
        g = self.game
        try:
            return GameSpec(A=g.A, B1=g.B1, B2=g.B2, Q=g.Q, R1=g.R1, R2=g.R2, G=g.G,
                            Sigma0=g.Sigma0)
        except AoiLqError as exc:
            raise ConfigError(f"game: {exc}") from exc

    def require_sensing(self) -> SensingModel:
        if self.sensing is None:
            raise ConfigError("sensing: field required for this command ({b, h})")
        return self.sensing

    def resolved(self) -> dict:
        """Config with every default filled in; loadable by :func:`load_config`."""
        return self.model_dump(by_alias=True, mode="json")


def _format_validation(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def parse_config(data) -> RunConfig:
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from None
    cfg.game_spec()  # validate matrix invariants at load time
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_config(data)


def spec_to_json(spec: GameSpec) -> dict:
    return {k: np.asarray(getattr(spec, k)).tolist()
            for k in ("A", "B1", "B2", "Q", "R1", "R2", "G", "Sigma0")}
