"""JSON run configuration shared by the ``simulate`` and ``expect`` commands."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import gsde
from .constraints import LINKS, ConstraintPair, make_band_pair, make_link_pair, make_rho_pair
from .errors import ConfigError, GskorError
from .gexp import VolatilityBounds, scenario_family
from .path_core import SampledPath, TimeGrid, read_path_csv


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridSpec(_Strict):
    T: float = Field(1.0, gt=0)
    n: int = Field(4096, ge=1)


class FamilySpec(_Strict):
    kind: Literal["constant", "bang-bang"] = "constant"
    m: int = Field(2, ge=2)
    switches: int = Field(1, ge=1)


class ZeroCoef(_Strict):
    id: Literal["zero"]


class ConstantCoef(_Strict):
    id: Literal["constant"]
    c: float


class AffineCoef(_Strict):
    id: Literal["affine"]
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0


class SineCoef(_Strict):
    id: Literal["sine"]
    amp: float = 1.0
    freq: float = 1.0
    offset: float = 0.0
    phase: float = 0.0


Coef = Annotated[Union[ZeroCoef, ConstantCoef, AffineCoef, SineCoef], Field(discriminator="id")]


class CoefficientSpec(_Strict):
    f: Coef = ZeroCoef(id="zero")
    h_qv: Coef = ZeroCoef(id="zero")
    g_diff: Coef = ZeroCoef(id="zero")


Obstacle = Union[float, str]


class ConstraintSpec(_Strict):
    """``alpha``/``beta`` are constants or paths to ``t,value`` CSV files."""

    kind: Literal["band", "rho", "custom"] = "band"
    alpha: Obstacle
    beta: Obstacle
    link: Optional[str] = None

    @field_validator("link")
    @classmethod
    def _known_link(cls, v):
        if v is not None and v not in LINKS:
            raise ValueError(f"unknown link {v!r}; choose from {sorted(LINKS)}")
        return v

    def build(self, grid: TimeGrid, base_dir: Path | str = ".") -> ConstraintPair:
        def load(v, name):
            if isinstance(v, str):
                p = read_path_csv(Path(base_dir) / v)
                if p.grid != grid:
                    raise ConfigError([{"pointer": f"/constraints/{name}", "kind": "validation-error",
                                        "message": f"CSV grid {p.grid} differs from run grid {grid}"}])
                return p
            return SampledPath.constant(grid, float(v))

        alpha, beta = load(self.alpha, "alpha"), load(self.beta, "beta")
        if self.kind == "band":
            return make_band_pair(alpha, beta)
        if self.kind == "rho":
            return make_rho_pair(alpha, beta)
        if self.link is None:
            raise ConfigError([{"pointer": "/constraints/link", "kind": "validation-error",
                               "message": "custom constraints need a link id"}])
        return make_link_pair(self.link, alpha, beta)


class ToleranceSpec(_Strict):
    picard: float = Field(gsde.PICARD_TOL, gt=0)
    max_iter: int = Field(gsde.MAX_ITER, ge=1)


class RunConfig(_Strict):
    grid: GridSpec = GridSpec()
    sigma2_min: float = Field(ge=0)
    sigma2_max: float = Field(ge=0)
    family: FamilySpec = FamilySpec()
    paths: int = Field(1000, ge=1)
    seed: int = Field(0, ge=0)
    x0: float = 0.0
    coefficients: CoefficientSpec = CoefficientSpec()
    constraints: Optional[ConstraintSpec] = None
    tolerances: ToleranceSpec = ToleranceSpec()
    p: float = Field(2.0, ge=1)
    picard_init: Literal["zero", "clamp"] = "zero"
    realized_qv: bool = False
    output: str = "runs"

    @field_validator("sigma2_max")
    @classmethod
    def _ordered(cls, v, info):
        lo = info.data.get("sigma2_min")
        if lo is not None and v < lo:
            raise ValueError(f"sigma2_max ({v!r}) is below sigma2_min ({lo!r})")
        return v

    def time_grid(self) -> TimeGrid:
        return TimeGrid(self.grid.T, self.grid.n)

    def bounds(self) -> VolatilityBounds:
        return VolatilityBounds(self.sigma2_min, self.sigma2_max)

    def scenarios(self):
        return scenario_family(self.bounds(), self.family.kind, self.family.m, self.family.switches)

    def sde_coefficients(self) -> gsde.SDECoefficients:
        spec = {k: v.model_dump() for k, v in self.coefficients}
        return gsde.SDECoefficients.from_spec(spec, horizon=self.grid.T)


_COEF_TAGS = {"zero", "constant", "affine", "sine"}


def _pointer(loc) -> str:
    parts = [str(p) for p in loc]
    if len(parts) > 2 and parts[0] == "coefficients" and parts[2] in _COEF_TAGS:
        del parts[2]  # tagged-union branch name, not part of the document
    return "/" + "/".join(parts) if parts else ""


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON config; every problem is reported with a JSON pointer."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([{"pointer": "", "kind": "parse-error", "message": str(exc)}]) from None
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        errors = []
        for e in exc.errors():
            msg = e["msg"]
            if e["type"] == "extra_forbidden":
                msg = f"unknown key {e['loc'][-1]!r}"
            errors.append({"pointer": _pointer(e["loc"]), "kind": "validation-error", "message": msg})
        raise ConfigError(errors) from None


def load_config(path: Path | str) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def materialize(cfg: RunConfig, base_dir: Path | str = ".") -> dict:
    """Build every runtime object up front so invalid settings fail before any computation."""
    pointers = {"grid": "/grid", "bounds": "/sigma2_min", "family": "/family",
                "coefficients": "/coefficients", "pair": "/constraints"}
    out = {}
    steps = [("grid", cfg.time_grid), ("bounds", cfg.bounds), ("family", cfg.scenarios),
             ("coefficients", cfg.sde_coefficients)]
    for key, build in steps:
        try:
            out[key] = build()
        except GskorError as exc:
            raise ConfigError([{"pointer": pointers[key], "kind": "validation-error", "message": str(exc)}]) from None
    out["pair"] = None
    if cfg.constraints is not None:
        try:
            out["pair"] = cfg.constraints.build(out["grid"], base_dir)
        except ConfigError:
            raise
        except (GskorError, OSError) as exc:
            raise ConfigError([{"pointer": "/constraints", "kind": "validation-error", "message": str(exc)}]) from None
    return out
