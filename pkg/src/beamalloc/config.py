"""Scenario files: schema validation and conversion to model objects."""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .model import PairProfile, from_db
from .progressive import FillParams
from .scenario import (Allocation, Grouping, OmaConfig, ScenarioConfig, grouping_from_pair_labels,
                       single_pair_group)


class ConfigError(ValueError):
    """A scenario file failed to parse or validate; ``details`` lists the problems."""

    def __init__(self, message: str, details: list[str] | None = None):
        super().__init__(message)
        self.details = details or []


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class Dims(_Strict):
    n_tx: int = Field(gt=0)
    n_beams: Optional[int] = Field(default=None, gt=0)
    n_singleton_beams: int = Field(default=0, ge=0)


class Budgets(_Strict):
    b_hat_tot: float = Field(gt=0)
    ptot_over_noise_db: float


class PairSpec(_Strict):
    c_sq: float = Field(gt=0, le=1)
    rho_sq: float = Field(ge=0, le=1)


class UserSpec(_Strict):
    c_sq: float = Field(gt=0, le=1)


class GroupingSpec(_Strict):
    mode: Literal["fixed", "kmeans", "quantile"] = "fixed"
    G: Optional[int] = Field(default=None, ge=1)
    # fixed mode: 0-based pair-group label per pair (NOMA) or group per user (OMA)
    labels: Optional[list[int]] = None
    eps_gamma: float = Field(default=1e-4, gt=0)


class SolverSpec(_Strict):
    method: Literal["gp", "progressive"] = "gp"
    series_order: Optional[int] = Field(default=None, ge=1)
    tol: float = Field(default=1e-8, gt=0)


class FillSpec(_Strict):
    n_zeta0: int = Field(default=500, ge=1)
    n_b0: int = Field(default=50, ge=1)
    delta: float = Field(default=0.6, gt=0, lt=1)


class SimSpec(_Strict):
    n_trials: int = Field(ge=1)
    seed: int = Field(ge=0)
    quantizer_mode: Literal["error-injection", "codebook"] = "error-injection"
    n_tx_values: Optional[list[int]] = None


class SweepSpec(_Strict):
    variable: Literal["b_hat_tot", "G", "n_singletons"]
    values: list[float] = Field(min_length=1)


class AllocationSpec(_Strict):
    zeta: list[float]
    b_bar: list[float]
    alpha: Optional[Union[float, list[float]]] = None
    phi: Optional[float] = Field(default=None, gt=0)


class ScenarioFile(_Strict):
    name: str = "scenario"
    dims: Dims
    budgets: Budgets
    pairs: list[PairSpec] = Field(default_factory=list)
    oma_users: Optional[list[UserSpec]] = None
    grouping: GroupingSpec = Field(default_factory=GroupingSpec)
    solver: SolverSpec = Field(default_factory=SolverSpec)
    fill: FillSpec = Field(default_factory=FillSpec)
    sim: Optional[SimSpec] = None
    sweep: Optional[SweepSpec] = None
    allocation: Optional[AllocationSpec] = None

    @model_validator(mode="after")
    def _counts(self):
        d = self.dims
        n_beams = d.n_singleton_beams + len(self.pairs)
        if d.n_beams is not None and d.n_beams != n_beams:
            raise ValueError(f"dims.n_beams = {d.n_beams} but n_singleton_beams + len(pairs) = {n_beams}")
        if n_beams == 0 and not self.oma_users:
            raise ValueError("scenario has neither beams nor oma_users")
        if self.grouping.mode == "kmeans" and self.grouping.G is None:
            raise ValueError("grouping.G is required for kmeans mode")
        return self

    @property
    def sigma_tilde(self) -> float:
        return float(from_db(-self.budgets.ptot_over_noise_db))

    @property
    def is_noma(self) -> bool:
        return self.dims.n_singleton_beams + len(self.pairs) > 0


def load_scenario_file(path: str | Path) -> ScenarioFile:
    """Read and validate a YAML (or JSON) scenario file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"{path}: malformed document{where}", [str(exc)]) from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    try:
        return ScenarioFile.model_validate(data)
    except Exception as exc:  # pydantic.ValidationError
        errors = getattr(exc, "errors", None)
        if errors is None:
            raise
        details = [f"{'.'.join(str(p) for p in e['loc']) or '<root>'}: {e['msg']}" for e in errors()]
        raise ConfigError(f"{path}: {len(details)} schema error(s)", details) from exc


def noma_scenario(cfg: ScenarioFile, **overrides) -> ScenarioConfig:
    kw = dict(n_tx=cfg.dims.n_tx, n_singletons=cfg.dims.n_singleton_beams,
              pairs=tuple(PairProfile(p.c_sq, p.rho_sq) for p in cfg.pairs),
              b_hat_tot=cfg.budgets.b_hat_tot, sigma_tilde=cfg.sigma_tilde, name=cfg.name)
    kw.update(overrides)
    return ScenarioConfig(**kw)


def oma_scenario(cfg: ScenarioFile, **overrides) -> OmaConfig:
    """OMA users from ``oma_users``; without them, the NOMA users served unpaired."""
    if cfg.oma_users:
        c_sq = tuple(u.c_sq for u in cfg.oma_users)
    else:
        c_sq = (1.0,) * cfg.dims.n_singleton_beams + tuple(
            c for p in cfg.pairs for c in (1.0, p.c_sq))
    kw = dict(n_tx=cfg.dims.n_tx, c_sq=c_sq, b_hat_tot=cfg.budgets.b_hat_tot,
              sigma_tilde=cfg.sigma_tilde, name=cfg.name)
    kw.update(overrides)
    return OmaConfig(**kw)


def fixed_noma_grouping(cfg: ScenarioFile, scenario: ScenarioConfig) -> Grouping:
    labels = cfg.grouping.labels
    if labels is None:
        return single_pair_group(scenario)
    if len(labels) != len(scenario.pairs):
        raise ConfigError("grouping.labels needs one label per pair")
    return grouping_from_pair_labels(scenario, labels)


def fixed_oma_grouping(cfg: ScenarioFile, scenario: OmaConfig) -> Grouping | None:
    labels = cfg.grouping.labels
    if cfg.grouping.mode != "fixed" or labels is None:
        return None
    if len(labels) != scenario.n_users:
        raise ConfigError("grouping.labels needs one label per OMA user")
    return Grouping(tuple(labels), max(labels) + 1)


def fill_params(cfg: ScenarioFile) -> FillParams:
    return FillParams(cfg.fill.n_zeta0, cfg.fill.n_b0, cfg.fill.delta)


def given_allocation(cfg: ScenarioFile, n_pairs: int) -> Allocation | None:
    a = cfg.allocation
    if a is None:
        return None
    if len(a.zeta) != len(a.b_bar):
        raise ConfigError("allocation.zeta and allocation.b_bar differ in length")
    alpha = a.alpha
    if alpha is not None:
        alpha = np.full(n_pairs, float(alpha)) if np.isscalar(alpha) else np.asarray(alpha, float)
        if len(alpha) != n_pairs:
            raise ConfigError("allocation.alpha needs one value per pair")
    return Allocation(np.asarray(a.zeta), np.asarray(a.b_bar), alpha=alpha, phi=a.phi,
                      method="given")
