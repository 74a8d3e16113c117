"""Run configuration shared by the library entry points and the CLI."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .conic import SolverSettings
from .errors import ValidationError
from .models import Tolerances


@dataclass(frozen=True)
class RobustnessSettings:
    restarts: int = 50
    lambda_card: int | None = None  # None: Caratheodory bound of the constraint space
    seed: int = 0
    max_iter: int = 60
    improve_tol: float = 1e-9
    enum_cap: int = 4096
    samples: int = 10_000
    pairing_tol: float = 1e-9
    jobs: int = 1
    solver: SolverSettings = field(default_factory=SolverSettings)

    def replace(self, **kw) -> "RobustnessSettings":
        return dataclasses.replace(self, **kw)


@dataclass(frozen=True)
class RunConfig:
    tol_feas: float = 1e-8
    tol_gap: float = 1e-7
    tol_eq: float = 1e-6
    tol_residual: float = 1e-7
    threshold: float = 1e-6
    restarts: int = 50
    lambda_card: int | None = None
    seed: int = 0
    enum_cap: int = 4096
    samples: int = 10_000
    max_iter: int = 60
    solver_tol: float = 1e-10
    solver_max_iter: int = 400
    out: str | None = None
    jobs: int = 1
    psd_tol: float = 1e-10
    ns_tol: float = 1e-10

    def validate(self):
        problems = []
        for name in ("tol_feas", "tol_gap", "tol_eq", "tol_residual", "threshold", "solver_tol", "psd_tol", "ns_tol"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be > 0")
        for name in ("enum_cap", "restarts", "jobs", "samples", "max_iter", "solver_max_iter"):
            if int(getattr(self, name)) < 1:
                problems.append(f"{name} must be >= 1")
        if self.lambda_card is not None and self.lambda_card < 1:
            problems.append("lambda_card must be >= 1")
        if problems:
            raise ValidationError("; ".join(problems))
        return self

    def solver_settings(self) -> SolverSettings:
        return SolverSettings(tol_feas=self.solver_tol, tol_gap_abs=self.solver_tol, tol_gap_rel=self.solver_tol,
                              max_iter=self.solver_max_iter, verify_feas=self.tol_feas, verify_gap=self.tol_gap)

    def robustness(self) -> RobustnessSettings:
        return RobustnessSettings(restarts=self.restarts, lambda_card=self.lambda_card, seed=self.seed,
                                  max_iter=self.max_iter, enum_cap=self.enum_cap, samples=self.samples,
                                  jobs=self.jobs, solver=self.solver_settings())

    def tolerances(self) -> Tolerances:
        return Tolerances(psd=self.psd_tol, no_signalling=self.ns_tol)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ValidationError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValidationError(f"unknown config keys: {unknown}")
        try:
            return cls(**data).validate()
        except TypeError as exc:
            raise ValidationError(str(exc)) from exc
