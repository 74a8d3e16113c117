from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CLAMP = 1e-9


@dataclass
class Witness:
    """Dual-feasible operators whose pairing with an object lower-bounds its robustness.

    ``normalisation`` holds the dominating operators of the dual program
    (e.g. ``Z`` with W_a <= Z). ``evidence`` is filled by the check routines
    and records every recomputed condition.
    """

    kind: str  # incompatibility | assemblage | teleportation | buscemi | behaviour
    operators: np.ndarray
    dims: tuple
    normalisation: dict
    certified_value: float
    evidence: dict = field(default_factory=dict)
    valid: bool | None = None


@dataclass
class RobustnessResult:
    value: float
    bound: str  # exact | lower | upper
    program: str
    witness: Witness | None = None
    decomposition: dict | None = None
    diagnostics: dict = field(default_factory=dict)


def clamp(value: float, diagnostics: dict, bound: str = "exact") -> float:
    """Clamp tiny negative solver noise to 0.

    Robustness is nonnegative, so a negative lower or upper bound is replaced
    by 0 whatever its size; both stay valid bounds. The raw number is kept.
    """
    if bound != "exact" and value < 0:
        diagnostics["raw_value"] = float(value)
        diagnostics.setdefault("notes", []).append(f"negative {bound} bound {value:.3e} raised to 0")
        return 0.0
    if -CLAMP <= value < 0:
        diagnostics.setdefault("notes", []).append(f"clamped tiny negative value {value:.3e} to 0")
        return 0.0
    if value < -CLAMP:
        diagnostics.setdefault("notes", []).append(f"negative value {value:.3e} beyond clamp tolerance")
    return float(value)


def solve_diag(sol) -> dict:
    return {"gap": sol.gap, "residual_primal": sol.residuals["primal"], "residual_dual": sol.residuals["dual"],
            "status": sol.status, "iterations": sol.iterations}
