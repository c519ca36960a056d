from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class Status(str, Enum):
    OPTIMAL = "OPTIMAL"
    PRIMAL_INFEASIBLE = "PRIMAL_INFEASIBLE"
    DUAL_INFEASIBLE = "DUAL_INFEASIBLE"
    MAX_ITER = "MAX_ITER"
    NUMERICAL = "NUMERICAL"


@dataclass(frozen=True)
class SolverSettings:
    tol_p: float = 1e-9
    tol_d: float = 1e-9
    tol_g: float = 1e-9
    #: relative residual accepted for an infeasibility certificate
    tol_inf: float = 1e-9
    max_iter: int = 100
    #: refine the final iterate with an active-set Newton polish
    polish: bool = True

    @classmethod
    def uniform(cls, tol, **kw):
        return cls(tol_p=tol, tol_d=tol, tol_g=tol, **kw)


@dataclass
class ConeSolution:
    """Primal/dual result of a cone solve.

    For OPTIMAL results ``z`` is the primal point, ``equality_duals`` and
    ``cone_duals`` satisfy ``E' y + G' z_c + c = 0``. For the two
    infeasibility statuses the vectors hold the certificate instead.
    """

    z: np.ndarray
    equality_duals: np.ndarray
    cone_duals: np.ndarray
    slacks: np.ndarray
    status: Status
    primal_residual: float
    dual_residual: float
    gap: float
    objective: float
    iterations: int = 0
    backend: str = "bundled"
    info: dict = field(default_factory=dict)

    @property
    def optimal(self):
        return self.status is Status.OPTIMAL

    def summary(self):
        return {
            "status": self.status.value,
            "backend": self.backend,
            "iterations": self.iterations,
            "objective": self.objective,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "gap": self.gap,
        }


def certify(program, z, y, zc, s=None):
    """Residuals of a primal/dual pair in the program's own coordinates.

    Returns:
        (primal_residual, dual_residual, gap, primal objective) where the
        residuals are scaled by ``1 + ||data||`` and the gap is
        ``max(|pobj - dobj|, s'z) / (1 + |pobj|)``.
    """
    if s is None:
        s = program.slack(z)
    r_eq = program.E @ z - program.f
    r_in = program.G @ z + s - program.h
    pres = max(
        np.linalg.norm(r_eq) / (1 + np.linalg.norm(program.f)) if r_eq.size else 0.0,
        np.linalg.norm(r_in) / (1 + np.linalg.norm(program.h)) if r_in.size else 0.0,
        max(program.cone_violation(s), 0.0) / (1 + np.linalg.norm(program.h)),
    )
    r_d = program.E.T @ y + program.G.T @ zc + program.c
    dres = np.linalg.norm(r_d) / (1 + np.linalg.norm(program.c))
    pobj = float(program.c @ z)
    dobj = float(-program.f @ y - program.h @ zc)
    gap = max(abs(pobj - dobj), float(s @ zc)) / (1 + abs(pobj))
    return float(pres), float(dres), float(gap), pobj
