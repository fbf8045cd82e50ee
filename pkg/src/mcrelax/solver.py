"""First-order primal-dual solver for the relaxed labeling problem.

The discrete problem is

    min_{u(x) in simplex}  h^2 * sum_x <u(x), s(x)> + h^2 * sum_x psi(grad u(x))

with ``grad`` the 1/h-scaled forward difference (Neumann boundary). Writing
the regularizer as a support function gives the saddle-point problem

    min_u max_{p(x) in D}  h^2 * ( <u, s> + <grad u, p> )

and the dual objective ``f_D(p) = h^2 * sum_x min_i (s - div p)_i(x)``.
The common factor ``h^2`` does not change the iteration, so the steps
below work on the unscaled Lagrangian ``<u, s> + <grad u, p>``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ValidationError, check_data_term, check_simplex_field, datacost, grid_spacing, project_simplex
from .regularizer import (
    DlocProjectionConfig,
    MetricEnvelope,
    AnisoMetricL1,
    _check_kind_labels,
    dual_violation,
    project_dual,
    reg_energy,
)


def gradient(u: np.ndarray) -> np.ndarray:
    """Forward differences ``(H, W, l) -> (H, W, 2, l)``; row 0 is d/dx."""
    u = np.asarray(u, dtype=np.float64)
    h = grid_spacing(u)
    g = np.zeros(u.shape[:2] + (2,) + u.shape[2:])
    g[:, :-1, 0] = (u[:, 1:] - u[:, :-1]) / h
    g[:-1, :, 1] = (u[1:] - u[:-1]) / h
    return g


def divergence(p: np.ndarray) -> np.ndarray:
    """Negative adjoint of :func:`gradient`, ``(H, W, 2, l) -> (H, W, l)``."""
    p = np.asarray(p, dtype=np.float64)
    h = grid_spacing(p)
    px = p[:, :, 0]
    py = p[:, :, 1]
    div = np.zeros(px.shape)
    div[:, :-1] += px[:, :-1]
    div[:, 1:] -= px[:, :-1]
    div[:-1] += py[:-1]
    div[1:] -= py[:-1]
    return div / h


@dataclass(frozen=True)
class SolverConfig:
    """Step sizes default to ``1/L`` with ``L^2 = 8/h^2`` (set when None)."""

    tau: float | None = None
    sigma: float | None = None
    theta: float = 1.0
    max_iters: int = 5000
    gap_tol: float = 1e-3
    check_every: int = 50
    dloc_cfg: DlocProjectionConfig = field(default_factory=DlocProjectionConfig)

    def steps(self, h: float) -> tuple[float, float]:
        lip = math.sqrt(8.0) / h
        tau = self.tau if self.tau is not None else 1.0 / lip
        sigma = self.sigma if self.sigma is not None else 1.0 / lip
        if tau <= 0 or sigma <= 0:
            raise ValidationError("step sizes must be positive")
        if tau * sigma * lip * lip > 1.0 + 1e-12:
            raise ValidationError(f"tau*sigma*L^2 = {tau * sigma * lip * lip:.4g} > 1")
        return tau, sigma

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValidationError("theta must lie in [0, 1]")
        if self.max_iters < 1 or self.check_every < 1:
            raise ValidationError("max_iters and check_every must be >= 1")
        if not self.gap_tol > 0:
            raise ValidationError("gap_tol must be positive")


@dataclass(frozen=True)
class EnergyReport:
    primal: float
    data_part: float
    reg_part: float
    dual: float
    gap: float
    rel_gap: float
    psi_converged: bool = True
    psi_residual: float = 0.0

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class SolverState:
    u: np.ndarray
    u_prev: np.ndarray
    p: np.ndarray
    iter: int = 0
    dual_converged: bool = True

    @classmethod
    def initial(cls, shape: tuple[int, int, int], u0: np.ndarray | None = None) -> "SolverState":
        height, width, l = shape
        u = np.full(shape, 1.0 / l) if u0 is None else check_simplex_field(u0).copy()
        if u.shape != shape:
            raise ValidationError(f"initial field has shape {u.shape}, expected {shape}")
        return cls(u=u, u_prev=u.copy(), p=np.zeros((height, width, 2, l)))


@dataclass
class SolveResult:
    u: np.ndarray
    p: np.ndarray
    report: EnergyReport
    log: list[tuple[int, float, float, float]]
    iterations: int
    converged: bool


def pd_step(state: SolverState, s: np.ndarray, kind, cfg: SolverConfig) -> SolverState:
    """One primal-dual iteration with over-relaxation ``theta``."""
    h = grid_spacing(s)
    tau, sigma = cfg.steps(h)
    u_bar = state.u + cfg.theta * (state.u - state.u_prev)
    if kind is None:
        p = np.zeros_like(state.p)
        ok = True
    else:
        proj = project_dual(kind, state.p + sigma * gradient(u_bar), cfg.dloc_cfg)
        p, ok = proj.v, proj.converged
    u_new = project_simplex(state.u - tau * (s - divergence(p)))
    return SolverState(u=u_new, u_prev=state.u, p=p, iter=state.iter + 1,
                       dual_converged=ok)


def dual_energy(p: np.ndarray, s: np.ndarray) -> float:
    """``f_D(p) = h^2 * sum_x min_i (s_i(x) - div(p)_i(x))``.

    Valid lower bound of the primal energy of every simplex field as long
    as ``p`` is pixelwise inside the dual set of the regularizer.
    """
    s = np.asarray(s, dtype=np.float64)
    h = grid_spacing(s)
    return h * h * math.fsum((s - divergence(p)).min(axis=-1).ravel())


def primal_energy(u: np.ndarray, s: np.ndarray, kind, dloc_cfg: DlocProjectionConfig | None = None,
                  warm_start: np.ndarray | None = None) -> tuple[float, float, float, bool, float]:
    """Return ``(primal, data_part, reg_part, converged, residual)``."""
    if kind is not None:
        _check_kind_labels(kind, u.shape[-1])
    data = datacost(u, s)
    reg = reg_energy(kind, gradient(u), dloc_cfg, warm_start=warm_start)
    return data + reg.value, data, reg.value, reg.converged, reg.residual


def energy_report(u: np.ndarray, p: np.ndarray, s: np.ndarray, kind,
                  dloc_cfg: DlocProjectionConfig | None = None) -> EnergyReport:
    warm = p if isinstance(kind, (MetricEnvelope, AnisoMetricL1)) else None
    primal, data, reg, ok, res = primal_energy(u, s, kind, dloc_cfg, warm_start=warm)
    dual = dual_energy(p, s)
    gap = primal - dual
    rel = gap / max(abs(dual), 1e-12)
    return EnergyReport(primal=primal, data_part=data, reg_part=reg, dual=dual, gap=gap,
                        rel_gap=rel, psi_converged=ok, psi_residual=res)


def solve(s: np.ndarray, kind, cfg: SolverConfig | None = None,
          initial: np.ndarray | None = None) -> SolveResult:
    """Iterate :func:`pd_step` until ``rel_gap <= gap_tol`` or ``max_iters``.

    Energies are evaluated every ``cfg.check_every`` iterations (and at the
    last one); the iterate with the smallest relative gap is returned.
    ``log`` holds ``(iter, primal, dual, rel_gap)`` rows.
    """
    cfg = cfg or SolverConfig()
    s = check_data_term(s, allow_negative=True)
    if kind is not None:
        _check_kind_labels(kind, s.shape[-1])
    state = SolverState.initial(s.shape, initial)
    best = None
    log = []
    converged = False
    while state.iter < cfg.max_iters:
        state = pd_step(state, s, kind, cfg)
        if state.iter % cfg.check_every and state.iter != cfg.max_iters:
            continue
        rep = energy_report(state.u, state.p, s, kind, cfg.dloc_cfg)
        log.append((state.iter, rep.primal, rep.dual, rep.rel_gap))
        if best is None or rep.rel_gap < best[0].rel_gap:
            best = (rep, state.u.copy(), state.p.copy())
        if rep.rel_gap <= cfg.gap_tol:
            converged = True
            break
    rep, u, p = best
    return SolveResult(u=u, p=p, report=rep, log=log, iterations=state.iter, converged=converged)


def check_dual_field(kind, p: np.ndarray, tol: float = 1e-8) -> float:
    """Raise if ``p`` leaves the dual set by more than ``tol``; return the violation."""
    viol = dual_violation(kind, p)
    if viol > tol:
        raise ValidationError(f"dual field infeasible: max violation {viol:.3e} > {tol:.1e}")
    return viol

