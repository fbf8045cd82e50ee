"""Positively homogeneous regularizers acting on per-pixel gradients.

A gradient sample ``z`` is a ``(dim, labels)`` matrix whose column ``i``
is the spatial gradient of ``u_i``. Three regularizers are provided:

* :class:`PottsFrobenius` -- ``w * ||z||_F``; with ``w = 1/sqrt(2)`` a unit
  jump between two labels costs exactly 1.
* :class:`MetricEnvelope` -- the support function of the local dual set
  ``{v : ||v^i - v^j||_2 <= d(i, j), sum_k v^k = 0}``, which charges an
  interface between labels ``i`` and ``j`` exactly ``d(i, j)`` per unit
  length.
* :class:`AnisoMetricL1` -- the same envelope applied separately to every
  spatial row of ``z`` (scalar dual entries). For two labels this is
  anisotropic total variation, which is exactly levelable on the grid.

All batched functions accept arrays of shape ``(..., dim, labels)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import _kernels
from .core import ValidationError, grid_spacing, validate_metric


class ConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class PottsFrobenius:
    weight: float = 1.0 / math.sqrt(2.0)

    def __post_init__(self):
        if not (math.isfinite(self.weight) and self.weight > 0):
            raise ValidationError(f"Potts weight must be finite and positive, got {self.weight}")


def _checked_metric(metric) -> np.ndarray:
    d = np.array(metric, dtype=np.float64)
    problems = validate_metric(d)
    if problems:
        raise ValidationError("invalid metric: " + "; ".join(problems))
    d.setflags(write=False)
    return d


@dataclass(frozen=True, eq=False)
class MetricEnvelope:
    metric: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "metric", _checked_metric(self.metric))

    @property
    def n_labels(self) -> int:
        return self.metric.shape[0]


@dataclass(frozen=True, eq=False)
class AnisoMetricL1:
    metric: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "metric", _checked_metric(self.metric))

    @property
    def n_labels(self) -> int:
        return self.metric.shape[0]


RegularizerKind = PottsFrobenius | MetricEnvelope | AnisoMetricL1


@dataclass(frozen=True)
class DlocProjectionConfig:
    max_sweeps: int = 200
    tol: float = 1e-10

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise ValidationError("max_sweeps must be >= 1")
        if not self.tol > 0:
            raise ValidationError("tol must be positive")


@dataclass(frozen=True)
class LambdaBounds:
    lambda_l: float
    lambda_u: float

    def __post_init__(self):
        if not self.lambda_l > 0 or not math.isfinite(self.lambda_u):
            raise ValidationError(f"invalid bounds {self}")
        if self.lambda_u < self.lambda_l:
            raise ValidationError(f"lambda_u < lambda_l in {self}")


@dataclass
class DlocProjection:
    """Result of :func:`project_dloc`. ``converged`` is False when the sweep
    budget ran out before ``tol`` was reached; ``violation`` is the largest
    remaining constraint violation over the batch."""

    v: np.ndarray
    violation: float
    converged: bool
    sweeps: int


@dataclass
class PsiResult:
    values: np.ndarray
    residual: float
    converged: bool


def _check_kind_labels(kind, n_labels: int):
    if isinstance(kind, (MetricEnvelope, AnisoMetricL1)) and kind.n_labels != n_labels:
        raise ValidationError(f"metric is {kind.n_labels}x{kind.n_labels} but field has {n_labels} labels")


def dloc_violation(v: np.ndarray, metric: np.ndarray) -> np.ndarray:
    """Per-element max violation of the pairwise and sum-zero constraints."""
    v = np.asarray(v, dtype=np.float64)
    l = v.shape[-1]
    viol = np.abs(v.sum(axis=-1)).max(axis=-1)
    for i, j in combinations(range(l), 2):
        gap = np.linalg.norm(v[..., i] - v[..., j], axis=-1) - metric[i, j]
        viol = np.maximum(viol, gap)
    return np.maximum(viol, 0.0)


def project_dloc(v: np.ndarray, metric: np.ndarray,
                 cfg: DlocProjectionConfig | None = None) -> DlocProjection:
    """Euclidean projection onto the local dual set by Dykstra's method.

    Each sweep visits the pairwise ball constraints on ``v^i - v^j`` in
    lexicographic order (closed-form projection of the difference, split
    symmetrically) and then the sum-zero hyperplane (mean subtraction).
    Every element of a batch ``(..., dim, l)`` stops independently once
    its constraint violation plus iterate movement falls below
    ``cfg.tol``, so results do not depend on batch composition.
    """
    cfg = cfg or DlocProjectionConfig()
    metric = np.ascontiguousarray(metric, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValidationError("non-finite input to project_dloc")
    shape = v.shape
    dim, l = shape[-2:]
    if metric.shape != (l, l):
        raise ValidationError(f"metric shape {metric.shape} does not match {l} labels")
    x = np.array(v.reshape(-1, dim, l), order="C")
    sweeps, ok = _kernels.dykstra_batch(x, metric, cfg.max_sweeps, cfg.tol)
    return DlocProjection(v=x.reshape(shape), violation=float(dloc_violation(x, metric).max(initial=0.0)),
                          converged=bool(ok.all()), sweeps=int(sweeps.max(initial=0)))


def shrink_into_dloc(v: np.ndarray, metric: np.ndarray) -> np.ndarray:
    """Make ``v`` exactly feasible by re-centering and uniform scaling.

    Scaling by a factor <= 1 keeps the sum at zero and can only shrink
    pairwise distances, so the result lies in the dual set up to rounding
    and ``<z, v>`` is a valid lower bound of the envelope.
    """
    v = np.asarray(v, dtype=np.float64)
    shape = v.shape
    x = np.array(v.reshape((-1,) + shape[-2:]), order="C")
    metric = np.ascontiguousarray(metric, dtype=np.float64)
    for e in range(x.shape[0]):
        _kernels.shrink_one(x[e], metric)
    return x.reshape(shape)


def _envelope_ascent(z: np.ndarray, metric: np.ndarray, cfg: DlocProjectionConfig,
                     warm_start: np.ndarray | None, max_iters: int, rtol: float) -> PsiResult:
    """Projected gradient ascent for ``sup_{v in D_loc} <z, v>`` on a batch."""
    n, dim, l = z.shape
    metric = np.ascontiguousarray(metric, dtype=np.float64)
    values = np.zeros(n)
    norms = np.linalg.norm(z.reshape(n, -1), axis=1)
    nz = np.flatnonzero(norms > 0)
    if nz.size == 0:
        return PsiResult(values, 0.0, True)
    zn = np.ascontiguousarray(z[nz] / norms[nz, None, None])
    if warm_start is not None:
        v = shrink_into_dloc(np.asarray(warm_start, dtype=np.float64).reshape(n, dim, l)[nz], metric)
    else:
        v = project_dloc(zn * metric.max(), metric, cfg).v
    v = np.ascontiguousarray(v)
    vals, residual, ok = _kernels.ascent_batch(zn, v, metric, max_iters, rtol, cfg.max_sweeps, cfg.tol)
    values[nz] = vals * norms[nz]
    return PsiResult(values, float((residual * norms[nz]).max()), bool(ok.all()))


def psi_values(kind, z: np.ndarray, cfg: DlocProjectionConfig | None = None,
               warm_start: np.ndarray | None = None, max_iters: int = 5000,
               rtol: float = 1e-9) -> PsiResult:
    """Evaluate the regularizer on a batch of ``(dim, labels)`` matrices.

    For the metric variants the value is computed by projected gradient
    ascent with step ``1/||z||_F`` and is a lower bound of the exact
    supremum; ``residual`` is the size of the last ascent step, a measure
    of stationarity. ``warm_start`` may hold a dual point per element
    (e.g. the solver's dual iterate) to start from instead of the default
    projection of ``lambda_u * z / ||z||_F``.
    """
    cfg = cfg or DlocProjectionConfig()
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValidationError("non-finite regularizer argument")
    batch = z.shape[:-2]
    dim, l = z.shape[-2:]
    _check_kind_labels(kind, l)
    if isinstance(kind, PottsFrobenius):
        vals = kind.weight * np.linalg.norm(z.reshape(batch + (-1,)), axis=-1)
        return PsiResult(np.asarray(vals, dtype=np.float64), 0.0, True)
    if isinstance(kind, MetricEnvelope):
        flat = z.reshape(-1, dim, l)
        ws = None if warm_start is None else np.asarray(warm_start).reshape(-1, dim, l)
        res = _envelope_ascent(flat, kind.metric, cfg, ws, max_iters, rtol)
        return PsiResult(res.values.reshape(batch), res.residual, res.converged)
    if isinstance(kind, AnisoMetricL1):
        rows = z.reshape(-1, 1, l)
        ws = None if warm_start is None else np.asarray(warm_start).reshape(-1, 1, l)
        res = _envelope_ascent(rows, kind.metric, cfg, ws, max_iters, rtol)
        vals = res.values.reshape(batch + (dim,)).sum(axis=-1)
        return PsiResult(vals, res.residual, res.converged)
    raise TypeError(f"unknown regularizer {kind!r}")


def psi_eval(kind, z: np.ndarray, cfg: DlocProjectionConfig | None = None) -> float:
    """Regularizer value at a single ``(dim, labels)`` matrix."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ValidationError(f"psi_eval expects a (dim, labels) matrix, got shape {z.shape}")
    res = psi_values(kind, z, cfg)
    if not res.converged:
        warnings.warn(f"regularizer evaluation did not converge (residual {res.residual:.2e})",
                      ConvergenceWarning, stacklevel=2)
    return float(res.values)


def lambda_bounds(kind, n_labels: int | None = None) -> LambdaBounds:
    """Constants of the lower/upper boundedness conditions.

    For the metric variants these are the smallest off-diagonal and the
    largest distance. For ``w * ||.||_F`` the upper constant is the value
    on a unit jump, ``w * sqrt(2)``, and the lower one follows from
    ``||z||_F >= sum_i ||z^i||_2 / sqrt(l)``, i.e. ``2 w / sqrt(l)``.
    """
    if isinstance(kind, (MetricEnvelope, AnisoMetricL1)):
        d = kind.metric
        off = d[~np.eye(d.shape[0], dtype=bool)]
        return LambdaBounds(lambda_l=float(off.min()), lambda_u=float(d.max()))
    if isinstance(kind, PottsFrobenius):
        if n_labels is None or n_labels < 2:
            raise ValidationError("Potts bounds need the label count")
        return LambdaBounds(lambda_l=2.0 * kind.weight / math.sqrt(n_labels),
                            lambda_u=kind.weight * math.sqrt(2.0))
    raise TypeError(f"unknown regularizer {kind!r}")


@dataclass
class RegEnergy:
    value: float
    converged: bool = True
    residual: float = 0.0
    per_pixel: np.ndarray | None = field(default=None, repr=False)


def reg_energy(kind, g: np.ndarray, cfg: DlocProjectionConfig | None = None,
               warm_start: np.ndarray | None = None) -> RegEnergy:
    """Regularizer energy of a gradient field ``g`` of shape ``(H, W, 2, l)``.

    ``g`` is the 1/h-scaled forward difference, so the energy is
    ``h * sum_x psi(h * g_x)``.
    """
    g = np.asarray(g, dtype=np.float64)
    if kind is None:
        return RegEnergy(0.0, per_pixel=np.zeros(g.shape[:2]))
    h = grid_spacing(g)
    res = psi_values(kind, h * g, cfg, warm_start=warm_start)
    return RegEnergy(h * math.fsum(res.values.ravel()), res.converged, res.residual, res.values)


def total_reg_energy(kind, g: np.ndarray, cfg: DlocProjectionConfig | None = None) -> float:
    res = reg_energy(kind, g, cfg)
    if not res.converged:
        warnings.warn(f"regularizer evaluation did not converge (residual {res.residual:.2e})",
                      ConvergenceWarning, stacklevel=2)
    return res.value


# Integral labelings only produce l**3 distinct local gradients (pixel, right
# neighbour, lower neighbour), so their envelope values are cached per kind.
_pattern_cache: dict = {}


def _pattern_key(kind, l: int, cfg: DlocProjectionConfig):
    if isinstance(kind, PottsFrobenius):
        return ("potts", kind.weight, l, cfg)
    return (type(kind).__name__, kind.metric.tobytes(), l, cfg)


def pattern_values(kind, l: int, cfg: DlocProjectionConfig | None = None) -> np.ndarray:
    """Regularizer value (unscaled differences) for every local pattern.

    Entry ``[a, r, b]`` is ``psi`` of the matrix with x-row ``e^r - e^a``
    and y-row ``e^b - e^a``.
    """
    cfg = cfg or DlocProjectionConfig()
    key = _pattern_key(kind, l, cfg)
    cached = _pattern_cache.get(key)
    if cached is not None:
        return cached
    eye = np.eye(l)
    a, r, b = np.meshgrid(np.arange(l), np.arange(l), np.arange(l), indexing="ij")
    z = np.stack([eye[r] - eye[a], eye[b] - eye[a]], axis=-2)
    vals = psi_values(kind, z, cfg).values
    vals.setflags(write=False)
    _pattern_cache[key] = vals
    return vals


def integral_reg_energy(kind, labels: np.ndarray, n_labels: int,
                        cfg: DlocProjectionConfig | None = None) -> float:
    """Regularizer energy of an integral labeling via the pattern table.

    Same value as :func:`reg_energy` on the embedded field, but each
    distinct local pattern is evaluated only once.
    """
    if kind is None:
        return 0.0
    labels = np.asarray(labels)
    _check_kind_labels(kind, n_labels)
    h = 1.0 / max(labels.shape)
    right = np.concatenate([labels[:, 1:], labels[:, -1:]], axis=1)
    below = np.concatenate([labels[1:, :], labels[-1:, :]], axis=0)
    table = pattern_values(kind, n_labels, cfg)
    return h * math.fsum(table[labels, right, below].ravel())


def project_dual(kind, p: np.ndarray, cfg: DlocProjectionConfig | None = None) -> DlocProjection:
    """Project a dual field ``(..., 2, l)`` pixelwise onto the dual set of ``kind``."""
    p = np.asarray(p, dtype=np.float64)
    dim, l = p.shape[-2:]
    _check_kind_labels(kind, l)
    if isinstance(kind, PottsFrobenius):
        norm = np.linalg.norm(p.reshape(p.shape[:-2] + (-1,)), axis=-1)[..., None, None]
        scale = np.where(norm > kind.weight, kind.weight / np.where(norm > 0, norm, 1.0), 1.0)
        return DlocProjection(p * scale, 0.0, True, 1)
    if isinstance(kind, MetricEnvelope):
        return project_dloc(p, kind.metric, cfg)
    if isinstance(kind, AnisoMetricL1):
        proj = project_dloc(p.reshape(-1, 1, l), kind.metric, cfg)
        proj.v = proj.v.reshape(p.shape)
        return proj
    raise TypeError(f"unknown regularizer {kind!r}")


def dual_violation(kind, p: np.ndarray) -> float:
    """Largest violation of the per-pixel dual constraints of ``kind``."""
    p = np.asarray(p, dtype=np.float64)
    l = p.shape[-1]
    if isinstance(kind, PottsFrobenius):
        norm = np.linalg.norm(p.reshape(p.shape[:-2] + (-1,)), axis=-1)
        return float(np.maximum(norm - kind.weight, 0.0).max(initial=0.0))
    if isinstance(kind, MetricEnvelope):
        return float(dloc_violation(p, kind.metric).max(initial=0.0))
    if isinstance(kind, AnisoMetricL1):
        return float(dloc_violation(p.reshape(-1, 1, l), kind.metric).max(initial=0.0))
    raise TypeError(f"unknown regularizer {kind!r}")


def make_dual_feasible(kind, p: np.ndarray) -> np.ndarray:
    """Remove rounding-level infeasibility from a dual field.

    Re-centers and shrinks each pixel's dual matrix (rows separately for
    the anisotropic variant); exact for already feasible input up to one
    ulp.
    """
    p = np.asarray(p, dtype=np.float64)
    l = p.shape[-1]
    if isinstance(kind, PottsFrobenius):
        return project_dual(kind, p).v * (1.0 - 4 * np.finfo(float).eps)
    if isinstance(kind, MetricEnvelope):
        return shrink_into_dloc(p, kind.metric)
    if isinstance(kind, AnisoMetricL1):
        return shrink_into_dloc(p.reshape(-1, 1, l), kind.metric).reshape(p.shape)
    raise TypeError(f"unknown regularizer {kind!r}")
