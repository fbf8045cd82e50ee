"""Grid geometry, labeling fields and simplex helpers.

Fields are plain numpy arrays laid out as ``(height, width, labels)``:
row-major over pixels (x fastest), with the label vector of a pixel
contiguous in memory. Integral labelings are ``(height, width)`` integer
arrays of 0-based label indices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: Tolerance used for all feasibility checks of simplex-valued fields.
EPS_FEAS = 1e-9


class ValidationError(ValueError):
    """Raised when an input violates a documented invariant."""


@dataclass(frozen=True)
class GridShape:
    """Pixel grid of ``width x height`` with ``labels`` classes.

    The grid discretizes the unit box; the spacing is
    ``h = 1 / max(width, height)``.
    """

    width: int
    height: int
    labels: int
    dim: int = 2

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValidationError(f"grid must be at least 1x1, got {self.width}x{self.height}")
        if self.labels < 2:
            raise ValidationError(f"need at least 2 labels, got {self.labels}")
        if self.dim != 2:
            raise ValidationError("only 2-D grids are supported")

    @property
    def h(self) -> float:
        return 1.0 / max(self.width, self.height)

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    @property
    def field_shape(self) -> tuple[int, int, int]:
        return (self.height, self.width, self.labels)

    @classmethod
    def of(cls, field: np.ndarray) -> "GridShape":
        """Shape of a ``(height, width, labels)`` array."""
        if field.ndim != 3:
            raise ValidationError(f"expected a (height, width, labels) array, got shape {field.shape}")
        height, width, labels = field.shape
        return cls(width=width, height=height, labels=labels)


def grid_spacing(field: np.ndarray) -> float:
    return 1.0 / max(field.shape[0], field.shape[1])


def check_simplex_field(u: np.ndarray, eps: float = EPS_FEAS) -> np.ndarray:
    """Validate a relaxed labeling and return it as a float64 array."""
    u = np.asarray(u, dtype=np.float64)
    GridShape.of(u)
    if not np.all(np.isfinite(u)):
        raise ValidationError("simplex field contains non-finite values")
    if u.min() < -eps:
        raise ValidationError(f"simplex field has negative entry {u.min():.3e}")
    dev = np.abs(u.sum(axis=-1) - 1.0).max()
    if dev > eps:
        raise ValidationError(f"simplex field rows do not sum to 1 (max deviation {dev:.3e})")
    return u


def check_integral_field(labels: np.ndarray, n_labels: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValidationError(f"integral field must be (height, width), got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValidationError("integral field must hold integer label indices")
    if labels.size and (labels.min() < 0 or labels.max() >= n_labels):
        raise ValidationError(f"label index out of range [0, {n_labels})")
    return labels.astype(np.int64, copy=False)


def check_data_term(s: np.ndarray, allow_negative: bool = False) -> np.ndarray:
    """Validate per-pixel label costs.

    Nonnegativity is required for the multiplicative rounding bound;
    pass ``allow_negative=True`` only for energy evaluation.
    """
    s = np.asarray(s, dtype=np.float64)
    GridShape.of(s)
    if not np.all(np.isfinite(s)):
        raise ValidationError("data term contains non-finite costs")
    if not allow_negative and s.min() < 0:
        raise ValidationError(f"data term has negative cost {s.min():.3e}")
    return s


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the unit simplex along the last axis.

    Sort-based finite algorithm: with ``v`` sorted decreasingly, the
    threshold is ``(cumsum_k - 1) / k`` for the largest ``k`` that keeps
    the k-th entry above it. Works on a single vector or on any stack of
    vectors.
    """
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValidationError("cannot project non-finite vector onto the simplex")
    n = v.shape[-1]
    srt = -np.sort(-v, axis=-1)
    css = np.cumsum(srt, axis=-1) - 1.0
    k = np.arange(1, n + 1, dtype=np.float64)
    cond = srt - css / k > 0
    # cond is true on a prefix; rho is the last index of that prefix
    rho = n - 1 - np.argmax(cond[..., ::-1], axis=-1)
    theta = np.take_along_axis(css, rho[..., None], axis=-1) / (rho[..., None] + 1.0)
    return np.maximum(v - theta, 0.0)


def datacost(u: np.ndarray, s: np.ndarray) -> float:
    """Discrete data energy ``h^2 * sum_x <u(x), s(x)>``.

    The per-pixel products are reduced with :func:`math.fsum`, which is
    correctly rounded and therefore independent of summation order.
    """
    u = np.asarray(u, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    if u.shape != s.shape:
        raise ValidationError(f"shape mismatch: u {u.shape} vs s {s.shape}")
    h = grid_spacing(u)
    return h * h * math.fsum((u * s).ravel())


def embed_integral(labels: np.ndarray, n_labels: int) -> np.ndarray:
    """Map label indices to unit vectors, ``(H, W) -> (H, W, l)``."""
    labels = check_integral_field(labels, n_labels)
    return np.eye(n_labels)[labels]


def argmax_labels(u: np.ndarray) -> np.ndarray:
    """Pixelwise argmax; ties go to the lowest label index."""
    return np.argmax(np.asarray(u), axis=-1).astype(np.int64)


def validate_metric(d: np.ndarray, rtol: float = 1e-12) -> list[str]:
    """List every violated metric axiom of the label distance matrix ``d``.

    Returns an empty list for a valid metric. Indices in messages are
    0-based.
    """
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        return [f"metric must be a square matrix, got shape {d.shape}"]
    l = d.shape[0]
    out = []
    if not np.all(np.isfinite(d)):
        out.append("metric has non-finite entries")
        return out
    scale = max(1.0, float(np.abs(d).max()))
    tol = rtol * scale
    for i in range(l):
        if abs(d[i, i]) > tol:
            out.append(f"nonzero diagonal d({i},{i})={d[i, i]}")
    for i in range(l):
        for j in range(i + 1, l):
            if abs(d[i, j] - d[j, i]) > tol:
                out.append(f"symmetry violated at ({i},{j}): {d[i, j]} != {d[j, i]}")
            if d[i, j] <= 0 or d[j, i] <= 0:
                out.append(f"non-positive distance at ({i},{j})")
    for i in range(l):
        for k in range(l):
            if i == k:
                continue
            for j in range(l):
                if j in (i, k):
                    continue
                if d[i, k] > d[i, j] + d[j, k] + tol:
                    out.append(f"triangle inequality violated at ({i},{j},{k}): "
                               f"d({i},{k})={d[i, k]} > {d[i, j]} + {d[j, k]}")
    return out


def uniform_metric(l: int, weight: float = 1.0) -> np.ndarray:
    """Potts distance ``weight * (1 - delta_ij)``."""
    return weight * (1.0 - np.eye(l))
