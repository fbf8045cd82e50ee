"""Optimality certificates for rounded labelings."""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import ValidationError, check_simplex_field
from .regularizer import DlocProjectionConfig, lambda_bounds, pattern_values
from .rounding import RoundingStats, sample_energy, threshold_two_class
from .solver import primal_energy


class CertificateError(ValidationError):
    pass


def a_priori_factor(kind, n_labels: int | None = None) -> float:
    """``2 * lambda_u / lambda_l`` for the given regularizer."""
    b = lambda_bounds(kind, n_labels)
    return 2.0 * b.lambda_u / b.lambda_l


def a_posteriori_eps(f_rounded: float, f_dual: float) -> float:
    """Relative gap ``(f_rounded - f_dual) / f_dual`` of a rounded labeling.

    Needs a positive dual value; with nonnegative costs the dual at
    ``p = 0`` is already nonnegative, so a nonpositive value usually means
    the costs have to be shifted.
    """
    if not f_dual > 0:
        raise CertificateError(f"certificate undefined for dual value {f_dual!r} <= 0; "
                               "shift the data term to make the dual positive")
    return (f_rounded - f_dual) / f_dual


@dataclass
class BoundCheck:
    mean_f: float
    ci95: float
    rhs: float
    satisfied: bool


@dataclass
class Certificate:
    a_priori_factor: float
    f_relaxed: float
    f_rounded: float
    f_dual: float | None
    eps_posteriori: float | None
    bound_check: BoundCheck
    degenerate: bool = False
    data_shifted: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


def check_bound(u_relaxed: np.ndarray, s: np.ndarray, stats: RoundingStats, kind,
                f_dual: float | None = None, dloc_cfg: DlocProjectionConfig | None = None,
                data_shifted: bool = False) -> Certificate:
    """Compare the rounding statistics with ``factor * f(u_relaxed)``.

    The check is one-sided: it passes when ``mean_f - ci95 <= rhs``. If
    ``f_dual`` is given, the best sample's relative gap to it is recorded
    as the a posteriori bound. For ``f(u_relaxed) == 0`` the bound is
    vacuous; the certificate is then marked degenerate and passes only if
    every rounded sample also has zero energy.
    """
    if stats.ci95_halfwidth is None:
        raise ValidationError("the bound check needs at least 2 rounding samples")
    u_relaxed = check_simplex_field(u_relaxed)
    l = u_relaxed.shape[-1]
    factor = a_priori_factor(kind, l)
    f_rel = primal_energy(u_relaxed, s, kind, dloc_cfg)[0]
    rhs = factor * f_rel
    degenerate = f_rel == 0.0
    if degenerate:
        satisfied = stats.mean_f <= 1e-12 and stats.std_f <= 1e-12
    else:
        satisfied = stats.mean_f - stats.ci95_halfwidth <= rhs
    eps = None if f_dual is None else a_posteriori_eps(stats.min_f, f_dual)
    return Certificate(
        a_priori_factor=factor, f_relaxed=f_rel, f_rounded=stats.min_f, f_dual=f_dual,
        eps_posteriori=eps,
        bound_check=BoundCheck(stats.mean_f, stats.ci95_halfwidth, rhs, bool(satisfied)),
        degenerate=degenerate, data_shifted=data_shifted)


@dataclass
class CoareaResult:
    lhs: float
    rhs: float
    rel_dev: float
    n_alpha: int


def coarea_check_two_class(u: np.ndarray, s: np.ndarray, kind, n_alpha: int,
                           dloc_cfg: DlocProjectionConfig | None = None) -> CoareaResult:
    """Compare ``f(u)`` with the midpoint-rule mean of ``f`` over thresholdings.

    Thresholds are ``alpha_m = (m - 1/2) / n_alpha``. Pass ``kind=None`` for
    the data term alone.
    """
    u = check_simplex_field(u)
    if u.shape[-1] != 2:
        raise ValidationError("coarea check needs exactly two labels")
    if n_alpha < 1:
        raise ValidationError("n_alpha must be >= 1")
    lhs = primal_energy(u, s, kind, dloc_cfg)[0]
    vals = []
    for m in range(1, n_alpha + 1):
        labels = threshold_two_class(u, (m - 0.5) / n_alpha)
        vals.append(sum(sample_energy(labels, s, kind, dloc_cfg)))
    rhs = math.fsum(vals) / n_alpha
    scale = max(abs(lhs), abs(rhs))
    rel = abs(lhs - rhs) / scale if scale > 0 else 0.0
    return CoareaResult(lhs=lhs, rhs=rhs, rel_dev=rel, n_alpha=n_alpha)


def exhaustive_integral_optimum(s: np.ndarray, kind,
                                dloc_cfg: DlocProjectionConfig | None = None,
                                max_labelings: int = 1 << 20) -> tuple[np.ndarray, float]:
    """Best integral labeling by enumerating all ``l ** (H * W)`` labelings.

    Candidates are ranked with a vectorized energy; the returned value is
    recomputed with the exact per-labeling evaluation used for rounded
    samples, so comparisons against them are like for like.
    """
    s = np.asarray(s, dtype=np.float64)
    height, width, l = s.shape
    n = height * width
    if l ** n > max_labelings:
        raise ValidationError(f"{l}^{n} labelings exceed the enumeration limit")
    h = 1.0 / max(height, width)
    all_labels = np.array(list(itertools.product(range(l), repeat=n)), dtype=np.int64)
    all_labels = all_labels.reshape(-1, height, width)
    data = h * h * np.take_along_axis(
        np.broadcast_to(s, all_labels.shape + (l,)), all_labels[..., None], axis=-1
    ).sum(axis=(1, 2, 3))
    if kind is None:
        reg = np.zeros(len(all_labels))
    else:
        table = pattern_values(kind, l, dloc_cfg)
        right = np.concatenate([all_labels[:, :, 1:], all_labels[:, :, -1:]], axis=2)
        below = np.concatenate([all_labels[:, 1:, :], all_labels[:, -1:, :]], axis=1)
        reg = h * table[all_labels, right, below].sum(axis=(1, 2))
    approx = data + reg
    cand = np.flatnonzero(approx <= approx.min() + 1e-9 * max(1.0, abs(approx.min())))
    exact = [sum(sample_energy(all_labels[c], s, kind, dloc_cfg)) for c in cand]
    best = int(np.argmin(exact))
    return all_labels[cand[best]], float(exact[best])


def integral_energy(labels: np.ndarray, s: np.ndarray, kind,
                    dloc_cfg: DlocProjectionConfig | None = None) -> float:
    return sum(sample_energy(np.asarray(labels), s, kind, dloc_cfg))

