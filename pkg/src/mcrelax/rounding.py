"""Probabilistic rounding of relaxed labelings.

:func:`round_once` repeatedly draws a label ``i`` and a threshold
``alpha`` uniformly and assigns ``i`` to every still unassigned pixel with
``u_i(x) > alpha``, until every pixel carries a label. Labels are 0-based.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import ValidationError, check_data_term, check_simplex_field, grid_spacing
from .regularizer import DlocProjectionConfig, integral_reg_energy
from .rng import RngSpec

Z95 = 1.959963984540054


@dataclass
class RoundingTrace:
    gamma: list[tuple[int, float]]
    c_final: np.ndarray
    unassigned_history: list[int]
    k_final: int


class RoundingBudgetError(RuntimeError):
    """Raised when ``k_max`` rounds leave pixels unassigned."""

    def __init__(self, msg: str, trace: RoundingTrace):
        super().__init__(msg)
        self.trace = trace


def default_k_max(n_labels: int, n_pixels: int) -> int:
    return int(math.ceil(64 * n_labels * math.log(n_pixels + 2)))


def round_once(u: np.ndarray, rng: RngSpec, k_max: int | None = None,
               check: bool = True) -> tuple[np.ndarray, RoundingTrace]:
    """Round ``u`` of shape ``(H, W, l)`` to an integral labeling."""
    if check:
        u = check_simplex_field(u)
    height, width, l = u.shape
    flat = u.reshape(-1, l)
    n = flat.shape[0]
    k_max = default_k_max(l, n) if k_max is None else k_max
    if k_max < 1:
        raise ValidationError("k_max must be >= 1")
    gen = rng.generator()
    labels = np.full(n, -1, dtype=np.int64)
    todo = np.arange(n)
    c = np.ones(l)
    gamma = []
    history = []
    k = 0
    while todo.size and k < k_max:
        k += 1
        i = gen.below(l)
        alpha = gen.uniform()
        gamma.append((i, alpha))
        if alpha < c[i]:
            c[i] = alpha
        hit = flat[todo, i] > alpha
        labels[todo[hit]] = i
        todo = todo[~hit]
        history.append(int(todo.size))
    trace = RoundingTrace(gamma=gamma, c_final=c, unassigned_history=history, k_final=k)
    if todo.size:
        raise RoundingBudgetError(f"{todo.size} pixels unassigned after {k_max} rounds", trace)
    return labels.reshape(height, width), trace


def round_argmax(u: np.ndarray) -> np.ndarray:
    """Nearest vertex; ties go to the lowest label."""
    return np.argmax(check_simplex_field(u), axis=-1).astype(np.int64)


def threshold_two_class(u: np.ndarray, alpha: float) -> np.ndarray:
    """Label 0 where ``u_0 > alpha``, label 1 elsewhere."""
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 3 or u.shape[-1] != 2:
        raise ValidationError("thresholding needs a two-label field")
    return np.where(u[..., 0] > alpha, 0, 1).astype(np.int64)


def termination_bound(l: int, k: int) -> float:
    """Lower bound on ``P(sum_j c_j^k < 1)`` after ``k`` rounds with ``l`` labels.

    ``sum_{m=0}^{l} C(l, m) (-1)^m (1 - m/l^2)^k``, evaluated in exact
    rational arithmetic and clamped to ``[0, 1]``.
    """
    if l < 2 or k < 1:
        raise ValidationError("need l >= 2 and k >= 1")
    total = sum(math.comb(l, m) * (-1) ** m * (1 - Fraction(m, l * l)) ** k for m in range(l + 1))
    return float(min(max(total, Fraction(0)), Fraction(1)))


@dataclass
class RoundingStats:
    n_samples: int
    n_failed: int
    mean_f: float
    std_f: float | None
    ci95_halfwidth: float | None
    mean_data: float
    std_data: float | None
    mean_reg: float
    std_reg: float | None
    mean_k_final: float
    min_f: float
    best_index: int
    best_labels: np.ndarray | None = field(default=None, repr=False)
    marginals: np.ndarray | None = field(default=None, repr=False)
    f_values: np.ndarray | None = field(default=None, repr=False)
    data_values: np.ndarray | None = field(default=None, repr=False)

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "n_samples", "n_failed", "mean_f", "std_f", "ci95_halfwidth", "mean_data",
            "std_data", "mean_reg", "std_reg", "mean_k_final", "min_f", "best_index")}
        if self.marginals is not None:
            out["marginals"] = self.marginals.tolist()
        return out


def _mean_std(x: np.ndarray) -> tuple[float, float | None]:
    n = len(x)
    mean = math.fsum(x) / n
    if n < 2:
        return mean, None
    var = math.fsum((x - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var)


def worker_count() -> int:
    """Worker cap from ``MCRELAX_THREADS`` (0 or unset: one per CPU)."""
    raw = os.environ.get("MCRELAX_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"MCRELAX_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValidationError("MCRELAX_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def sample_energy(labels: np.ndarray, s: np.ndarray, kind,
                  dloc_cfg: DlocProjectionConfig | None = None) -> tuple[float, float]:
    """``(data, reg)`` energy of an integral labeling."""
    h = grid_spacing(s)
    picked = np.take_along_axis(s, labels[..., None], axis=-1)
    data = h * h * math.fsum(picked.ravel())
    reg = integral_reg_energy(kind, labels, s.shape[-1], dloc_cfg)
    return data, reg


def estimate_expectation(u: np.ndarray, s: np.ndarray, kind, n_samples: int, rng: RngSpec,
                         k_max: int | None = None, dloc_cfg: DlocProjectionConfig | None = None,
                         workers: int | None = None, marginals: bool = False) -> RoundingStats:
    """Monte Carlo estimate of the expected energy after rounding.

    Sample ``k`` uses ``rng.substream(k)``, so results are identical for
    any worker count. Samples that exhaust ``k_max`` are counted in
    ``n_failed``; more than 1% failures raise :class:`RoundingBudgetError`.
    With a single sample the spread fields are None.
    """
    if n_samples < 1:
        raise ValidationError("need at least 1 sample")
    u = check_simplex_field(u)
    s = check_data_term(s, allow_negative=True)
    if u.shape != s.shape:
        raise ValidationError(f"shape mismatch: u {u.shape} vs s {s.shape}")
    l = u.shape[-1]
    workers = worker_count() if workers is None else workers

    def run(k):
        try:
            labels, trace = round_once(u, rng.substream(k), k_max, check=False)
        except RoundingBudgetError:
            return None
        data, reg = sample_energy(labels, s, kind, dloc_cfg)
        return k, labels, data, reg, trace.k_final

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(n_samples)))
    else:
        results = [run(k) for k in range(n_samples)]

    done = [r for r in results if r is not None]
    failed = n_samples - len(done)
    if failed > 0.01 * n_samples:
        raise RoundingBudgetError(f"{failed} of {n_samples} samples exceeded the round budget",
                                  RoundingTrace([], np.ones(l), [], -1))
    data = np.array([r[2] for r in done])
    reg = np.array([r[3] for r in done])
    f = data + reg
    mean_f, std_f = _mean_std(f)
    mean_d, std_d = _mean_std(data)
    mean_r, std_r = _mean_std(reg)
    marg = None
    if marginals:
        counts = np.zeros(u.shape)
        for _, labels, *_ in done:
            counts += np.eye(l)[labels]
        marg = counts / len(done)
    best = int(np.argmin(f))
    return RoundingStats(
        n_samples=len(done), n_failed=failed, mean_f=mean_f, std_f=std_f,
        ci95_halfwidth=None if std_f is None else Z95 * std_f / math.sqrt(len(done)),
        mean_data=mean_d, std_data=std_d, mean_reg=mean_r, std_reg=std_r,
        mean_k_final=math.fsum(r[4] for r in done) / len(done),
        min_f=float(f[best]), best_index=done[best][0], best_labels=done[best][1], marginals=marg,
        f_values=f, data_values=data)
