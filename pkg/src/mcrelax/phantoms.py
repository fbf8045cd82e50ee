"""Synthetic data terms. All costs are nonnegative; noise comes from PCG32."""
from __future__ import annotations

import math

import numpy as np

from .core import ValidationError
from .rng import RngSpec


def _uniform_field(shape: tuple[int, ...], rng: RngSpec) -> np.ndarray:
    gen = rng.generator()
    n = math.prod(shape)
    return np.array([gen.uniform() for _ in range(n)]).reshape(shape)


def _check_size(width: int, height: int):
    if width < 1 or height < 1:
        raise ValidationError(f"invalid size {width}x{height}")


def _costs_from_labels(ideal: np.ndarray, labels: int, contrast: float, noise: float,
                       rng: RngSpec) -> np.ndarray:
    if contrast < 0 or noise < 0:
        raise ValidationError("contrast and noise must be nonnegative")
    s = contrast * (1.0 - np.eye(labels)[ideal])
    if noise > 0:
        s = s + noise * _uniform_field(s.shape, rng)
    return s


def two_class_split(width: int, height: int, contrast: float = 1.0, noise: float = 0.0,
                    rng: RngSpec = RngSpec()) -> np.ndarray:
    """Label 0 is free on the left half, label 1 on the right half."""
    _check_size(width, height)
    xx = np.broadcast_to(np.arange(width), (height, width))
    ideal = (xx >= width // 2).astype(np.int64)
    return _costs_from_labels(ideal, 2, contrast, noise, rng)


def triple_junction(width: int, height: int, contrast: float = 1.0, noise: float = 0.0,
                    hole: float = 0.0, rng: RngSpec = RngSpec()) -> np.ndarray:
    """Three 120-degree sectors around the center; costs vanish inside a
    central disc of radius ``hole * min(width, height)``."""
    _check_size(width, height)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    cy, cx = (height - 1) / 2, (width - 1) / 2
    ang = np.arctan2(yy - cy, xx - cx)
    ideal = (np.floor((ang + np.pi) / (2 * np.pi) * 3).astype(np.int64)) % 3
    s = _costs_from_labels(ideal, 3, contrast, noise, rng)
    s[np.hypot(yy - cy, xx - cx) < hole * min(width, height)] = 0.0
    return s


def stripes(width: int, height: int, labels: int = 2, period: int = 2, contrast: float = 1.0,
            noise: float = 0.0, rng: RngSpec = RngSpec()) -> np.ndarray:
    """Vertical stripes of width ``period`` cycling through the labels."""
    _check_size(width, height)
    if period < 1 or labels < 2:
        raise ValidationError("need period >= 1 and labels >= 2")
    xx = np.broadcast_to(np.arange(width), (height, width))
    ideal = (xx // period) % labels
    return _costs_from_labels(ideal, labels, contrast, noise, rng)


def random_costs(width: int, height: int, labels: int, scale: float = 1.0, power: float = 3.0,
                 rng: RngSpec = RngSpec()) -> np.ndarray:
    """Independent costs ``scale * U**power`` with ``U`` uniform on [0, 1)."""
    _check_size(width, height)
    return scale * _uniform_field((height, width, labels), rng) ** power


def noisy_prototypes(image: np.ndarray, prototypes: np.ndarray, noise: float = 0.0,
                     rng: RngSpec = RngSpec()) -> np.ndarray:
    """Color distance costs ``s_i(x) = ||I(x) + n(x) - mu_i||_2``.

    ``n`` is uniform on ``[-noise, noise]`` per channel.
    """
    image = np.asarray(image, dtype=np.float64)
    protos = np.asarray(prototypes, dtype=np.float64)
    if image.ndim != 3 or protos.ndim != 2 or protos.shape[1] != image.shape[2]:
        raise ValidationError("image must be (H, W, c) and prototypes (l, c)")
    if protos.shape[0] < 2:
        raise ValidationError("need at least two prototypes")
    if noise > 0:
        image = image + noise * (2.0 * _uniform_field(image.shape, rng) - 1.0)
    return np.linalg.norm(image[:, :, None, :] - protos[None, None], axis=-1)


PHANTOMS = ("two-class-split", "triple-junction", "stripes", "random", "noisy-prototypes")
