"""Named benchmark instances used by the tests and the CLI.

Every instance is a nonnegative data term together with a regularizer.
All noise comes from fixed PCG32 streams, so the arrays are identical on
every platform.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import ValidationError, uniform_metric
from .phantoms import random_costs, stripes, triple_junction, two_class_split
from .regularizer import AnisoMetricL1, MetricEnvelope, PottsFrobenius
from .rng import RngSpec

# Non-uniform metric on three labels: min 1, max 2.
METRIC3 = np.array([[0.0, 1.0, 2.0], [1.0, 0.0, 1.5], [2.0, 1.5, 0.0]])

# Pinned reference for a posteriori certificates (its relaxation is not tight,
# so the certificate is strictly positive).
REFERENCE = "junction12-metric"


@dataclass(frozen=True)
class Instance:
    name: str
    s: np.ndarray
    kind: object

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.s.shape

    @property
    def tiny(self) -> bool:
        """Small enough for exhaustive enumeration (<= 3x3 pixels, <= 3 labels)."""
        height, width, l = self.s.shape
        return height <= 3 and width <= 3 and l <= 3


def _split8():
    return two_class_split(8, 8, contrast=1.0, noise=0.5, rng=RngSpec(7, 0))


_BUILDERS: dict[str, Callable[[], tuple[np.ndarray, object]]] = {
    "split8-aniso": lambda: (_split8(), AnisoMetricL1(uniform_metric(2))),
    "split8-potts": lambda: (_split8(), PottsFrobenius()),
    "junction12-potts": lambda: (triple_junction(12, 12, contrast=4.0, hole=0.25),
                                 PottsFrobenius()),
    "junction12-metric": lambda: (triple_junction(12, 12, contrast=4.0, hole=0.25),
                                  MetricEnvelope(uniform_metric(3))),
    "stripes8-metric": lambda: (stripes(8, 8, labels=3, period=2, contrast=1.0, noise=0.3,
                                        rng=RngSpec(11, 0)), MetricEnvelope(METRIC3)),
    "random16-potts": lambda: (random_costs(16, 16, 4, scale=4.0, rng=RngSpec(3, 0)),
                               PottsFrobenius()),
    "tiny3-potts": lambda: (random_costs(3, 3, 3, scale=4.0, rng=RngSpec(5, 1)), PottsFrobenius()),
    "tiny3-metric": lambda: (random_costs(3, 3, 3, scale=4.0, rng=RngSpec(6, 1)),
                             MetricEnvelope(METRIC3)),
    "tiny3-aniso": lambda: (random_costs(3, 3, 2, scale=4.0, rng=RngSpec(8, 1)),
                            AnisoMetricL1(uniform_metric(2))),
    "tiny2-junction": lambda: (triple_junction(2, 3, contrast=2.0), MetricEnvelope(uniform_metric(3))),
}

NAMES = tuple(_BUILDERS)


def load(name: str) -> Instance:
    try:
        build = _BUILDERS[name]
    except KeyError:
        raise ValidationError(f"unknown instance {name!r}; known: {', '.join(NAMES)}") from None
    s, kind = build()
    return Instance(name, s, kind)


def all_instances() -> list[Instance]:
    return [load(name) for name in NAMES]
