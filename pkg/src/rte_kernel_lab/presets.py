"""Named study geometries.

``fig1-*`` are correlation sweeps against the unit square, ``fig2-*`` are
epsilon-rank sweeps between the unit square and a unit square to its right.
The ``*-3d`` entries are the three-dimensional analogues used in the tests.
"""

from __future__ import annotations

import dataclasses

from .errors import ConfigError
from .geometry import BoxDomain
from .separability import CorrelationStudyConfig, RankStudyConfig

UNIT_SQUARE = BoxDomain((0.0, 0.0), (1.0, 1.0))
UNIT_CUBE = BoxDomain((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))

CORRELATION_PRESETS = {
    "fig1-left": CorrelationStudyConfig(UNIT_SQUARE, (2.0, 0.0), (2.0, 0.5)),
    "fig1-right": CorrelationStudyConfig(UNIT_SQUARE, (2.0, 0.0), (1.5, 0.0)),
    "corr-3d": CorrelationStudyConfig(UNIT_CUBE, (2.0, 2.0, 2.0), (2.0, 2.0, 2.5), ntilde_max=120.0,
                                      fit="envelope", quadrature="gauss"),
}

RANK_PRESETS = {
    "fig2-left": RankStudyConfig(UNIT_SQUARE, BoxDomain((1.25, 0.5), (2.25, 1.5))),
    "fig2-right": RankStudyConfig(UNIT_SQUARE, BoxDomain((1.25, 0.0), (2.25, 1.0))),
    # boxes with disjoint xy and z projections; side 1/2 keeps n = 16 at 4096 points
    "rank-3d": RankStudyConfig(BoxDomain((0.0, 0.0, 0.0), (0.5, 0.5, 0.5)),
                               BoxDomain((1.0, 1.0, 1.0), (1.5, 1.5, 1.5)), n_values=(4, 8, 12, 16)),
}


def correlation_preset(name: str, **overrides) -> CorrelationStudyConfig:
    if name not in CORRELATION_PRESETS:
        raise ConfigError(f"unknown correlation preset {name!r}; choose from {sorted(CORRELATION_PRESETS)}")
    return dataclasses.replace(CORRELATION_PRESETS[name], **overrides)


def rank_preset(name: str, **overrides) -> RankStudyConfig:
    if name not in RANK_PRESETS:
        raise ConfigError(f"unknown rank preset {name!r}; choose from {sorted(RANK_PRESETS)}")
    return dataclasses.replace(RANK_PRESETS[name], **overrides)
