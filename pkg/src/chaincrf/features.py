"""Conjunction features and the CRF model container.

A feature fires at (previous state, current state, position) when its test
conjunction holds at the position, the current state equals its destination,
and its source is either the wildcard or the previous state. Pure-transition
features carry no conjunction. The model keeps an ordered feature list and a
weight vector aligned with it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .corpus import ObservationMatrix, TestRegistry
from .errors import ConfigError

START = -1  # virtual source state preceding position 0
WILDCARD = -2  # source that matches anything, including START


def conjunction(test_ids: Iterable[int]) -> tuple[int, ...]:
    """Canonical form of a test conjunction: sorted, deduplicated, nonempty."""
    ids = tuple(sorted(set(int(i) for i in test_ids)))
    if not ids:
        raise ValueError("a conjunction needs at least one test")
    return ids


@dataclass(frozen=True)
class Feature:
    """(conjunction, source, destination) triple; conj None means always-on."""

    conj: tuple[int, ...] | None
    source: int
    dest: int

    def key(self) -> tuple:
        return (self.conj, self.source, self.dest)


def edge_features(n_labels: int) -> list[Feature]:
    """Pure-transition features for every (source in labels+START, destination)."""
    sources = [START, *range(n_labels)]
    return [Feature(None, s, d) for s in sources for d in range(n_labels)]


def expand_sources(
    feature: Feature, weight: float, n_labels: int, mode: str = "none"
) -> list[tuple[Feature, float]]:
    """Optionally clone a wildcard-source feature for each concrete source.

    The wildcard original keeps ``weight``; clones start at 0 and have their
    weights fit by the next optimizer pass.
    """
    if feature.source != WILDCARD:
        raise ValueError("only wildcard-source features can be expanded")
    if mode == "none":
        return [(feature, weight)]
    if mode == "all-sources":
        out = [(feature, weight)]
        for s in [START, *range(n_labels)]:
            out.append((Feature(feature.conj, s, feature.dest), 0.0))
        return out
    raise ConfigError(f'unknown expansion mode "{mode}"')


class CrfModel:
    """Label set, test registry, feature list, and aligned weights."""

    def __init__(
        self,
        labels: Sequence[str],
        registry: TestRegistry,
        sigma2: float = 10.0,
    ):
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate labels")
        for lab in labels:
            if not lab or any(c.isspace() for c in lab):
                raise ValueError(f"label {lab!r} must be non-empty and whitespace-free")
        if not sigma2 > 0:
            raise ValueError("prior variance must be positive")
        self.labels = tuple(labels)
        self.registry = registry
        self.sigma2 = float(sigma2)
        self.features: list[Feature] = []
        self.weights = np.zeros(0, dtype=float)
        self._index: dict[tuple, int] = {}

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    def label_index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValueError(f"label {label!r} is not in the model's label set") from None

    def has_feature(self, feature: Feature) -> bool:
        return feature.key() in self._index

    def _validate(self, f: Feature) -> None:
        if not 0 <= f.dest < self.n_labels:
            raise ValueError(f"destination {f.dest} out of range")
        if f.source not in (START, WILDCARD) and not 0 <= f.source < self.n_labels:
            raise ValueError(f"source {f.source} out of range")
        if f.conj is not None:
            if f.conj != conjunction(f.conj):
                raise ValueError(f"conjunction {f.conj} is not canonical")
            if f.conj[-1] >= len(self.registry) or f.conj[0] < 0:
                raise ValueError(f"conjunction {f.conj} references unknown tests")

    def add_features(self, new: Iterable[tuple[Feature, float]]) -> int:
        """Append novel features with their initial weights; returns the
        number actually added (duplicates by (conj, source, dest) are skipped).
        """
        added: list[float] = []
        for f, w in new:
            w = float(w)
            if not math.isfinite(w):
                raise ValueError(f"non-finite initial weight {w!r} for {f}")
            if f.key() in self._index:
                continue
            self._validate(f)
            self._index[f.key()] = len(self.features)
            self.features.append(f)
            added.append(w)
        if added:
            self.weights = np.concatenate([self.weights, np.asarray(added, dtype=float)])
        return len(added)

    def score_transition(
        self, obs: ObservationMatrix, t: int, src: int, dst: int
    ) -> float:
        """Weighted sum of all features firing at (src, dst, t).

        The source at t=0 is always START; positive positions take a concrete
        previous label.
        """
        if not 0 <= t < len(obs):
            raise ValueError(f"position {t} out of range")
        if (t == 0) != (src == START):
            raise ValueError("START is the source exactly at position 0")
        total = 0.0
        for fid, f in enumerate(self.features):
            if f.dest != dst:
                continue
            if f.source != WILDCARD and f.source != src:
                continue
            if f.conj is not None and not obs.conj_mask(f.conj)[t]:
                continue
            total += float(self.weights[fid])
        return total


def transition_matrices(
    model: CrfModel, obs: ObservationMatrix, weights: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Dense per-position transition scores.

    Returns (m0, mt): m0[s] scores START -> s at position 0, and
    mt[t-1, s', s] scores s' -> s into position t for t >= 1. Equivalent to
    ``score_transition`` evaluated everywhere, but built in one pass.
    """
    w = model.weights if weights is None else weights
    T = len(obs)
    L = model.n_labels
    m0 = np.zeros(L)
    mt = np.zeros((T - 1, L, L))
    for fid, f in enumerate(model.features):
        lam = float(w[fid])
        if lam == 0.0:
            continue
        mask = obs.conj_mask(f.conj)
        if f.source == WILDCARD:
            if mask[0]:
                m0[f.dest] += lam
            idx = np.flatnonzero(mask[1:])
            if idx.size:
                mt[idx, :, f.dest] += lam
        elif f.source == START:
            if mask[0]:
                m0[f.dest] += lam
        else:
            idx = np.flatnonzero(mask[1:])
            if idx.size:
                mt[idx, f.source, f.dest] += lam
    return m0, mt
