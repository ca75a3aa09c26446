"""Greedy growth of the feature set, driven by likelihood gain.

Training alternates between two phases. First, with the current weights
frozen, every position the model labels incorrectly (or too narrowly, when a
margin is set) is collected together with its marginal label distribution.
Candidate conjunctions are then scored by how much the penalized
log-likelihood of those positions would improve if the candidate were added
with its single best weight, treating each position as an independent
one-variable problem under its current marginals. That keeps candidate
scoring free of any lattice inference: a candidate needs only, per error
token, the marginal mass it places on its destination label and whether the
destination is the true label there. Second, the highest-gain candidates
enter the model and a short quasi-Newton pass readjusts all weights jointly.

For a candidate g with trial weight mu the scored improvement over the M
error tokens is

    gain(mu) = mu * n_true - sum_i log(1 + b_i*(e^mu - 1)) - mu^2/(2 sigma^2)

where b_i is the marginal mass on the destination at firing token i and
n_true counts firing tokens whose true label is the destination. The function
is strictly concave in mu, so Newton iteration from 0 with step halving finds
the maximizer; a golden-section search over [-20, 20] is the fallback.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .corpus import ObservationMatrix, TestRegistry
from .errors import ConfigError
from .features import WILDCARD, CrfModel, Feature, conjunction, edge_features, expand_sources
from .inference import marginals
from .training import Datum, lbfgs_optimize, log_likelihood


@dataclass
class InductionConfig:
    max_features_per_round: int = 1000
    gain_threshold: float = 5.0
    candidate_pool_size: int = 1000
    lbfgs_iterations_per_round: int = 10
    max_rounds: int = 10
    margin: float | None = None  # None restricts to mislabeled tokens only
    sigma2: float = 10.0
    expansion: str = "none"  # or "all-sources"
    edge_features: bool = True
    lbfgs_history: int = 7
    threads: int = 1

    def __post_init__(self) -> None:
        if self.max_features_per_round < 1:
            raise ConfigError("max_features_per_round must be positive")
        if self.candidate_pool_size < 1:
            raise ConfigError("candidate_pool_size must be positive")
        if self.lbfgs_iterations_per_round < 1:
            raise ConfigError("lbfgs_iterations_per_round must be positive")
        if self.max_rounds < 0:
            raise ConfigError("max_rounds must be nonnegative")
        if self.margin is not None and self.margin < 0:
            raise ConfigError("margin must be nonnegative or disabled")
        if self.sigma2 <= 0:
            raise ConfigError("sigma2 must be positive")
        if self.expansion not in ("none", "all-sources"):
            raise ConfigError(f'unknown expansion mode "{self.expansion}"')


@dataclass
class ErrorToken:
    """One training position selected for candidate scoring."""

    sentence: int
    position: int
    label: int  # true label index
    gamma: np.ndarray  # marginal row over labels at this position
    tests: np.ndarray  # observation bits row at this position


@dataclass
class Candidate:
    """A proposed (conjunction, destination) feature with its gain statistics."""

    conj: tuple[int, ...]
    dest: int
    mask: np.ndarray | None = None  # firing indicator over the error tokens
    fires: int = 0
    fires_true: int = 0
    mu: float = 0.0
    gain: float = 0.0


@dataclass
class RoundReport:
    round: int
    error_tokens: int
    candidates: int
    accepted: int
    gain_min: float
    gain_max: float
    loglik_before: float
    loglik_after: float
    features: int
    seconds: float
    newton_fallbacks: int = 0
    accepted_list: list[Candidate] = field(default_factory=list)

    def render(self) -> str:
        return (
            f"round={self.round} errors={self.error_tokens} "
            f"candidates={self.candidates} accepted={self.accepted} "
            f"gain_min={self.gain_min:.4f} gain_max={self.gain_max:.4f} "
            f"loglik_before={self.loglik_before:.6f} loglik_after={self.loglik_after:.6f} "
            f"features={self.features} seconds={self.seconds:.2f}"
        )


def select_error_tokens(
    model: CrfModel, data: Sequence[Datum], margin: float | None = None
) -> list[ErrorToken]:
    """Tokens the current model mislabels (argmax of the marginals, ties to
    the lowest label index), plus near-misses within ``margin`` when set."""
    out: list[ErrorToken] = []
    for j, (obs, gold) in enumerate(data):
        lat = marginals(model, obs)
        pred = np.argmax(lat.gamma, axis=1)
        for t in range(len(obs)):
            true = int(gold[t])
            include = pred[t] != true
            if not include and margin is not None:
                row = lat.gamma[t]
                others = np.delete(row, true)
                include = float(row[true]) - float(others.max()) < margin
            if include:
                out.append(ErrorToken(j, t, true, lat.gamma[t], obs.bits[t]))
    return out


def _gain_value(mu: float, b: np.ndarray, n_true: float, sigma2: float) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        penal = float(np.log1p(b * math.expm1(mu)).sum()) if b.size else 0.0
    return mu * n_true - penal - mu * mu / (2.0 * sigma2)


def _golden_max(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-8) -> tuple[float, float]:
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    x = (a + b) / 2.0
    return x, f(x)


def optimize_gain(
    fire_gamma: np.ndarray,
    fires_true: int,
    sigma2: float,
    max_iter: int = 20,
    tol: float = 1e-6,
) -> tuple[float, float, bool]:
    """Maximize the per-candidate gain over its weight.

    ``fire_gamma`` holds, for each error token where the candidate fires, the
    marginal mass the candidate's value-1 states carry there; ``fires_true``
    counts firing tokens where the candidate fires on the true label. Returns
    (mu, gain, newton_converged); gain is never negative because mu=0 scores
    exactly zero and only improvements are accepted.
    """
    b = np.asarray(fire_gamma, dtype=float)
    b = b[b > 0.0]
    n_true = float(fires_true)

    def value(mu: float) -> float:
        return _gain_value(mu, b, n_true, sigma2)

    mu, val = 0.0, 0.0
    converged = False
    for _ in range(max_iter):
        e = math.exp(mu) if mu < 700 else math.inf
        denom = 1.0 + b * (e - 1.0)
        ratio = np.divide(b * e, denom, out=np.ones_like(b), where=np.isfinite(denom))
        d1 = n_true - float(ratio.sum()) - mu / sigma2
        d2 = -float((ratio * (1.0 - b) / denom).sum()) - 1.0 / sigma2
        step = -d1 / d2
        if abs(step) < tol:
            converged = True
            break
        cand = mu + step
        cval = value(cand)
        halvings = 0
        while not cval >= val and halvings < 30:  # also catches nan
            step *= 0.5
            cand = mu + step
            cval = value(cand)
            halvings += 1
        if not cval >= val:
            break
        mu, val = cand, cval
    if not converged:
        g_mu, g_val = _golden_max(value, -20.0, 20.0)
        if g_val > val:
            mu, val = g_mu, g_val
    return mu, val, converged


class _ErrorTable:
    """Frozen arrays over the selected error tokens."""

    def __init__(self, tokens: Sequence[ErrorToken]):
        self.bits = np.stack([tok.tests for tok in tokens])
        self.gamma = np.stack([tok.gamma for tok in tokens])
        self.true = np.asarray([tok.label for tok in tokens], dtype=int)

    def mask(self, conj: tuple[int, ...]) -> np.ndarray:
        return self.bits[:, list(conj)].all(axis=1)


def _candidate_stats(table: _ErrorTable, mask: np.ndarray, dest: int) -> tuple[np.ndarray, int]:
    fire_gamma = table.gamma[mask, dest]
    fires_true = int(np.count_nonzero(mask & (table.true == dest)))
    return fire_gamma, fires_true


def candidate_gain(
    tokens: Sequence[ErrorToken], candidate: Candidate, sigma2: float
) -> tuple[float, float]:
    """Best weight and gain for one candidate over the given error tokens.

    Fills the candidate's firing statistics as a side effect.
    """
    if len(tokens) < 1:
        raise ValueError("candidate_gain needs at least one error token")
    table = _ErrorTable(tokens)
    mask = candidate.mask if candidate.mask is not None else table.mask(candidate.conj)
    fire_gamma, fires_true = _candidate_stats(table, mask, candidate.dest)
    mu, gain, _ = optimize_gain(fire_gamma, fires_true, sigma2)
    candidate.mask = mask
    candidate.fires = int(np.count_nonzero(mask))
    candidate.fires_true = fires_true
    candidate.mu = mu
    candidate.gain = gain
    return mu, gain


def generate_candidates(
    model: CrfModel,
    tokens: Sequence[ErrorToken],
    registry: TestRegistry | None = None,
    pool_size: int = 1000,
) -> list[Candidate]:
    """Build the candidate pool for one round.

    The pool is every singleton test plus pairwise conjunctions of the
    ``pool_size`` best-scoring units, where the units are the atomic tests and
    the conjunctions already in the model, ranked by their own gain on the
    current error tokens. Pairing a unit with an existing conjunction is what
    lets conjunctions grow beyond two tests over successive rounds. Each pool
    conjunction is combined with every destination label; candidates that
    never fire on the error tokens, or that duplicate an existing
    (conjunction, destination) pair, are dropped.
    """
    if pool_size < 1:
        raise ValueError("pool_size must be positive")
    registry = registry if registry is not None else model.registry
    table = _ErrorTable(tokens)
    n_tests = len(registry)
    n_labels = model.n_labels

    units: list[tuple[int, ...]] = [(k,) for k in range(n_tests)]
    seen_units = set(units)
    for f in model.features:
        if f.conj is not None and f.conj not in seen_units:
            seen_units.add(f.conj)
            units.append(f.conj)

    scores = []
    for conj in units:
        mask = table.mask(conj)
        best = 0.0
        if mask.any():
            for d in range(n_labels):
                fire_gamma, fires_true = _candidate_stats(table, mask, d)
                _, gain, _ = optimize_gain(fire_gamma, fires_true, sigma2=model.sigma2)
                if gain > best:
                    best = gain
        scores.append(best)
    ranked = sorted(range(len(units)), key=lambda i: (-scores[i], len(units[i]), units[i]))
    top = [units[i] for i in ranked[:pool_size]]

    pool: list[tuple[int, ...]] = []
    pool_seen: set[tuple[int, ...]] = set()
    for k in range(n_tests):
        single = (k,)
        pool.append(single)
        pool_seen.add(single)
    for i in range(len(top)):
        for j in range(i + 1, len(top)):
            merged = conjunction(top[i] + top[j])
            if merged not in pool_seen:
                pool_seen.add(merged)
                pool.append(merged)

    existing = {(f.conj, f.dest) for f in model.features if f.conj is not None}
    out: list[Candidate] = []
    for conj in pool:
        mask = table.mask(conj)
        if not mask.any():
            continue
        for d in range(n_labels):
            if (conj, d) in existing:
                continue
            out.append(Candidate(conj, d, mask))
    return out


def _evaluate_candidates(
    table: _ErrorTable, candidates: list[Candidate], sigma2: float, threads: int
) -> int:
    """Fill gain statistics on every candidate; returns Newton fallback count."""

    def work(c: Candidate) -> bool:
        fire_gamma, fires_true = _candidate_stats(table, c.mask, c.dest)
        mu, gain, ok = optimize_gain(fire_gamma, fires_true, sigma2)
        c.fires = int(np.count_nonzero(c.mask))
        c.fires_true = fires_true
        c.mu = mu
        c.gain = gain
        return ok

    if threads > 1 and len(candidates) > 64:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, candidates, chunksize=64))
    else:
        results = [work(c) for c in candidates]
    return sum(1 for ok in results if not ok)


def induction_round(
    model: CrfModel, data: Sequence[Datum], config: InductionConfig
) -> tuple[CrfModel, RoundReport]:
    """One pass of candidate scoring, acceptance, and weight refitting.

    Acceptance walks candidates by descending gain down to the threshold, up
    to the per-round cap, skipping any whose gain (rounded to 1e-9) exactly
    matches an already accepted one; exactly equal gains are almost always the
    same firing pattern under a different name. Remaining ties order by
    smaller conjunction, then test ids, then destination.
    """
    t0 = time.perf_counter()
    ll_before = log_likelihood(model, data)
    tokens = select_error_tokens(model, data, config.margin)
    accepted: list[Candidate] = []
    n_candidates = 0
    fallbacks = 0
    if tokens:
        candidates = generate_candidates(
            model, tokens, model.registry, config.candidate_pool_size
        )
        n_candidates = len(candidates)
        fallbacks = _evaluate_candidates(
            _ErrorTable(tokens), candidates, config.sigma2, config.threads
        )
        candidates.sort(key=lambda c: (-c.gain, len(c.conj), c.conj, c.dest))
        seen_gains: set[float] = set()
        for c in candidates:
            if len(accepted) >= config.max_features_per_round:
                break
            if c.gain < config.gain_threshold:
                break
            rounded = round(c.gain, 9)
            if rounded in seen_gains:
                continue
            seen_gains.add(rounded)
            accepted.append(c)
        new: list[tuple[Feature, float]] = []
        for c in accepted:
            feat = Feature(c.conj, WILDCARD, c.dest)
            new.extend(expand_sources(feat, c.mu, model.n_labels, config.expansion))
        model.add_features(new)
    result = lbfgs_optimize(
        model,
        data,
        max_iterations=config.lbfgs_iterations_per_round,
        history=config.lbfgs_history,
    )
    model.weights = result.weights
    gains = [c.gain for c in accepted]
    report = RoundReport(
        round=0,
        error_tokens=len(tokens),
        candidates=n_candidates,
        accepted=len(accepted),
        gain_min=min(gains) if gains else 0.0,
        gain_max=max(gains) if gains else 0.0,
        loglik_before=ll_before,
        loglik_after=result.value,
        features=len(model.features),
        seconds=time.perf_counter() - t0,
        newton_fallbacks=fallbacks,
        accepted_list=accepted,
    )
    return model, report


def induce_train(
    data: Sequence[Datum],
    labels: Sequence[str],
    registry: TestRegistry,
    config: InductionConfig,
    on_round: Callable[[RoundReport], None] | None = None,
) -> CrfModel:
    """Run the full induction loop from an empty (or edge-seeded) model.

    Stops at ``max_rounds``, when no error tokens remain, or when a round
    accepts nothing and the refit improves the objective by less than 1e-4.
    """
    if not data:
        raise ValueError("training data is empty")
    model = CrfModel(labels, registry, sigma2=config.sigma2)
    if config.edge_features:
        model.add_features((f, 0.0) for f in edge_features(model.n_labels))
    for r in range(config.max_rounds):
        model, report = induction_round(model, data, config)
        report.round = r + 1
        if on_round is not None:
            on_round(report)
        if report.error_tokens == 0:
            break
        if report.accepted == 0 and report.loglik_after - report.loglik_before < 1e-4:
            break
    return model
