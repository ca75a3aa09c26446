"""Penalized conditional log-likelihood, its gradient, and L-BFGS.

The objective is sum_j [score(gold path) - log Z_j] minus a Gaussian penalty
sum_k w_k^2 / (2 sigma^2). Its gradient per feature is empirical count minus
expected count minus w_k / sigma^2, with expectations read off the lattice
marginals (gamma for wildcard and START sources, xi for concrete sources).

The optimizer maximizes the objective; internally it minimizes the negation
with a standard two-loop limited-memory recursion and a backtracking line
search, so accepted iterations never lower the objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import ObservationMatrix
from .features import START, WILDCARD, CrfModel, transition_matrices
from .inference import _forward, _lattice

Datum = tuple[ObservationMatrix, np.ndarray]


@dataclass
class Objective:
    value: float
    gradient: np.ndarray


@dataclass
class OptimizerResult:
    weights: np.ndarray
    value: float  # objective at the returned weights
    grad_norm: float
    iterations: int
    converged: bool
    line_search_failed: bool = False
    trace: list[float] = field(default_factory=list)  # objective per accepted step


def _gold_score(m0: np.ndarray, mt: np.ndarray, gold: np.ndarray) -> float:
    score = float(m0[gold[0]])
    if len(gold) > 1:
        score += float(mt[np.arange(len(gold) - 1), gold[:-1], gold[1:]].sum())
    return score


def _empirical_counts(model: CrfModel, obs: ObservationMatrix, gold: np.ndarray) -> np.ndarray:
    counts = np.zeros(len(model.features))
    for fid, f in enumerate(model.features):
        sel = obs.conj_mask(f.conj) & (gold == f.dest)
        if f.source == WILDCARD:
            counts[fid] = np.count_nonzero(sel)
        elif f.source == START:
            counts[fid] = 1.0 if sel[0] else 0.0
        else:
            counts[fid] = np.count_nonzero(sel[1:] & (gold[:-1] == f.source))
    return counts


def _expected_counts(model: CrfModel, obs: ObservationMatrix, gamma, xi) -> np.ndarray:
    counts = np.zeros(len(model.features))
    for fid, f in enumerate(model.features):
        mask = obs.conj_mask(f.conj)
        if f.source == WILDCARD:
            counts[fid] = float(gamma[mask, f.dest].sum())
        elif f.source == START:
            counts[fid] = float(gamma[0, f.dest]) if mask[0] else 0.0
        else:
            idx = np.flatnonzero(mask[1:])
            counts[fid] = float(xi[idx, f.source, f.dest].sum()) if idx.size else 0.0
    return counts


def objective_at(model: CrfModel, data: Sequence[Datum], weights: np.ndarray) -> Objective:
    """Objective value and gradient at an explicit weight vector.

    Sentences are accumulated in corpus order so repeated runs agree bitwise.
    """
    value = 0.0
    grad = np.zeros(len(model.features))
    for obs, gold in data:
        m0, mt = transition_matrices(model, obs, weights)
        lat = _lattice(m0, mt)
        value += _gold_score(m0, mt, gold) - lat.log_z
        grad += _empirical_counts(model, obs, gold)
        grad -= _expected_counts(model, obs, lat.gamma, lat.xi)
    value -= float(weights @ weights) / (2.0 * model.sigma2)
    grad -= weights / model.sigma2
    return Objective(value, grad)


def log_likelihood(model: CrfModel, data: Sequence[Datum]) -> float:
    """Penalized conditional log-likelihood at the model's current weights."""
    value = 0.0
    for obs, gold in data:
        m0, mt = transition_matrices(model, obs)
        _, log_z = _forward(m0, mt)
        value += _gold_score(m0, mt, gold) - log_z
    w = model.weights
    return value - float(w @ w) / (2.0 * model.sigma2)


def gradient(model: CrfModel, data: Sequence[Datum]) -> np.ndarray:
    """Gradient of the penalized log-likelihood at the current weights."""
    return objective_at(model, data, model.weights).gradient


def _two_loop(grad, s_hist, y_hist, rho_hist) -> np.ndarray:
    q = -grad
    alphas = []
    for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
        a = rho * float(s @ q)
        alphas.append(a)
        q = q - a * y
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q = q * (float(s @ y) / float(y @ y))
    for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
        b = rho * float(y @ q)
        q = q + (a - b) * s
    return q


def lbfgs_optimize(
    model: CrfModel,
    data: Sequence[Datum],
    max_iterations: int = 10,
    history: int = 7,
    tolerance: float = 1e-5,
) -> OptimizerResult:
    """Run at most ``max_iterations`` quasi-Newton steps on the objective.

    Backtracking line search (sufficient-increase constant 1e-4, initial step
    1.0, at most 40 halvings). A failed line search returns the best weights
    reached so far with ``line_search_failed`` set rather than raising.
    """
    if max_iterations < 1:
        raise ValueError("max_iterations must be at least 1")

    def neg(w: np.ndarray) -> tuple[float, np.ndarray]:
        obj = objective_at(model, data, w)
        return -obj.value, -obj.gradient

    x = model.weights.astype(float).copy()
    f, g = neg(x)
    trace = [-f]
    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    rho_hist: list[float] = []
    iterations = 0
    failed = False
    gnorm = float(np.linalg.norm(g))
    while iterations < max_iterations and gnorm >= tolerance:
        d = _two_loop(g, s_hist, y_hist, rho_hist)
        gd = float(g @ d)
        if gd >= 0.0:  # not a descent direction; fall back to steepest descent
            d = -g
            gd = -float(g @ g)
        step = 1.0
        accepted = False
        for _ in range(40):
            xn = x + step * d
            fn, gn = neg(xn)
            if np.isfinite(fn) and fn <= f + 1e-4 * step * gd:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            failed = True
            break
        s = xn - x
        y = gn - g
        sy = float(s @ y)
        if sy > 1e-10:
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > history:
                s_hist.pop(0)
                y_hist.pop(0)
                rho_hist.pop(0)
        x, f, g = xn, fn, gn
        gnorm = float(np.linalg.norm(g))
        iterations += 1
        trace.append(-f)
    return OptimizerResult(
        weights=x,
        value=-f,
        grad_norm=gnorm,
        iterations=iterations,
        converged=gnorm < tolerance,
        line_search_failed=failed,
        trace=trace,
    )
