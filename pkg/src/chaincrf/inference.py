"""Exact inference over the label lattice, in natural-log space.

Conventions: log_alpha[0, s] is the score of START -> s at position 0;
log_alpha[t, s] = logsumexp_{s'}(log_alpha[t-1, s'] + score(t, s', s));
the log-partition is logsumexp over the final row. With all-zero weights the
partition is |labels|^T. log_beta[T-1] is zero and recurses backward so that
logsumexp_s(score(0, START, s) + log_beta[0, s]) recovers the same
log-partition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import ObservationMatrix
from .features import CrfModel, transition_matrices


def logsumexp(values, axis: int | None = None):
    """log(sum(exp(values))) with max-shifting; -inf inputs are absorbing."""
    a = np.asarray(values, dtype=float)
    if a.size == 0 or (axis is not None and a.shape[axis] == 0):
        raise ValueError("logsumexp of an empty sequence")
    m = np.max(a, axis=axis, keepdims=True)
    shift = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - shift), axis=axis, keepdims=True)) + shift
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


@dataclass
class Lattice:
    """Forward/backward tables and marginals for one sentence.

    gamma[t, s] is the probability of state s at position t. xi[t, s', s] is
    the probability of the pair (s' at t, s at t+1); the implicit pairing of
    START with position 0 is gamma[0] itself.
    """

    log_alpha: np.ndarray
    log_beta: np.ndarray
    log_z: float
    gamma: np.ndarray
    xi: np.ndarray


def _forward(m0: np.ndarray, mt: np.ndarray) -> tuple[np.ndarray, float]:
    T = mt.shape[0] + 1
    L = m0.shape[0]
    log_alpha = np.empty((T, L))
    log_alpha[0] = m0
    for t in range(1, T):
        log_alpha[t] = logsumexp(log_alpha[t - 1][:, None] + mt[t - 1], axis=0)
    return log_alpha, logsumexp(log_alpha[-1])


def _backward(m0: np.ndarray, mt: np.ndarray) -> np.ndarray:
    T = mt.shape[0] + 1
    L = m0.shape[0]
    log_beta = np.zeros((T, L))
    for t in range(T - 2, -1, -1):
        log_beta[t] = logsumexp(mt[t] + log_beta[t + 1][None, :], axis=1)
    return log_beta


def _lattice(m0: np.ndarray, mt: np.ndarray) -> Lattice:
    log_alpha, log_z = _forward(m0, mt)
    log_beta = _backward(m0, mt)
    gamma = np.exp(log_alpha + log_beta - log_z)
    T = mt.shape[0] + 1
    if T > 1:
        xi = np.exp(
            log_alpha[:-1, :, None] + mt + log_beta[1:, None, :] - log_z
        )
    else:
        L = m0.shape[0]
        xi = np.zeros((0, L, L))
    return Lattice(log_alpha, log_beta, log_z, gamma, xi)


def forward(model: CrfModel, obs: ObservationMatrix) -> tuple[np.ndarray, float]:
    """Forward table and log-partition."""
    return _forward(*transition_matrices(model, obs))


def backward(model: CrfModel, obs: ObservationMatrix) -> np.ndarray:
    """Backward table (suffix sums; final row is zero)."""
    return _backward(*transition_matrices(model, obs))


def marginals(model: CrfModel, obs: ObservationMatrix) -> Lattice:
    """Full lattice with unary (gamma) and pairwise (xi) marginals."""
    return _lattice(*transition_matrices(model, obs))


def _viterbi(m0: np.ndarray, mt: np.ndarray) -> tuple[list[int], float]:
    delta = m0.copy()
    back: list[np.ndarray] = []
    for step in mt:
        cand = delta[:, None] + step
        # np.argmax returns the first maximum: ties go to the lowest label
        best = np.argmax(cand, axis=0)
        back.append(best)
        delta = cand[best, np.arange(cand.shape[1])]
    last = int(np.argmax(delta))
    score = float(delta[last])
    path = [last]
    for pointers in reversed(back):
        path.append(int(pointers[path[-1]]))
    path.reverse()
    return path, score


def viterbi(model: CrfModel, obs: ObservationMatrix) -> tuple[list[int], float]:
    """Highest-scoring state sequence and its unnormalized log score."""
    return _viterbi(*transition_matrices(model, obs))
