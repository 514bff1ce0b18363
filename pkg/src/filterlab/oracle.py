"""Independent reference values: Kalman-Bucy moments and exact finite expectations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class KalmanState:
    times: np.ndarray
    mean: np.ndarray  # (M+1, d_X)
    cov: np.ndarray  # (M+1, d_X, d_X)

    def at(self, k: int):
        return self.mean[k], self.cov[k]


def kalman_bucy(F, G, H, y, dt: float, m0, P0) -> KalmanState:
    """Euler integration of ``dm = F m dt + P H^T (dy - H m dt)`` and the Riccati ODE.

    ``y`` is the observation path ``(M+1, d_Y)`` on a grid of step ``dt``.
    The covariance is symmetrized after every step.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    G = np.atleast_2d(np.asarray(G, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    y = np.asarray(y, dtype=float).reshape(len(y), -1)
    d = F.shape[0]
    if y.shape[1] != H.shape[0]:
        raise ConfigurationError("observation dimension does not match H", "obs")
    m = np.broadcast_to(np.asarray(m0, dtype=float), (d,)).copy()
    P = np.atleast_2d(np.asarray(P0, dtype=float)).copy()
    if P.shape != (d, d):
        P = np.diag(np.broadcast_to(np.ravel(P0), (d,))).astype(float)
    GG = G @ G.T
    M = len(y) - 1
    means = np.empty((M + 1, d))
    covs = np.empty((M + 1, d, d))
    means[0], covs[0] = m, P
    for k in range(M):
        dy = y[k + 1] - y[k]
        gain = P @ H.T
        m_new = m + F @ m * dt + gain @ (dy - H @ m * dt)
        P = P + (F @ P + P @ F.T + GG - gain @ gain.T) * dt
        P = 0.5 * (P + P.T)
        m = m_new
        means[k + 1], covs[k + 1] = m, P
    return KalmanState(np.arange(M + 1) * dt, means, covs)


def kalman_for_model(model, y, dt: float) -> KalmanState:
    """Kalman-Bucy run for a model carrying ``linear = (F, G, H)``."""
    if model.linear is None:
        raise ConfigurationError(f"model {model.name!r} is not linear", "model.name")
    F, G, H = model.linear
    return kalman_bucy(F, G, H, y, dt, model.x0_mean, np.diag(model.x0_std**2))


def stationary_variance(F: float, G: float, H: float) -> float:
    """Positive root of ``0 = 2 F P + G^2 - H^2 P^2`` (scalar)."""
    if H == 0:
        if F >= 0:
            return np.inf
        return -(G**2) / (2 * F)
    return (F + np.sqrt(F * F + H * H * G * G)) / (H * H)


def small_case_expectation(outcomes, probabilities, functional=None, tol: float = 1e-12) -> float:
    """Exact ``sum_i p_i f(o_i)`` over a finite outcome table."""
    p = np.asarray(probabilities, dtype=float)
    if np.any(p < 0) or abs(p.sum() - 1.0) > tol:
        raise ConfigurationError(f"probabilities sum to {p.sum()!r}, not 1", "probabilities")
    vals = np.asarray([o if functional is None else functional(o) for o in outcomes], dtype=float)
    if vals.shape[0] != p.shape[0]:
        raise ConfigurationError("outcome and probability tables differ in length", "outcomes")
    return float(np.tensordot(p, vals, axes=(0, 0)))


def bernoulli_table(probabilities) -> tuple[np.ndarray, np.ndarray]:
    """All ``2^m`` 0/1 vectors with independent Bernoulli probabilities."""
    q = np.asarray(probabilities, dtype=float)
    m = len(q)
    bits = ((np.arange(2**m)[:, None] >> np.arange(m)) & 1).astype(np.int8)
    prob = np.prod(np.where(bits == 1, q, 1.0 - q), axis=1)
    return bits, prob
