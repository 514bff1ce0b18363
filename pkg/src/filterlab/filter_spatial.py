"""Filter for a signal whose driving noise is shared with the observation channels.

The space-time white noise is realized as ``J`` independent Brownian channels,
channel ``j`` having variance ``mu_j`` per unit time.  Particles are driven by
the observed channels themselves, with the drift shifted to
``b - sum_j alpha_j h_j mu_j`` so that reweighting recovers the physical law.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .filter_gwn import ParticleEnsemble, build_ensemble, ks_residual, rho, zakai_residual
from .grid import TimeGrid
from .models import SpatialModel

SpatialEnsemble = ParticleEnsemble


def build_spatial_ensemble(model: SpatialModel, grid: TimeGrid, N: int, master_seed: int, obs, **kw) -> SpatialEnsemble:
    """Particles for a spatial model; exact weights only."""
    if not isinstance(model, SpatialModel):
        raise ConfigurationError("need a spatial model", "model")
    y = getattr(obs, "y", obs)
    if y.shape[-1] != model.cells:
        raise ConfigurationError(f"observation has {y.shape[-1]} channels, model has {model.cells} cells", "obs")
    if kw.pop("n_set", ()):
        raise ConfigurationError("frozen-sensor weights are not defined for spatial models", "grid.n_set")
    return build_ensemble(model, grid, N, (), master_seed, y, **kw)


def spatial_rho(ensemble: SpatialEnsemble, phi, t):
    return rho(ensemble, phi, t)


def spatial_zakai_residual(ensemble: SpatialEnsemble, phi, checkpoints, **kw):
    """Residual with gain ``phi h(., u_j) + grad(phi).alpha(., u_j)`` per channel."""
    return zakai_residual(ensemble, phi, checkpoints, **kw)


def spatial_ks_residual(ensemble: SpatialEnsemble, phi, checkpoints, **kw):
    """Residual in innovation form with ``dY_j - pi_s(h(., u_j)) mu_j ds``."""
    return ks_residual(ensemble, phi, checkpoints, **kw)


def effective_diffusion(model: SpatialModel, x) -> np.ndarray:
    """``a(x) = sigma sigma^T + sum_j alpha_j alpha_j^T mu_j``."""
    return model.diffusion_matrix(np.atleast_2d(np.asarray(x, dtype=float)))


def one_step_mean(model: SpatialModel, x0, dt: float, samples: int = 200_000, seed: int = 0) -> np.ndarray:
    """Monte Carlo mean of one reference-measure Euler step from ``x0``, divided by ``dt``.

    Channels and B noise are drawn with numpy's generator; this is a check
    of the drift the simulator actually applies.
    """
    from .engine import advance

    rng = np.random.default_rng(seed)
    x = np.broadcast_to(np.asarray(x0, dtype=float), (samples, model.d_x)).copy()
    db = rng.normal(scale=np.sqrt(dt), size=(samples, model.d_b))
    dy = rng.normal(size=(samples, model.cells)) * np.sqrt(model.channel_masses * dt)
    xn = advance(model, x, db, dy, dt, True)
    return (xn - x).mean(axis=0) / dt
