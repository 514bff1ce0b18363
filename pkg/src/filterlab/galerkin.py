"""Finite-dimensional integration of the limit error equation.

``U_t(phi) = int U_s(A phi) ds + int U_s(phi h) dY
            + (1/2 dY + 1/(2 sqrt 3) dR) [rho_s(phi A h) + rho_s(tr O~_{sigma, phi, h})]``

for scalar signals.  Two bases are provided:

* ``NodalBasis``: ``U`` is a signed measure on a uniform node set.  ``A`` acts
  through an upwind birth-death generator, ``phi h`` by multiplying node
  weights with ``h(x_i)``, and the particle sources are deposited by linear
  (cloud-in-cell) interpolation for ``rho(phi A h)`` and by a two-node dipole
  for ``rho(sigma^2 h' phi')``.  Works for any smooth scalar model.
* ``PolynomialBasis``: ``U`` is tracked on ``1, x, ..., x^D``.  Closed only for
  models with polynomial coefficients; terms above degree ``D`` are dropped
  and their size reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import Observer, WeightedSums
from .errors import ConfigurationError
from .grid import TimeGrid
from .models import apply_generator, sensor_function

SQRT3 = np.sqrt(3.0)


def _scalar(model):
    if model.d_x != 1 or model.d_y != 1:
        raise ConfigurationError("the limit solver handles scalar models only", "model")


# --- nodal basis ---------------------------------------------------------------


@dataclass(frozen=True)
class NodalBasis:
    lower: float = -6.0
    upper: float = 6.0
    nodes: int = 241

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.lower, self.upper, self.nodes)

    @property
    def dx(self) -> float:
        return (self.upper - self.lower) / (self.nodes - 1)

    def rates(self, model):
        """Upward and downward jump rates of the birth-death chain approximating ``A``."""
        x = self.x[:, None]
        a = model.diffusion_matrix(x)[:, 0, 0]
        b = model.drift(x)[:, 0]
        dx = self.dx
        up = a / (2 * dx * dx) + np.maximum(b, 0.0) / dx
        down = a / (2 * dx * dx) + np.maximum(-b, 0.0) / dx
        up[-1] = 0.0  # reflect at the ends
        down[0] = 0.0
        return up, down

    def apply_generator_adjoint(self, u, up, down):
        """``Q^T u``: mass flows from node ``i`` to its neighbours."""
        out = -(up + down) * u
        out[1:] += up[:-1] * u[:-1]
        out[:-1] += down[1:] * u[1:]
        return out

    def locate(self, x):
        """Cell index and fractional position; ``inside`` marks points within the node range."""
        s = (np.asarray(x, dtype=float) - self.lower) / self.dx
        inside = (s >= 0) & (s <= self.nodes - 1)
        i = np.clip(np.floor(s).astype(np.int64), 0, self.nodes - 2)
        return i, s - i, inside

    def evaluate(self, u, phi) -> np.ndarray:
        """``U(phi) = sum_i u_i phi(x_i)``; ``u`` has nodes on the last axis."""
        return np.asarray(u) @ phi(self.x[:, None])


class NodalSources(Observer):
    """Per-step deposits of ``L A h`` (linear interpolation) and ``L sigma^2 h'`` (dipole).

    Also accumulates the weight of particles outside the node range, which is
    lost to the basis.
    """

    def __init__(self, model, basis: NodalBasis):
        _scalar(model)
        self.model = model
        self.basis = basis
        self.h = sensor_function(model, 0)

    def start(self, particles, total):
        return {"a": [], "o": [], "leak": [], "mass": [], "total": total}

    def step(self, state, view):
        model, basis = self.model, self.basis
        x = view.x
        w = np.exp(view.logw) / state["total"]
        ah = apply_generator(model, self.h, x)
        sig2 = model.diffusion_matrix(x)[:, 0, 0]
        dh = model.sensor_grad(x)[:, 0, 0]
        i, f, inside = basis.locate(x[:, 0])
        ca = np.where(inside, w * ah, 0.0)
        co = np.where(inside, w * sig2 * dh / basis.dx, 0.0)
        nn = basis.nodes
        a = np.bincount(i, ca * (1 - f), nn) + np.bincount(i + 1, ca * f, nn)
        o = np.bincount(i + 1, co, nn) - np.bincount(i, co, nn)
        state["a"].append(a)
        state["o"].append(o)
        state["leak"].append(np.sum(np.where(inside, 0.0, w * (np.abs(ah) + sig2 * np.abs(dh)))))
        state["mass"].append(np.sum(w * (np.abs(ah) + sig2 * np.abs(dh))))

    def finish(self, states):
        a = sum(np.asarray(s["a"]) for s in states)
        o = sum(np.asarray(s["o"]) for s in states)
        leak = sum(np.asarray(s["leak"]) for s in states)
        mass = sum(np.asarray(s["mass"]) for s in states)
        return {"a": a, "o": o, "leaked": float(leak.sum() / max(mass.sum(), 1e-300))}


@dataclass
class LimitSolution:
    times: np.ndarray  # checkpoint times
    phis: list
    values: np.ndarray  # (P, C)
    mode: str  # "independent" or "prelimit"
    leaked: float = 0.0
    dropped: float = 0.0
    extra: dict = field(default_factory=dict)


def _driver(dr, M):
    dr = np.asarray(dr, dtype=float).reshape(-1)
    if dr.shape[0] != M:
        raise ConfigurationError("noise increments do not match the grid", "R")
    return dr


def galerkin_nodal(model, basis: NodalBasis, sources, y, grid: TimeGrid, dr, phis, checkpoints, mode="independent"):
    """Euler integration of the limit equation on the nodal basis.

    ``sources`` is the output of ``NodalSources``; ``dr`` the fine increments of
    the extra Brownian noise (independent, or ``R^n`` from the same ``Y``).
    """
    _scalar(model)
    M, dt = grid.fine_steps, grid.dt
    dy = np.diff(np.asarray(y, dtype=float).reshape(M + 1, -1)[:, 0])
    dr = _driver(dr, M)
    up, down = basis.rates(model)
    if dt * np.max(up + down) > 1.0:
        raise ConfigurationError("fine step too coarse for the node spacing; refine M or widen dx", "grid.M")
    hx = model.sensor(basis.x[:, None])[:, 0]
    ck = np.array([grid.step_of(t) for t in np.atleast_1d(checkpoints)])
    vals = np.array([phi(basis.x[:, None]) for phi in phis])  # (P, nodes)
    src = sources["a"] + sources["o"]
    u = np.zeros(basis.nodes)
    out = np.empty((len(phis), len(ck)))
    pos = {int(k): i for i, k in enumerate(ck)}
    for m in range(M + 1):
        if m in pos:
            out[:, pos[m]] = vals @ u
        if m == M:
            break
        drive = 0.5 * dy[m] + dr[m] / (2 * SQRT3)
        u = u + basis.apply_generator_adjoint(u, up, down) * dt + u * hx * dy[m] + drive * src[m]
    return LimitSolution(grid.times[ck], [p.name for p in phis], out, mode, leaked=sources["leaked"])


# --- polynomial basis -----------------------------------------------------------


@dataclass(frozen=True)
class PolynomialBasis:
    degree: int = 6

    def operators(self, model):
        """Matrices acting on coefficient vectors of length ``D+1``.

        Returns ``(A, Hmul, dropped_A, dropped_H)``: ``(A c)_p`` is the
        coefficient of ``x^p`` in ``A(sum c_q x^q)``; the dropped matrices
        collect coefficients that land above degree ``D``.
        """
        _scalar(model)
        poly = model.poly
        if not poly:
            raise ConfigurationError(
                f"model {model.name!r} has non-polynomial coefficients; the polynomial basis is not closed",
                "galerkin.basis",
            )
        D = self.degree
        b = np.asarray(poly["drift"], dtype=float)
        a = np.asarray(poly["diffusion_sq"], dtype=float)
        h = np.asarray(poly["sensor"], dtype=float)
        width = D + 1 + max(len(b), len(a), len(h)) + 2
        A = np.zeros((width, D + 1))
        Hm = np.zeros((width, D + 1))
        for q in range(D + 1):
            # 1/2 a(x) q (q-1) x^{q-2} + b(x) q x^{q-1}
            if q >= 2:
                for k, ak in enumerate(a):
                    A[q - 2 + k, q] += 0.5 * ak * q * (q - 1)
            if q >= 1:
                for k, bk in enumerate(b):
                    A[q - 1 + k, q] += bk * q
            for k, hk in enumerate(h):
                Hm[q + k, q] += hk
        return A[: D + 1], Hm[: D + 1], A[D + 1 :], Hm[D + 1 :]

    def source_features(self, model):
        """Features whose weighted averages give ``rho(x^p A h)`` and ``rho(tr O~(x^p))``."""
        hfun = sensor_function(model, 0)
        D = self.degree

        def feat(x, hx):
            xs = x[:, 0]
            ah = apply_generator(model, hfun, x)
            sig2 = model.diffusion_matrix(x)[:, 0, 0]
            dh = model.sensor_grad(x)[:, 0, 0]
            pw = np.stack([xs**p for p in range(D + 1)])
            dpw = np.stack([p * xs ** max(p - 1, 0) for p in range(D + 1)])
            return np.vstack([pw * ah, dpw * sig2 * dh])

        return feat


def polynomial_sources(model, basis: PolynomialBasis, groups=1):
    """A ``WeightedSums`` observer for the polynomial source terms."""
    return WeightedSums([basis.source_features(model)], groups=groups)


def galerkin_polynomial(model, basis: PolynomialBasis, sums, y, grid: TimeGrid, dr, phis_coeffs, checkpoints, N, mode="independent"):
    """Euler integration on monomial moments ``U(x^p)``, ``p <= D``.

    ``sums`` is the ``(M+1, 2(D+1), G)`` output of ``polynomial_sources``;
    ``phis_coeffs`` maps names to ascending coefficient vectors of degree ``<= D``.
    """
    M, dt = grid.fine_steps, grid.dt
    D = basis.degree
    A, Hm, dA, dH = basis.operators(model)
    dy = np.diff(np.asarray(y, dtype=float).reshape(M + 1, -1)[:, 0])
    dr = _driver(dr, M)
    S = np.asarray(sums).sum(-1) / N  # (M+1, 2(D+1))
    src = S[:, : D + 1] + S[:, D + 1 :]
    ck = np.array([grid.step_of(t) for t in np.atleast_1d(checkpoints)])
    pos = {int(k): i for i, k in enumerate(ck)}
    names = list(phis_coeffs)
    C = np.zeros((len(names), D + 1))
    for r, name in enumerate(names):
        c = np.asarray(phis_coeffs[name], dtype=float)
        if len(c) > D + 1:
            raise ConfigurationError(f"{name} has degree above {D}", "galerkin.degree")
        C[r, : len(c)] = c
    # U is a linear functional: keep its values on monomials, v_p = U(x^p).
    v = np.zeros(D + 1)
    out = np.empty((len(names), len(ck)))
    for m in range(M + 1):
        if m in pos:
            out[:, pos[m]] = C @ v
        if m == M:
            break
        drive = 0.5 * dy[m] + dr[m] / (2 * SQRT3)
        v = v + v @ A * dt + v @ Hm * dy[m] + drive * src[m]
    # images landing above degree D need unknown moments and are dropped
    total = sum(np.abs(z).sum() for z in (A, Hm, dA, dH))
    frac = (np.abs(dA).sum() + np.abs(dH).sum()) / max(total, 1e-300)
    return LimitSolution(grid.times[ck], names, out, mode, dropped=float(frac))
