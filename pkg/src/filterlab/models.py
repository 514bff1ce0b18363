"""Observation models, test functions, and the operators built from them.

Array conventions: a batch of states has shape ``(..., d_X)``.  Model
evaluators return ``drift (..., d_X)``, ``diffusion (..., d_X, d_B)``,
``sensor (..., d_Y)``, ``sensor_grad (..., d_Y, d_X)`` and
``sensor_hess (..., d_Y, d_X, d_X)``.  Test functions return ``(...)``,
``(..., d)`` and ``(..., d, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "TestFunction",
    "constant",
    "coordinate",
    "monomial",
    "tanh_function",
    "product",
    "polynomial",
    "battery",
    "PiecewisePolynomial",
    "ModelGWN",
    "SpatialModel",
    "ClusterModel",
    "ConstantIntensity",
    "SelfExcitingIntensity",
    "CountIntensity",
    "apply_generator",
    "apply_o_tilde",
    "sensor_function",
    "linear_gaussian",
    "bounded_nonlinear",
    "constant_model",
    "scalar_model",
    "piecewise_model",
    "cell_model",
    "small_cluster_model",
    "builtin_gwn",
]


def _as_batch(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    if x.shape[-1] != dim:
        raise ValueError(f"expected trailing dimension {dim}, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class TestFunction:
    """A smooth ``phi`` with analytic gradient and Hessian."""

    __test__ = False  # keep pytest from collecting this class

    name: str
    dim: int
    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]
    degree: float = 0.0

    def __call__(self, x):
        return self.value(_as_batch(x, self.dim))


def constant(c: float = 1.0, dim: int = 1) -> TestFunction:
    def value(x):
        return np.full(x.shape[:-1], float(c))

    def grad(x):
        return np.zeros(x.shape)

    def hess(x):
        return np.zeros(x.shape + (dim,))

    name = "one" if c == 1.0 else f"const({c:g})"
    return TestFunction(name, dim, value, grad, hess, 0.0)


def monomial(power: int, index: int = 0, dim: int = 1) -> TestFunction:
    p = int(power)

    def value(x):
        return x[..., index] ** p

    def grad(x):
        g = np.zeros(x.shape)
        g[..., index] = p * x[..., index] ** (p - 1) if p > 0 else 0.0
        return g

    def hess(x):
        h = np.zeros(x.shape + (dim,))
        if p > 1:
            h[..., index, index] = p * (p - 1) * x[..., index] ** (p - 2)
        return h

    names = {0: "one", 1: "x", 2: "x2"}
    name = names.get(p, f"x{p}")
    if dim > 1:
        name = f"{name}[{index}]"
    return TestFunction(name, dim, value, grad, hess, float(p))


def coordinate(index: int = 0, dim: int = 1) -> TestFunction:
    return monomial(1, index, dim)


def tanh_function(index: int = 0, dim: int = 1) -> TestFunction:
    def value(x):
        return np.tanh(x[..., index])

    def grad(x):
        g = np.zeros(x.shape)
        g[..., index] = 1.0 - np.tanh(x[..., index]) ** 2
        return g

    def hess(x):
        h = np.zeros(x.shape + (dim,))
        t = np.tanh(x[..., index])
        h[..., index, index] = -2.0 * t * (1.0 - t * t)
        return h

    return TestFunction("tanh" if dim == 1 else f"tanh[{index}]", dim, value, grad, hess, 0.0)


def product(i: int, j: int, dim: int) -> TestFunction:
    """``x_i x_j`` for ``i != j``."""
    if i == j:
        raise ValueError("use monomial(2, i) for squares")

    def value(x):
        return x[..., i] * x[..., j]

    def grad(x):
        g = np.zeros(x.shape)
        g[..., i] = x[..., j]
        g[..., j] = x[..., i]
        return g

    def hess(x):
        h = np.zeros(x.shape + (dim,))
        h[..., i, j] = 1.0
        h[..., j, i] = 1.0
        return h

    return TestFunction(f"x{i}x{j}", dim, value, grad, hess, 2.0)


def polynomial(coeffs, name: str | None = None) -> TestFunction:
    """Scalar polynomial with ascending coefficients."""
    c = np.polynomial.Polynomial(np.asarray(coeffs, dtype=float))
    d1, d2 = c.deriv(1), c.deriv(2)

    def value(x):
        return c(x[..., 0])

    def grad(x):
        return d1(x[..., 0])[..., None]

    def hess(x):
        return d2(x[..., 0])[..., None, None]

    return TestFunction(name or f"poly{list(c.coef)}", 1, value, grad, hess, float(c.degree()))


_BATTERY = {
    "one": lambda: constant(1.0),
    "x": lambda: monomial(1),
    "x2": lambda: monomial(2),
    "tanh": tanh_function,
}


def battery(names=("one", "x", "x2", "tanh")) -> list[TestFunction]:
    """Scalar test functions by name."""
    out = []
    for n in names:
        if n not in _BATTERY:
            raise ConfigurationError(f"unknown test function {n!r}", "phi")
        out.append(_BATTERY[n]())
    return out


class PiecewisePolynomial:
    """Scalar piecewise polynomial; piece ``k`` covers ``[breaks[k-1], breaks[k])``.

    The outer pieces extend to infinity.  Coefficients are ascending.
    """

    def __init__(self, breaks, coeffs):
        self.breaks = np.asarray(breaks, dtype=float)
        self.pieces = [np.polynomial.Polynomial(np.asarray(c, dtype=float)) for c in coeffs]
        if len(self.pieces) != len(self.breaks) + 1:
            raise ConfigurationError("need len(coeffs) == len(breaks) + 1", "model.params")
        if np.any(np.diff(self.breaks) <= 0):
            raise ConfigurationError("breaks must increase", "model.params")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.breaks, x, side="right")
        out = np.empty_like(x)
        for k, p in enumerate(self.pieces):
            sel = idx == k
            if np.any(sel):
                out[sel] = p(x[sel])
        return out

    def deriv(self, m: int = 1) -> "PiecewisePolynomial":
        return PiecewisePolynomial(self.breaks, [p.deriv(m).coef for p in self.pieces])

    def bound(self, lo=-50.0, hi=50.0) -> float:
        grid = np.linspace(lo, hi, 20001)
        return float(np.max(np.abs(self(grid))))


@dataclass(frozen=True)
class ModelGWN:
    """Diffusion signal observed in additive Gaussian white noise.

    ``dX = sigma(X) dB + b(X) dt``,  ``dY = h(X) dt + dW``.
    """

    name: str
    d_x: int
    d_b: int
    d_y: int
    drift: Callable
    diffusion: Callable
    sensor: Callable
    sensor_grad: Callable
    sensor_hess: Callable
    x0_mean: np.ndarray
    x0_std: np.ndarray
    k1: float = np.inf
    k2: float = np.inf
    h_max: float = np.inf
    linear: tuple | None = None
    poly: dict | None = None
    oracle_only: bool = False

    def diffusion_matrix(self, x):
        s = self.diffusion(x)
        return s @ np.swapaxes(s, -1, -2)

    @property
    def channel_masses(self) -> np.ndarray:
        return np.ones(self.d_y)


@dataclass(frozen=True)
class SpatialModel:
    """Signal driven by a space-time white noise observed cell by cell.

    ``S_0`` is a partition into ``J`` cells with masses ``mu[j]``.  ``kernel``
    returns ``alpha(x, u_j)`` with shape ``(..., d_X, J)`` and ``sensor``
    returns ``h(x, u_j)`` with shape ``(..., J)``.
    """

    name: str
    d_x: int
    d_b: int
    masses: np.ndarray
    drift: Callable
    diffusion: Callable
    kernel: Callable
    sensor: Callable
    sensor_grad: Callable
    sensor_hess: Callable
    x0_mean: np.ndarray
    x0_std: np.ndarray
    h_max: float = np.inf

    @property
    def cells(self) -> int:
        return len(self.masses)

    @property
    def d_y(self) -> int:
        return len(self.masses)

    @property
    def channel_masses(self) -> np.ndarray:
        return np.asarray(self.masses, dtype=float)

    def diffusion_matrix(self, x):
        s = self.diffusion(x)
        a = s @ np.swapaxes(s, -1, -2)
        al = self.kernel(x)
        return a + np.einsum("...ij,...kj,j->...ik", al, al, self.channel_masses)

    def q_drift(self, x):
        """Drift under the reference measure, ``b - sum_j alpha_j h_j mu_j``."""
        return self.drift(x) - np.einsum(
            "...ij,...j,j->...i", self.kernel(x), self.sensor(x), self.channel_masses
        )


def apply_generator(model, phi: TestFunction, x) -> np.ndarray:
    """``A phi(x) = 1/2 sum a_ij d_i d_j phi + b . grad phi``."""
    if phi.dim != model.d_x:
        raise ValueError(f"test function has dim {phi.dim}, model has d_X={model.d_x}")
    x = _as_batch(x, model.d_x)
    a = model.diffusion_matrix(x)
    second = 0.5 * np.einsum("...ij,...ij->...", a, phi.hess(x))
    first = np.einsum("...i,...i->...", model.drift(x), phi.grad(x))
    return second + first


def sensor_function(model, i: int = 0) -> TestFunction:
    """Component ``h_i`` as a test function (cell ``i`` for spatial models)."""
    if not 0 <= i < model.d_y:
        raise IndexError(f"sensor index {i} out of range for d_Y={model.d_y}")
    return TestFunction(
        f"h{i}",
        model.d_x,
        lambda x: model.sensor(x)[..., i],
        lambda x: model.sensor_grad(x)[..., i, :],
        lambda x: model.sensor_hess(x)[..., i, :, :],
    )


def apply_o_tilde(model, phi: TestFunction, i: int, x) -> np.ndarray:
    """Trace of the symmetrized ``O = sigma^T grad(phi) grad(h_i)^T sigma``."""
    if not 0 <= i < model.d_y:
        raise IndexError(f"sensor index {i} out of range for d_Y={model.d_y}")
    x = _as_batch(x, model.d_x)
    s = model.diffusion(x)
    gphi = phi.grad(x)
    gh = model.sensor_grad(x)[..., i, :]
    u = np.einsum("...ji,...j->...i", s, gphi)
    v = np.einsum("...ji,...j->...i", s, gh)
    o = u[..., :, None] * v[..., None, :]
    o_sym = 0.5 * (o + np.swapaxes(o, -1, -2))
    return np.trace(o_sym, axis1=-2, axis2=-1)


def _scalar_wrap(fn):
    return lambda x: np.asarray(fn(x[..., 0]), dtype=float)


def scalar_model(
    name,
    drift,
    diffusion,
    sensor,
    sensor_d1,
    sensor_d2,
    x0_mean=0.0,
    x0_std=0.0,
    k1=np.inf,
    k2=np.inf,
    h_max=np.inf,
    poly=None,
    linear=None,
    oracle_only=False,
) -> ModelGWN:
    """Build a ``d_X = d_B = d_Y = 1`` model from elementwise callables."""
    b, s, h, h1, h2 = map(_scalar_wrap, (drift, diffusion, sensor, sensor_d1, sensor_d2))
    return ModelGWN(
        name=name,
        d_x=1,
        d_b=1,
        d_y=1,
        drift=lambda x: b(x)[..., None],
        diffusion=lambda x: s(x)[..., None, None],
        sensor=lambda x: h(x)[..., None],
        sensor_grad=lambda x: h1(x)[..., None, None],
        sensor_hess=lambda x: h2(x)[..., None, None, None],
        x0_mean=np.array([float(x0_mean)]),
        x0_std=np.array([float(x0_std)]),
        k1=k1,
        k2=k2,
        h_max=h_max,
        poly=poly,
        linear=linear,
        oracle_only=oracle_only,
    )


def linear_gaussian(F=-0.5, G=1.0, H=1.0, x0_mean=0.0, x0_std=1.0, clip=None) -> ModelGWN:
    """``dX = F X dt + G dB``, ``h(x) = H x``, optionally clipped to ``[-clip, clip]``.

    With ``clip`` set the sensor is bounded; such models exist for the
    Kalman-Bucy comparison only (the sensor is not smooth at the clip).
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    G = np.atleast_2d(np.asarray(G, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    d_x, d_b = G.shape
    d_y = H.shape[0]
    if F.shape != (d_x, d_x) or H.shape[1] != d_x:
        raise ConfigurationError("inconsistent F, G, H shapes", "model.params")
    c = np.inf if clip is None else float(clip)

    def sensor(x):
        return np.clip(x @ H.T, -c, c)

    def sensor_grad(x):
        inside = np.abs(x @ H.T) < c
        return inside[..., None] * H

    def sensor_hess(x):
        return np.zeros(x.shape[:-1] + (d_y, d_x, d_x))

    poly = None
    if d_x == d_b == d_y == 1 and clip is None:
        poly = {
            "drift": [0.0, F[0, 0]],
            "diffusion_sq": [G[0, 0] ** 2],
            "sensor": [0.0, H[0, 0]],
        }
    m0 = np.broadcast_to(np.asarray(x0_mean, dtype=float), (d_x,)).copy()
    s0 = np.broadcast_to(np.asarray(x0_std, dtype=float), (d_x,)).copy()
    return ModelGWN(
        name="linear" if clip is None else "linear_truncated",
        d_x=d_x,
        d_b=d_b,
        d_y=d_y,
        drift=lambda x: x @ F.T,
        diffusion=lambda x: np.broadcast_to(G, x.shape[:-1] + G.shape),
        sensor=sensor,
        sensor_grad=sensor_grad,
        sensor_hess=sensor_hess,
        x0_mean=m0,
        x0_std=s0,
        k1=float(np.abs(G).sum()),
        k2=float(np.abs(F).sum()),
        h_max=c,
        linear=(F, G, H),
        poly=poly,
        oracle_only=clip is not None,
    )


def bounded_nonlinear(eps=0.3, kappa=1.0, x0_mean=0.0, x0_std=0.5) -> ModelGWN:
    """``sigma(x) = 1 + eps cos x``, ``b(x) = -kappa x``, ``h(x) = tanh x``."""
    if not 0 <= eps < 1:
        raise ConfigurationError("eps must lie in [0, 1)", "model.params.eps")

    def h1(x):
        return 1.0 - np.tanh(x) ** 2

    def h2(x):
        t = np.tanh(x)
        return -2.0 * t * (1.0 - t * t)

    return scalar_model(
        "bounded",
        drift=lambda x: -kappa * x,
        diffusion=lambda x: 1.0 + eps * np.cos(x),
        sensor=np.tanh,
        sensor_d1=h1,
        sensor_d2=h2,
        x0_mean=x0_mean,
        x0_std=x0_std,
        k1=1.0 + eps,
        k2=abs(kappa),
        h_max=1.0,
    )


def constant_model(drift=0.0, diffusion=1.0, sensor=0.0, x0_mean=0.0, x0_std=0.0) -> ModelGWN:
    """Constant coefficients; the degenerate cases used by structural checks."""
    b, s, c = float(drift), float(diffusion), float(sensor)
    return scalar_model(
        "constant",
        drift=lambda x: np.full_like(x, b),
        diffusion=lambda x: np.full_like(x, s),
        sensor=lambda x: np.full_like(x, c),
        sensor_d1=np.zeros_like,
        sensor_d2=np.zeros_like,
        x0_mean=x0_mean,
        x0_std=x0_std,
        k1=abs(b) + abs(s),
        k2=0.0,
        h_max=abs(c),
        poly={"drift": [b], "diffusion_sq": [s * s], "sensor": [c]},
    )


def piecewise_model(drift, diffusion, sensor, x0_mean=0.0, x0_std=0.0) -> ModelGWN:
    """Scalar model from ``{"breaks": [...], "coeffs": [[...], ...]}`` tables."""
    b = PiecewisePolynomial(**drift)
    s = PiecewisePolynomial(**diffusion)
    h = PiecewisePolynomial(**sensor)
    return scalar_model(
        "piecewise",
        drift=b,
        diffusion=s,
        sensor=h,
        sensor_d1=h.deriv(1),
        sensor_d2=h.deriv(2),
        x0_mean=x0_mean,
        x0_std=x0_std,
        h_max=h.bound(),
    )


def builtin_gwn(name: str, **params) -> ModelGWN:
    makers = {
        "linear": linear_gaussian,
        "linear_truncated": lambda **p: linear_gaussian(**{"clip": 10.0, **p}),
        "bounded": bounded_nonlinear,
        "constant": constant_model,
        "piecewise": piecewise_model,
    }
    if name not in makers:
        raise ConfigurationError(f"unknown model {name!r}", "model.name")
    try:
        return makers[name](**params)
    except TypeError as exc:
        raise ConfigurationError(str(exc), "model.params") from exc


def cell_model(
    cells=2,
    alpha=0.25,
    sigma=0.8,
    kappa=1.0,
    x0_mean=0.0,
    x0_std=0.5,
    sensor_gain=1.0,
    total_mass=1.0,
) -> SpatialModel:
    """Scalar signal; ``S_0 = [0, 1]`` cut into ``cells`` equal cells.

    ``b(x) = -kappa tanh x``, ``alpha(x, u) = alpha cos(pi u) / (1 + x^2)`` and
    ``h(x, u) = gain * tanh(x - (2u - 1))``, evaluated at cell midpoints.  All
    coefficients are bounded.
    """
    J = int(cells)
    if J < 1:
        raise ConfigurationError("need at least one cell", "model.params.cells")
    u = (np.arange(J) + 0.5) / J
    mu = np.full(J, float(total_mass) / J)
    shift = 2.0 * u - 1.0 if J > 1 else np.zeros(1)
    weight = np.cos(np.pi * u) if J > 1 else np.ones(1)

    def kernel(x):
        return alpha * weight / (1.0 + x[..., :, None] ** 2)

    def sensor(x):
        return sensor_gain * np.tanh(x - shift)

    def sensor_grad(x):
        t = np.tanh(x - shift)
        return (sensor_gain * (1.0 - t * t))[..., None]

    def sensor_hess(x):
        t = np.tanh(x - shift)
        return (sensor_gain * -2.0 * t * (1.0 - t * t))[..., None, None]

    return SpatialModel(
        name=f"cells{J}",
        d_x=1,
        d_b=1,
        masses=mu,
        drift=lambda x: -kappa * np.tanh(x),
        diffusion=lambda x: np.full(x.shape[:-1] + (1, 1), float(sigma)),
        kernel=kernel,
        sensor=sensor,
        sensor_grad=sensor_grad,
        sensor_hess=sensor_hess,
        x0_mean=np.array([float(x0_mean)]),
        x0_std=np.array([float(x0_std)]),
        h_max=abs(sensor_gain),
    )


# --- cluster model -------------------------------------------------------------
#
# Intensities depend on the cluster history only through (time of the latest
# cluster point, number of cluster points).  ``t_last = -inf`` means no
# cluster point yet.


class ConstantIntensity:
    """``lambda(e, eta) = frac * lambda_0(e)``."""

    kind = "constant"

    def __init__(self, lam0, frac=0.5):
        if not 0 <= frac <= 1:
            raise ConfigurationError("frac must lie in [0, 1]", "model.params.frac")
        self.lam0 = np.asarray(lam0, dtype=float)
        self.frac = float(frac)

    def rate(self, e, t, t_last, count):
        return self.frac * self.lam0[e] + 0.0 * np.asarray(t, dtype=float)

    def integral(self, e, a, b, t_last, count):
        return self.frac * self.lam0[e] * (np.asarray(b, dtype=float) - a)

    def kinks(self, e, a, b, t_last, count):
        return []


class SelfExcitingIntensity:
    """``min(lambda_0(e), eps(e) + beta exp(-delta (t - t_last)))``; ``eps(e)`` before any cluster point."""

    kind = "self_exciting"

    def __init__(self, lam0, eps, beta, delta):
        self.lam0 = np.asarray(lam0, dtype=float)
        self.eps = np.minimum(np.broadcast_to(np.asarray(eps, dtype=float), self.lam0.shape), self.lam0)
        self.beta = float(beta)
        self.delta = float(delta)
        if self.beta < 0 or self.delta <= 0:
            raise ConfigurationError("need beta >= 0 and delta > 0", "model.params")

    def rate(self, e, t, t_last, count):
        t = np.asarray(t, dtype=float)
        t_last = np.asarray(t_last, dtype=float)
        lam0, eps = self.lam0[e], self.eps[e]
        with np.errstate(over="ignore", invalid="ignore"):
            boost = np.where(np.isfinite(t_last), self.beta * np.exp(-self.delta * (t - t_last)), 0.0)
        return np.minimum(lam0, eps + boost)

    def _crossing(self, e, t_last):
        """Time after which ``eps + beta exp(...)`` drops below ``lambda_0``."""
        gap = self.lam0[e] - self.eps[e]
        t_last = np.asarray(t_last, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            cross = t_last + np.log(np.where(gap > 0, self.beta / np.where(gap > 0, gap, 1.0), 1.0)) / self.delta
        cross = np.where(gap <= 0, np.inf, cross)  # rate pinned at lambda_0
        cross = np.where((gap > 0) & (self.beta <= gap), t_last, cross)
        return np.where(np.isfinite(t_last), cross, -np.inf)

    def integral(self, e, a, b, t_last, count):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        t_last = np.asarray(t_last, dtype=float)
        lam0, eps = self.lam0[e], self.eps[e]
        cross = self._crossing(e, t_last)
        flat_end = np.clip(cross, a, b)
        part1 = lam0 * (flat_end - a)
        p = flat_end
        finite = np.isfinite(t_last)
        tl = np.where(finite, t_last, 0.0)
        with np.errstate(over="ignore"):
            decay = np.where(
                finite,
                (self.beta / self.delta) * (np.exp(-self.delta * (p - tl)) - np.exp(-self.delta * (b - tl))),
                0.0,
            )
        part2 = eps * (b - p) + decay
        return part1 + part2

    def kinks(self, e, a, b, t_last, count):
        c = float(np.asarray(self._crossing(e, t_last)))
        return [c] if a < c < b else []


class CountIntensity:
    """``min(lambda_0(e), eps(e) + beta * |eta|)``: grows with the cluster size."""

    kind = "count"

    def __init__(self, lam0, eps, beta):
        self.lam0 = np.asarray(lam0, dtype=float)
        self.eps = np.minimum(np.broadcast_to(np.asarray(eps, dtype=float), self.lam0.shape), self.lam0)
        self.beta = float(beta)

    def rate(self, e, t, t_last, count):
        return np.minimum(self.lam0[e], self.eps[e] + self.beta * np.asarray(count)) + 0.0 * np.asarray(t)

    def integral(self, e, a, b, t_last, count):
        return self.rate(e, a, t_last, count) * (np.asarray(b, dtype=float) - a)

    def kinks(self, e, a, b, t_last, count):
        return []


@dataclass(frozen=True)
class ClusterModel:
    """Noise-plus-cluster marked point process on a finite mark set."""

    nu: np.ndarray
    gamma: np.ndarray
    lam0: np.ndarray
    intensity: object
    horizon: float = 1.0
    marks: tuple = field(default=())

    def __post_init__(self):
        nu, gamma, lam0 = (np.asarray(a, dtype=float) for a in (self.nu, self.gamma, self.lam0))
        if not (nu.shape == gamma.shape == lam0.shape) or nu.ndim != 1:
            raise ConfigurationError("nu, gamma, lambda_0 must be equal-length vectors", "model.params")
        if np.any(nu <= 0) or np.any(gamma < 0) or np.any(lam0 <= 0):
            raise ConfigurationError("need nu > 0, gamma >= 0, lambda_0 > 0", "model.params")
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "lam0", lam0)
        if not self.marks:
            object.__setattr__(self, "marks", tuple(range(len(nu))))

    @property
    def n_marks(self) -> int:
        return len(self.nu)

    def rate(self, e, t, t_last=-np.inf, count=0):
        return self.intensity.rate(e, t, t_last, count)

    def total_rate_integral(self, a, b, t_last, count):
        """``int_a^b sum_e (lambda(e, .) - lambda_0(e)) nu(e) ds``."""
        total = 0.0
        for e in range(self.n_marks):
            total = total + self.nu[e] * (
                self.intensity.integral(e, a, b, t_last, count) - self.lam0[e] * (np.asarray(b) - a)
            )
        return total

    def kinks(self, a, b, t_last, count):
        out = set()
        for e in range(self.n_marks):
            out.update(self.intensity.kinks(e, a, b, t_last, count))
        return sorted(out)


def small_cluster_model(
    m=3, kind="self_exciting", horizon=1.0, gamma=1.0, lam0=2.0, eps=0.5, beta=3.0, delta=4.0, frac=0.5
) -> ClusterModel:
    """Cluster model on ``m`` marks with uniform weights ``nu = 1/m``."""
    m = int(m)
    nu = np.full(m, 1.0 / m)
    g = np.broadcast_to(np.asarray(gamma, dtype=float), (m,)).copy()
    l0 = np.broadcast_to(np.asarray(lam0, dtype=float), (m,)).copy()
    if kind == "constant":
        inten = ConstantIntensity(l0, frac)
    elif kind == "self_exciting":
        inten = SelfExcitingIntensity(l0, eps, beta, delta)
    elif kind == "count":
        inten = CountIntensity(l0, eps, beta)
    elif kind == "dominating":
        inten = ConstantIntensity(l0, 1.0)
    else:
        raise ConfigurationError(f"unknown intensity {kind!r}", "model.params.kind")
    return ClusterModel(nu=nu, gamma=g, lam0=l0, intensity=inten, horizon=float(horizon))
