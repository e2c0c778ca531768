"""Exact transition kernels for the conjugate scalar model.

The model: two observations x1, x2 with likelihood N(theta, sigma_x^2) and
prior N(0, sigma_theta^2). Its posterior is N(xbar, sigma_l^2) with

    v = sigma_x^2 / sigma_theta^2 + 2,   sigma_l^2 = sigma_x^2 / v,
    xbar = (x1 + x2) / v.

For a quadratic potential the damped Hamiltonian SDE on z = (r, theta) is
linear,

    dz = A (z - [0, c]) dt + sqrt(2C) dW_r,     A = [[-C, -1/sigma_l^2],
                                                     [ 1,  0          ]],

so its time-eta transition is Gaussian with closed-form mean and covariance.
Sampling that Gaussian is a zero-discretization-error integrator: "full"
mode keeps the center c = xbar fixed; "minibatch" mode flips a fair coin
each step between the sub-potential centers c_i = 2 x_i / v while keeping
the full-data curvature in A. The minibatch chain is exact in time yet
converges to a visibly wrong law, isolating the batching error from any
integrator error.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .chain import ChainConfig, Trace
from .core import RngStream, State

__all__ = [
    "ToyParams",
    "ExactMode",
    "reference_params",
    "matexp2",
    "toy_transition",
    "toy_exact_step",
    "toy_posterior",
    "run_exact_chain",
]


class ExactMode(str, enum.Enum):
    FULL = "full"
    MINIBATCH = "minibatch"


@dataclass(frozen=True)
class ToyParams:
    """Model constants; derived quantities are exposed as properties."""

    sigma_x2: float
    sigma_theta2: float
    x1: float
    x2: float
    friction: float

    def __post_init__(self):
        for name in ("sigma_x2", "sigma_theta2", "friction"):
            object.__setattr__(self, name, float(getattr(self, name)))
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        object.__setattr__(self, "x1", float(self.x1))
        object.__setattr__(self, "x2", float(self.x2))
        if not np.all(np.isfinite([self.x1, self.x2])):
            raise ValueError("observations must be finite")
        # the linear drift must be a stable (Hurwitz) matrix, and the target
        # law diag(1, sigma_l^2) must solve its stationary Lyapunov equation
        A, S = self.drift, self.stationary_cov
        if not np.all(np.linalg.eigvals(A).real < 0):
            raise ValueError("drift matrix is not Hurwitz")
        residual = A @ S + S @ A.T + np.diag([2.0 * self.friction, 0.0])
        if np.abs(residual).max() > 1e-12:
            raise ValueError("stationary covariance identity violated")

    @property
    def v(self) -> float:
        return self.sigma_x2 / self.sigma_theta2 + 2.0

    @property
    def sigma_l2(self) -> float:
        return self.sigma_x2 / self.v

    @property
    def center_full(self) -> float:
        return (self.x1 + self.x2) / self.v

    @property
    def centers(self) -> tuple[float, float]:
        return (2.0 * self.x1 / self.v, 2.0 * self.x2 / self.v)

    @property
    def drift(self) -> np.ndarray:
        return np.array([[-self.friction, -1.0 / self.sigma_l2], [1.0, 0.0]])

    @property
    def stationary_cov(self) -> np.ndarray:
        return np.diag([1.0, self.sigma_l2])


def reference_params() -> ToyParams:
    """The parameter set used throughout the verification suite."""
    return ToyParams(sigma_x2=2.0, sigma_theta2=0.5, x1=4.0, x2=-3.2, friction=2.0)


def matexp2(A, t: float) -> np.ndarray:
    """exp(t A) for a real 2x2 matrix, in closed form.

    Writes A = m I + D with m = tr(A)/2, where D squares to q^2 I with
    q^2 = m^2 - det(A); then exp(tD) is cosh/sinh (q^2 > 0) or cos/sin
    (q^2 < 0) in D. Near the defective case |q^2 t^2| ~ 0 it falls back to
    a scaled Taylor series (25+ terms) with repeated squaring.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.shape != (2, 2) or not np.all(np.isfinite(A)):
        raise ValueError("need a finite 2x2 matrix")
    t = float(t)
    m = 0.5 * (A[0, 0] + A[1, 1])
    D = A - m * np.eye(2)
    q2 = m * m - (A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0])
    s = q2 * t * t
    if abs(s) < 1e-8:
        return _taylor_exp(A, t)
    if q2 > 0:
        q = np.sqrt(q2)
        c, k = np.cosh(q * t), np.sinh(q * t) / q
    else:
        w = np.sqrt(-q2)
        c, k = np.cos(w * t), np.sin(w * t) / w
    return np.exp(m * t) * (c * np.eye(2) + k * D)


def _taylor_exp(A: np.ndarray, t: float, terms: int = 30) -> np.ndarray:
    B = A * t
    norm = np.abs(B).sum(axis=1).max()
    squarings = max(0, int(np.ceil(np.log2(norm / 0.5))) if norm > 0.5 else 0)
    B = B / (2.0**squarings)
    out = np.eye(2)
    term = np.eye(2)
    for k in range(1, terms + 1):
        term = term @ B / k
        out = out + term
    for _ in range(squarings):
        out = out @ out
    return out


def toy_transition(z0, eta: float, p: ToyParams, center: float):
    """Mean and covariance of z(eta) started from the point z0 = (r, theta).

    mean = e^{eta A}(z0 - b) + b with b = (0, center);
    cov  = S - e^{eta A} S e^{eta A^T} with S = diag(1, sigma_l^2).
    The covariance is symmetrized and tiny negative eigenvalues from
    rounding (>= -1e-12) are clamped to zero.
    """
    if eta < 0:
        raise ValueError("eta must be >= 0")
    z0 = np.asarray(z0, dtype=np.float64).reshape(2)
    E = matexp2(p.drift, eta)
    b = np.array([0.0, float(center)])
    mean = E @ (z0 - b) + b
    S = p.stationary_cov
    cov = S - E @ S @ E.T
    cov = 0.5 * (cov + cov.T)
    return mean, _clamp_psd(cov)


def _clamp_psd(cov: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() < -tol:
        raise ValueError(f"covariance eigenvalue {vals.min()} below -{tol}")
    vals = np.clip(vals, 0.0, None)
    return (vecs * vals) @ vecs.T


def _sqrt_psd(cov: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(cov)
    vals = np.clip(vals, 0.0, None)
    return vecs * np.sqrt(vals)


@lru_cache(maxsize=128)
def _kernel(p: ToyParams, eta: float, center: float):
    E = matexp2(p.drift, eta)
    b = np.array([0.0, center])
    _, cov = toy_transition(np.zeros(2), eta, p, center)
    return E, b, _sqrt_psd(cov)


def toy_exact_step(z0, eta: float, p: ToyParams, mode, rng: RngStream,
                   coin_rng: RngStream | None = None) -> np.ndarray:
    """One exact transition; minibatch mode flips a fair coin for the center.

    The coin is drawn from coin_rng when given (the chain runner routes it
    through the schedule stream), else from rng.
    """
    mode = ExactMode(mode)
    z0 = np.asarray(z0, dtype=np.float64).reshape(2)
    if mode is ExactMode.FULL:
        center = p.center_full
    else:
        picker = rng if coin_rng is None else coin_rng
        center = p.centers[picker.integers(2)]
    E, b, L = _kernel(p, float(eta), center)
    return E @ (z0 - b) + b + L @ rng.normal(2)


def toy_posterior(p: ToyParams) -> tuple[float, float]:
    """(posterior mean, posterior variance) of theta."""
    return p.center_full, p.sigma_l2


def run_exact_chain(p: ToyParams, eta: float, mode, cfg: ChainConfig,
                    chain_index: int = 0) -> Trace:
    """Chain of exact transitions, traced like any integrator chain.

    Uses the shared stream convention: noise 4c, init 4c+1, coin 4c+2.
    """
    if eta <= 0:
        raise ValueError("running a chain requires eta > 0")
    t0 = time.perf_counter()
    mode = ExactMode(mode)
    rng = RngStream(cfg.seed, 4 * chain_index)
    coin = RngStream(cfg.seed, 4 * chain_index + 2)

    if isinstance(cfg.init, State):
        if cfg.init.dim != 1:
            raise ValueError("the scalar model needs a 1-D state")
        z = np.array([cfg.init.r[0], cfg.init.theta[0]])
    else:
        init_rng = RngStream(cfg.seed, 4 * chain_index + 1)
        draws = init_rng.normal(2)
        z = np.array([draws[0], np.sqrt(p.sigma_theta2) * draws[1]])

    kernels = {
        c: _kernel(p, float(eta), c)
        for c in ((p.center_full,) if mode is ExactMode.FULL else p.centers)
    }
    centers = p.centers

    n = cfg.n_samples
    thetas = np.empty((n, 1))
    momenta = np.empty((n, 1))
    steps = np.empty(n, dtype=np.int64)
    total = cfg.burn_in + n * cfg.thinning
    kept = 0
    full_kernel = kernels.get(p.center_full)
    for i in range(1, total + 1):
        if mode is ExactMode.FULL:
            E, b, L = full_kernel
        else:
            E, b, L = kernels[centers[coin.integers(2)]]
        z = E @ (z - b) + b + L @ rng.normal(2)
        if i > cfg.burn_in and (i - cfg.burn_in) % cfg.thinning == 0:
            momenta[kept, 0] = z[0]
            thetas[kept, 0] = z[1]
            steps[kept] = i
            kept += 1

    meta = {
        "scheme": "exact",
        "eta": float(eta),
        "friction": p.friction,
        "n_inner": 1,
        "v_hat": 0.0,
        "mode": mode.value,
        "K": 2 if mode is ExactMode.MINIBATCH else 1,
        "n_samples": n,
        "burn_in": cfg.burn_in,
        "thinning": cfg.thinning,
        "seed": cfg.seed,
        "chain_index": chain_index,
        "dim": 1,
        "wall_time_s": time.perf_counter() - t0,
    }
    return Trace(
        thetas=thetas,
        momenta=momenta,
        steps=steps,
        times=steps.astype(float) * eta,
        meta=meta,
        effective_time=total * eta,
    )
