"""One-step transition kernels for the damped Hamiltonian SDE.

The SDE being discretized, for potential U, friction C > 0, diagonal mass M:

    d theta = M^-1 r dt
    d r     = -grad U(theta) dt - C M^-1 r dt + sqrt(2C) dW

Every scheme advances (r, theta) by one step of size eta, consuming a
gradient provider bound to the current (possibly mini-batch, K-rescaled)
potential and an RngStream. Schemes:

- EULER: explicit Euler-Maruyama, both updates from pre-step values.
- LEAPFROG: half position drift, damped momentum kick with injected noise
  sqrt(2 C eta) w, half position drift.
- SGHMC: LEAPFROG with injected-noise std sqrt(2 (C - v_hat) eta).
- SPV: half drift, exact Ornstein-Uhlenbeck momentum update forced by the
  mid-point gradient, half drift.
- LIE_TROTTER: n_inner deterministic leapfrog steps, then one exact OU
  momentum refresh over time n_inner * eta.
- HMC_PARTIAL: identical path law to LIE_TROTTER, restricted to M = I, with
  the refresh written as r' = alpha r + sqrt(1 - alpha^2) w,
  alpha = exp(-eta n_inner C).
- SYMMETRIC: half OU refresh, deterministic leapfrog, half OU refresh.
- MT3: three-stage quasi-symplectic scheme of weak third order with
  implicit-in-r stages (solved in closed form for diagonal M) and
  eta^{1/2}, eta^{3/2}, eta^{5/2} stochastic corrections; needs a
  Hessian-vector provider.

Noise draw order is part of each scheme's contract and is documented on the
compiled stepper; replaying a stream reproduces a step bit-exactly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import MassMatrix, RngStream, State

__all__ = [
    "Scheme",
    "IntegratorSpec",
    "DivergenceError",
    "ou_exact_step",
    "partial_refresh_alpha",
    "compile_step",
    "step",
    "euler_step",
    "leapfrog_step",
    "spv_step",
    "lie_trotter_step",
    "hmc_partial_step",
    "symmetric_step",
    "mt3_step",
    "sghmc_step",
]

GradFn = Callable[[np.ndarray], np.ndarray]
HessFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


class Scheme(str, enum.Enum):
    EULER = "euler"
    LEAPFROG = "leapfrog"
    SPV = "spv"
    LIE_TROTTER = "lie-trotter"
    SYMMETRIC = "symmetric"
    MT3 = "mt3"
    SGHMC = "sghmc"
    HMC_PARTIAL = "hmc"


class DivergenceError(RuntimeError):
    """A step produced a non-finite state (usually from a non-finite gradient)."""

    def __init__(self, message: str, r=None, theta=None, step_index=None,
                 eta=None, scheme=None):
        self.r = None if r is None else np.asarray(r)
        self.theta = None if theta is None else np.asarray(theta)
        self.step_index = step_index
        self.eta = eta
        self.scheme = scheme
        parts = [message]
        if step_index is not None:
            parts.append(f"step={step_index}")
        if scheme is not None:
            parts.append(f"scheme={getattr(scheme, 'value', scheme)}")
        if eta is not None:
            parts.append(f"eta={eta}")
        super().__init__(" ".join(parts))


@dataclass(frozen=True)
class IntegratorSpec:
    """Frozen description of one scheme configuration.

    eta = 0 is allowed here (every scheme reduces to the identity map, which
    the tests rely on); running chains requires eta > 0 and enforces it at
    that layer. friction = 0 is allowed for deterministic-limit probes.
    """

    scheme: Scheme
    eta: float
    friction: float
    mass: MassMatrix
    n_inner: int = 1
    v_hat: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "eta", float(self.eta))
        object.__setattr__(self, "friction", float(self.friction))
        object.__setattr__(self, "n_inner", int(self.n_inner))
        object.__setattr__(self, "v_hat", float(self.v_hat))
        if not np.isfinite(self.eta) or self.eta < 0:
            raise ValueError("eta must be finite and >= 0")
        if not np.isfinite(self.friction) or self.friction < 0:
            raise ValueError("friction must be finite and >= 0")
        if self.n_inner < 1:
            raise ValueError("n_inner must be >= 1")
        if self.v_hat < 0:
            raise ValueError("v_hat must be >= 0")
        if self.scheme is Scheme.SGHMC and self.v_hat > self.friction:
            raise ValueError(
                "SGHMC needs v_hat <= friction for a PSD injected-noise covariance"
            )
        if self.scheme is Scheme.HMC_PARTIAL and not self.mass.is_identity():
            raise ValueError(
                "the partial-refresh HMC scheme is defined with identity mass only"
            )

    @property
    def dim(self) -> int:
        return self.mass.dim


def partial_refresh_alpha(eta: float, n_inner: int, friction: float) -> float:
    """Momentum-retention coefficient alpha = exp(-eta * n_inner * friction)."""
    return float(np.exp(-float(eta) * int(n_inner) * float(friction)))


def ou_exact_step(r, f, eta: float, friction: float, mass: MassMatrix, rng: RngStream):
    """Exact OU transition for dr = -f dt - C M^-1 r dt + sqrt(2C) dW.

    Returns e^{-C M^-1 eta}(r - mu) + mu + sqrt(M (1 - e^{-2 C M^-1 eta})) w
    with the fixed point mu = -(M/C) f. friction = 0 returns the deterministic
    limit r - eta f and consumes no randomness.
    """
    r = np.asarray(r, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    if r.shape != f.shape or r.shape != (mass.dim,):
        raise ValueError("r and f must both match the mass dimension")
    if friction == 0.0:
        return r - eta * f
    x = friction * eta * mass.inv_diag
    decay = np.exp(-x)
    mu = -(mass.diag / friction) * f
    noise_std = np.sqrt(mass.diag * -np.expm1(-2.0 * x))
    return decay * (r - mu) + mu + noise_std * rng.normal(r.size)


def _det_leapfrog(r, th, grad: GradFn, eta: float, inv: np.ndarray):
    th_half = th + (0.5 * eta) * r * inv
    r_new = r - eta * grad(th_half)
    th_new = th_half + (0.5 * eta) * r_new * inv
    return r_new, th_new


def compile_step(spec: IntegratorSpec) -> Callable:
    """Bake the spec's constants into a raw stepper.

    The returned callable has signature (r, theta, grad, hess, rng) and
    returns the new (r, theta) arrays without validation; callers own the
    divergence check. Noise draws per call, in order:

    EULER / LEAPFROG / SGHMC: one d-vector.
    SPV / LIE_TROTTER / HMC_PARTIAL: one d-vector (momentum refresh).
    SYMMETRIC: two d-vectors (first then second half refresh).
    MT3: two d-vectors (w1, the sqrt-eta one, then w2).
    """
    eta = spec.eta
    C = spec.friction
    inv = spec.mass.inv_diag
    diag = spec.mass.diag
    d = spec.mass.dim
    scheme = spec.scheme

    if scheme is Scheme.EULER:
        noise_std = np.sqrt(2.0 * C * eta)

        def stepper(r, th, grad, hess, rng):
            th_new = th + eta * r * inv
            r_new = r - eta * C * r * inv - eta * grad(th) + noise_std * rng.normal(d)
            return r_new, th_new

        return stepper

    if scheme in (Scheme.LEAPFROG, Scheme.SGHMC):
        v_hat = spec.v_hat if scheme is Scheme.SGHMC else 0.0
        noise_std = np.sqrt(2.0 * (C - v_hat) * eta)

        def stepper(r, th, grad, hess, rng):
            th_half = th + (0.5 * eta) * r * inv
            r_new = (
                r - eta * grad(th_half) - eta * C * r * inv + noise_std * rng.normal(d)
            )
            th_new = th_half + (0.5 * eta) * r_new * inv
            return r_new, th_new

        return stepper

    if scheme is Scheme.SPV:
        x = C * eta * inv
        decay = np.exp(-x)
        noise_std = np.sqrt(diag * -np.expm1(-2.0 * x))
        # eta * (1 - e^{-x}) / x, continuous at x = 0 where it equals eta;
        # this times grad recovers the leapfrog kick in the frictionless limit
        kick = np.full(d, eta)
        nz = x > 0
        kick[nz] = eta * -np.expm1(-x[nz]) / x[nz]

        def stepper(r, th, grad, hess, rng):
            th_half = th + (0.5 * eta) * r * inv
            r_new = decay * r - kick * grad(th_half) + noise_std * rng.normal(d)
            th_new = th_half + (0.5 * eta) * r_new * inv
            return r_new, th_new

        return stepper

    if scheme in (Scheme.LIE_TROTTER, Scheme.HMC_PARTIAL):
        n_inner = spec.n_inner
        x = C * n_inner * eta * inv
        decay = np.exp(-x)
        noise_std = np.sqrt(diag * -np.expm1(-2.0 * x))

        def stepper(r, th, grad, hess, rng):
            for _ in range(n_inner):
                r, th = _det_leapfrog(r, th, grad, eta, inv)
            r = decay * r + noise_std * rng.normal(d)
            return r, th

        return stepper

    if scheme is Scheme.SYMMETRIC:
        x_half = C * (0.5 * eta) * inv
        decay = np.exp(-x_half)
        noise_std = np.sqrt(diag * -np.expm1(-2.0 * x_half))

        def stepper(r, th, grad, hess, rng):
            r = decay * r + noise_std * rng.normal(d)
            r, th = _det_leapfrog(r, th, grad, eta, inv)
            r = decay * r + noise_std * rng.normal(d)
            return r, th

        return stepper

    if scheme is Scheme.MT3:
        c1, c2 = 7.0 / 24.0, 3.0 / 8.0
        den1 = 1.0 + c1 * eta * C * inv
        den2 = 1.0 + c2 * eta * C * inv
        den3 = 1.0 + eta * C * inv
        s2c = np.sqrt(2.0 * C)
        amp_r = np.sqrt(eta) * s2c
        amp_mix = eta**1.5 * s2c
        amp_high = eta**2.5 / 6.0 * s2c

        def stepper(r, th, grad, hess, rng):
            th1 = th + c1 * eta * r * inv
            g1 = grad(th1)
            r1 = (r - c1 * eta * g1) / den1
            F1 = -g1 - C * r1 * inv

            th2 = th + (25.0 / 24.0) * eta * r * inv + (0.5 * eta * eta) * F1 * inv
            g2 = grad(th2)
            r2 = (r + (2.0 / 3.0) * eta * F1 - c2 * eta * g2) / den2
            F2 = -g2 - C * r2 * inv

            th3 = (
                th
                + eta * r * inv
                + (17.0 / 36.0) * eta * eta * F1 * inv
                + (1.0 / 36.0) * eta * eta * F2 * inv
            )
            g3 = grad(th3)
            r3 = (r + (2.0 / 3.0) * eta * (F1 - F2) - eta * g3) / den3

            w1 = rng.normal(d)
            w2 = rng.normal(d)
            mix = w1 * 0.5 + w2
            th_new = th3 + amp_mix * mix * inv - amp_high * C * w1 * inv * inv
            r_new = (
                r3
                + amp_r * w1
                - amp_mix * C * mix * inv
                - amp_high * hess(th3, w1 * inv)
                + amp_high * C * C * w1 * inv * inv
            )
            return r_new, th_new

        return stepper

    raise ValueError(f"unknown scheme {scheme!r}")


def _finish(r, th, spec: IntegratorSpec) -> State:
    # NaN or +-inf anywhere makes the sum non-finite
    if not np.isfinite(float(np.sum(r)) + float(np.sum(th))):
        raise DivergenceError(
            "non-finite state after step", r=r, theta=th, eta=spec.eta,
            scheme=spec.scheme,
        )
    return State(r=r, theta=th)


def _apply(z: State, grad: GradFn, spec: IntegratorSpec, rng: RngStream,
           hess: HessFn | None, expected: tuple[Scheme, ...]) -> State:
    if spec.scheme not in expected:
        names = "/".join(s.name for s in expected)
        raise ValueError(f"spec.scheme must be {names}, got {spec.scheme.name}")
    if z.dim != spec.mass.dim:
        raise ValueError("state dimension does not match mass matrix")
    if spec.scheme is Scheme.MT3 and hess is None:
        raise ValueError("MT3 needs a Hessian-vector provider")
    r, th = compile_step(spec)(z.r, z.theta, grad, hess, rng)
    return _finish(r, th, spec)


def euler_step(z, grad, spec, rng) -> State:
    return _apply(z, grad, spec, rng, None, (Scheme.EULER,))


def leapfrog_step(z, grad, spec, rng) -> State:
    return _apply(z, grad, spec, rng, None, (Scheme.LEAPFROG,))


def sghmc_step(z, grad, spec, rng) -> State:
    return _apply(z, grad, spec, rng, None, (Scheme.SGHMC,))


def spv_step(z, grad, spec, rng) -> State:
    return _apply(z, grad, spec, rng, None, (Scheme.SPV,))


def lie_trotter_step(z, grad, spec, rng) -> State:
    return _apply(z, grad, spec, rng, None, (Scheme.LIE_TROTTER,))


def hmc_partial_step(z, grad, spec, rng) -> State:
    return _apply(z, grad, spec, rng, None, (Scheme.HMC_PARTIAL,))


def symmetric_step(z, grad, spec, rng) -> State:
    return _apply(z, grad, spec, rng, None, (Scheme.SYMMETRIC,))


def mt3_step(z, grad, hess, spec, rng) -> State:
    return _apply(z, grad, spec, rng, hess, (Scheme.MT3,))


def step(z, grad, spec, rng, hess=None) -> State:
    """Apply one step of whatever scheme the spec selects."""
    return _apply(z, grad, spec, rng, hess, tuple(Scheme))
