"""Chain runner: integrator steps under a batch schedule, with trace capture.

Stream convention (seed fixed, per chain index c):

    noise draws   -> RngStream(seed, 4c)
    initial state -> RngStream(seed, 4c + 1)
    batch schedule-> RngStream(seed, 4c + 2)   (built by the caller)

so parallel chains are independent and any chain is reproducible in
isolation. A trace keeps every `thinning`-th state after `burn_in` steps;
defaults follow the oracle protocol used throughout the verification suite
(burn-in 2000, thinning 500).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .batching import BatchSchedule
from .core import MassMatrix, RngStream, State
from .integrators import DivergenceError, IntegratorSpec, Scheme, compile_step
from .potentials import Potential

__all__ = ["ChainConfig", "Trace", "run_chain", "ergodic_average", "acf1", "save_trace"]

_MULTI_TIME = (Scheme.LIE_TROTTER, Scheme.HMC_PARTIAL)


@dataclass(frozen=True)
class ChainConfig:
    """Sampling run shape: how many samples, how thinned, where started."""

    n_samples: int
    burn_in: int = 2000
    thinning: int = 500
    init: State | str = "prior"
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 0:
            raise ValueError("n_samples must be >= 0")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if isinstance(self.init, str) and self.init != "prior":
            raise ValueError("init must be a State or the string 'prior'")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit nonnegative integer")


@dataclass
class Trace:
    """Kept samples plus full reproducibility metadata.

    thetas and momenta are (n_samples, d); steps holds the global step index
    each sample was taken at and times its simulated time.
    """

    thetas: np.ndarray
    momenta: np.ndarray
    steps: np.ndarray
    times: np.ndarray
    meta: dict
    effective_time: float

    @property
    def n_samples(self) -> int:
        return self.thetas.shape[0]

    @property
    def dim(self) -> int:
        return self.thetas.shape[1]

    def states(self) -> list[State]:
        return [State(r=self.momenta[i], theta=self.thetas[i])
                for i in range(self.n_samples)]


def _step_duration(spec: IntegratorSpec) -> float:
    # one LIE_TROTTER/HMC step advances n_inner leapfrogs of size eta
    mult = spec.n_inner if spec.scheme in _MULTI_TIME else 1
    return spec.eta * mult


def _initial_state(P: Potential, spec: IntegratorSpec, cfg: ChainConfig,
                   chain_index: int) -> State:
    if isinstance(cfg.init, State):
        if cfg.init.dim != P.dim:
            raise ValueError("initial state dimension does not match potential")
        return cfg.init
    rng = RngStream(cfg.seed, 4 * chain_index + 1)
    theta = P.sample_prior(rng)
    r = spec.mass.sqrt_diag * rng.normal(P.dim)
    return State(r=r, theta=theta)


def _providers(P: Potential, sched: BatchSchedule):
    """Per-batch gradient and Hessian-vector closures with the K rescale baked in."""
    grads: dict = {None: lambda th: P.gradient(th, None)}
    hesses: dict = {None: lambda th, v: P.hessian_vec(th, v, None)}
    K = float(sched.n_batches)

    def make(b):
        def g(th, _b=b):
            return K * P.gradient(th, _b)

        def h(th, v, _b=b):
            return K * P.hessian_vec(th, v, _b)

        return g, h

    for b in range(sched.n_batches):
        grads[b], hesses[b] = make(b)
    return grads, hesses


def run_chain(P: Potential, spec: IntegratorSpec, sched: BatchSchedule,
              cfg: ChainConfig, chain_index: int = 0) -> Trace:
    """Run one chain; deterministic given (cfg.seed, chain_index).

    Raises DivergenceError (with step index and the samples kept so far
    attached as `partial`) if the state leaves the finite range.
    """
    if spec.eta <= 0:
        raise ValueError("running a chain requires eta > 0")
    if P.dim != spec.mass.dim:
        raise ValueError("potential and mass matrix dimensions differ")
    if sched.mode.value != "full" and sched.n_batches != P.n_batches:
        raise ValueError("schedule and potential disagree on the batch count")

    t0 = time.perf_counter()
    z0 = _initial_state(P, spec, cfg, chain_index)
    rng = RngStream(cfg.seed, 4 * chain_index)
    stepper = compile_step(spec)
    grads, hesses = _providers(P, sched)

    d = P.dim
    n = cfg.n_samples
    thetas = np.empty((n, d))
    momenta = np.empty((n, d))
    steps = np.empty(n, dtype=np.int64)
    dt = _step_duration(spec)
    total_steps = cfg.burn_in + n * cfg.thinning

    r, th = z0.r.copy(), z0.theta.copy()
    kept = 0
    for i in range(1, total_steps + 1):
        batch, _scale = sched.next()
        r, th = stepper(r, th, grads[batch], hesses[batch], rng)
        if not np.isfinite(float(np.sum(r)) + float(np.sum(th))):
            err = DivergenceError(
                "chain diverged", r=r, theta=th, step_index=i, eta=spec.eta,
                scheme=spec.scheme,
            )
            err.partial = (thetas[:kept].copy(), momenta[:kept].copy())
            raise err
        if i > cfg.burn_in and (i - cfg.burn_in) % cfg.thinning == 0:
            thetas[kept] = th
            momenta[kept] = r
            steps[kept] = i
            kept += 1

    meta = {
        "scheme": spec.scheme.value,
        "eta": spec.eta,
        "friction": spec.friction,
        "n_inner": spec.n_inner,
        "v_hat": spec.v_hat,
        "mode": sched.mode.value,
        "K": sched.n_batches,
        "n_samples": n,
        "burn_in": cfg.burn_in,
        "thinning": cfg.thinning,
        "seed": cfg.seed,
        "chain_index": chain_index,
        "dim": d,
        "wall_time_s": time.perf_counter() - t0,
    }
    return Trace(
        thetas=thetas,
        momenta=momenta,
        steps=steps,
        times=steps.astype(float) * dt,
        meta=meta,
        effective_time=total_steps * dt,
    )


def ergodic_average(trace: Trace, phi: Callable[[State], float]) -> float:
    """Arithmetic mean of phi over the kept states."""
    if trace.n_samples == 0:
        raise ValueError("ergodic average of an empty trace")
    total = 0.0
    for i in range(trace.n_samples):
        total += float(phi(State(r=trace.momenta[i], theta=trace.thetas[i])))
    return total / trace.n_samples


def acf1(trace: Trace, coord: int = 0, which: str = "theta") -> float:
    """Lag-1 sample autocorrelation of one coordinate of the kept samples."""
    if which not in ("theta", "r"):
        raise ValueError("which must be 'theta' or 'r'")
    series = (trace.thetas if which == "theta" else trace.momenta)[:, coord]
    if series.size < 3:
        raise ValueError("need at least 3 samples for acf1")
    x = series - series.mean()
    denom = float(np.dot(x, x))
    if denom == 0.0:
        raise ValueError("constant series has no autocorrelation")
    return float(np.dot(x[:-1], x[1:]) / denom)


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def save_trace(trace: Trace, csv_path, meta_path=None) -> None:
    """Write the kept samples as CSV and the metadata as key = value lines.

    The CSV contains no wall-clock fields, so reruns with the same seed are
    byte-identical; wall time lives only in the metadata file.
    """
    d = trace.dim
    header = (
        ["step", "time"]
        + [f"theta_{j}" for j in range(d)]
        + [f"r_{j}" for j in range(d)]
    )
    lines = [",".join(header)]
    for i in range(trace.n_samples):
        row = [str(int(trace.steps[i])), _fmt(trace.times[i])]
        row += [_fmt(v) for v in trace.thetas[i]]
        row += [_fmt(v) for v in trace.momenta[i]]
        lines.append(",".join(row))
    with open(csv_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    if meta_path is not None:
        keys = sorted(trace.meta)
        with open(meta_path, "w") as fh:
            for k in keys:
                fh.write(f"{k} = {trace.meta[k]}\n")
            fh.write(f"effective_time = {_fmt(trace.effective_time)}\n")
