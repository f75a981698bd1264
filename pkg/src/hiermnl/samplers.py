"""MCMC kernels: univariate slice sampling, conjugate Gibbs precision
updates, and Hamiltonian Monte Carlo with a leapfrog integrator.

Every kernel takes an explicit ``numpy.random.Generator``; chains derive
theirs from an :class:`RngStream`, so a fixed (seed, stream id, call
sequence) always reproduces the same draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from hiermnl.models import GammaPrior

__all__ = [
    "SliceConfig",
    "HmcConfig",
    "RngStream",
    "slice_update",
    "gibbs_precision_update",
    "slice_precision_update",
    "leapfrog",
    "hmc_update",
]


@dataclass(frozen=True)
class SliceConfig:
    """Tuning for the univariate slice sampler.

    ``w`` is the initial bracket width in target-scale units and
    ``max_step_out`` caps how many width-w expansions the stepping-out
    procedure may spend in total (shared randomly between the two ends).
    """

    w: float = 1.0
    max_step_out: int = 32

    def __post_init__(self):
        if not self.w > 0:
            raise ValueError("slice width w must be positive")
        if self.max_step_out < 1:
            raise ValueError("max_step_out must be at least 1")


@dataclass(frozen=True)
class HmcConfig:
    """Hamiltonian update tuning: L leapfrog steps of size epsilon."""

    leapfrog_steps: int
    step_size: float

    def __post_init__(self):
        if self.leapfrog_steps < 1:
            raise ValueError("need at least one leapfrog step")
        if not self.step_size > 0:
            raise ValueError("step size must be positive")


@dataclass(frozen=True)
class RngStream:
    """Named random stream: a 64-bit seed plus a hierarchical stream id.

    Identical (seed, stream) pairs yield generators producing identical
    draw sequences; distinct stream ids yield statistically independent
    streams. ``child`` appends components to the id, which lets a run
    hand out per-replication, per-chain, and per-node streams whose draws
    do not depend on scheduling order.
    """

    seed: int
    stream: tuple[int, ...] = ()

    def __post_init__(self):
        if any(s < 0 for s in self.stream):
            raise ValueError("stream id components must be non-negative")

    def child(self, *key: int) -> "RngStream":
        return RngStream(self.seed, self.stream + tuple(int(k) for k in key))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=self.stream)
        return np.random.default_rng(seq)


# ---------------------------------------------------------------------------
# Slice sampling
# ---------------------------------------------------------------------------


def slice_update(x0: float, log_density, cfg: SliceConfig, rng: np.random.Generator) -> float:
    """One univariate slice-sampling update.

    Draws the slice level below log_density(x0), finds a bracket around
    x0 by stepping out in units of cfg.w (the expansion budget is split
    randomly between the two ends), then samples uniformly from the
    bracket, shrinking it toward x0 on every rejection. Leaves the target
    distribution invariant.
    """
    x1, _ = _slice_update_with_level(x0, log_density, cfg, rng)
    return x1


def _slice_update_with_level(x0, log_density, cfg, rng):
    logf0 = float(log_density(x0))
    if not math.isfinite(logf0):
        raise ValueError(f"log density is not finite at the current point ({logf0})")
    level = logf0 - rng.exponential(1.0)

    # Stepping out. The budget split follows the randomized allocation
    # that keeps the transition reversible.
    left = x0 - cfg.w * rng.uniform()
    right = left + cfg.w
    budget_left = int(rng.integers(0, cfg.max_step_out))
    budget_right = (cfg.max_step_out - 1) - budget_left
    while budget_left > 0 and log_density(left) > level:
        left -= cfg.w
        budget_left -= 1
    while budget_right > 0 and log_density(right) > level:
        right += cfg.w
        budget_right -= 1

    # Shrinkage: sample the bracket, pulling the rejected end toward x0.
    while True:
        x1 = left + rng.uniform() * (right - left)
        if log_density(x1) > level:
            return x1, level
        if x1 < x0:
            left = x1
        else:
            right = x1
        if right - left < 1e-300:
            raise RuntimeError(
                "slice bracket collapsed to zero width; the target looks pathological"
            )


def gibbs_precision_update(values, prior: GammaPrior, rng: np.random.Generator) -> float:
    """Conjugate draw of a normal sd whose precision has a Gamma prior.

    ``values`` are the zero-mean normal variates governed by the sd tau.
    With tau^-2 ~ Gamma(a, b) in scale form, the full conditional of the
    precision is Gamma(a + k/2, b') where 1/b' = 1/b + (sum of squares)/2
    and k is the number of values. Returns the implied sd tau.

    An empty ``values`` list degenerates to a draw from the prior.
    """
    values = np.asarray(values, dtype=float).ravel()
    if values.size and not np.all(np.isfinite(values)):
        raise ValueError("non-finite values passed to precision update")
    shape = prior.a + 0.5 * values.size
    inv_scale = 1.0 / prior.b + 0.5 * float(values @ values)
    lam = rng.gamma(shape, 1.0 / inv_scale)
    return float(lam) ** -0.5


def slice_precision_update(
    tau: float,
    values,
    prior: GammaPrior,
    cfg: SliceConfig,
    rng: np.random.Generator,
) -> float:
    """Slice-sampling counterpart of :func:`gibbs_precision_update`.

    Targets the same full conditional but by a slice update on log(tau),
    which stays valid when conjugacy is broken elsewhere in the model.
    ``values`` must already be expressed per unit tau (divide out any
    other scale factors first).
    """
    values = np.asarray(values, dtype=float).ravel()
    k = values.size
    coef = 1.0 / prior.b + 0.5 * float(values @ values)
    slope = 2.0 * prior.a + k

    def logf(u):
        # density of u = log(tau): -(2a + k) u - exp(-2u) * coef
        e = -2.0 * u
        if e > 700.0:
            return -math.inf
        return -slope * u - math.exp(e) * coef

    u1 = slice_update(math.log(tau), logf, cfg, rng)
    return math.exp(u1)


# ---------------------------------------------------------------------------
# Hamiltonian Monte Carlo
# ---------------------------------------------------------------------------


def leapfrog(q, p, step_size, n_steps: int, logpost_and_grad):
    """Integrate Hamiltonian dynamics for n_steps leapfrog steps.

    The potential is the negative log posterior, so momenta are kicked by
    +step_size * gradient. ``step_size`` may be a scalar or a
    per-coordinate array. Returns (q, p, log_posterior at q). Raises
    ValueError if the trajectory leaves the finite range.
    """
    q = np.asarray(q, dtype=float).copy()
    lp, grad = logpost_and_grad(q)
    p = np.asarray(p, dtype=float) + 0.5 * step_size * grad
    for step in range(n_steps):
        q += step_size * p
        lp, grad = logpost_and_grad(q)
        if not (np.isfinite(lp) and np.all(np.isfinite(grad))):
            raise ValueError("non-finite log posterior inside trajectory")
        if step < n_steps - 1:
            p += step_size * grad
    p += 0.5 * step_size * grad
    return q, p, lp


def hmc_update(q0, logpost_and_grad, cfg: HmcConfig, rng: np.random.Generator, step_scale=None):
    """One Hamiltonian Monte Carlo update.

    Draws an isotropic unit-mass momentum, integrates cfg.leapfrog_steps
    steps of size cfg.step_size, and accepts or rejects on the change in
    total energy. ``step_scale``, when given, multiplies the stepsize
    per coordinate (cfg.step_size then acts as a global adjustment
    factor); it must not depend on the position being updated. A
    trajectory that overflows mid-flight counts as a rejection rather
    than an error. Returns (new position, accepted).
    """
    q0 = np.asarray(q0, dtype=float)
    lp0, _ = logpost_and_grad(q0)
    if not np.isfinite(lp0):
        raise ValueError("log posterior is not finite at the current position")
    step = cfg.step_size
    if step_scale is not None:
        scale = np.asarray(step_scale, dtype=float)
        if scale.shape != q0.shape or np.any(scale <= 0) or not np.all(np.isfinite(scale)):
            raise ValueError("step_scale must be positive, finite, and match the position shape")
        step = step * scale
    p0 = rng.standard_normal(q0.shape)
    energy0 = -float(lp0) + 0.5 * float(p0 @ p0)
    try:
        q1, p1, lp1 = leapfrog(q0, p0, step, cfg.leapfrog_steps, logpost_and_grad)
    except (ValueError, FloatingPointError, OverflowError):
        return q0.copy(), False
    energy1 = -float(lp1) + 0.5 * float(p1 @ p1)
    if not math.isfinite(energy1):
        return q0.copy(), False
    if math.log(rng.uniform()) < energy0 - energy1:
        return q1, True
    return q0.copy(), False
