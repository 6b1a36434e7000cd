"""Generation, encoding and editing procedures driven by an eps-function.

An eps-function maps (x, sigma) to an estimate of the standardized noise in x;
x is an (n, d) batch (or a single d-vector) and sigma a float. The same
function can be the exact mixture oracle, a trained network, or either of
them wrapped with classifier guidance.

Chain samplers walk the uniform grid t_i = t_end * i / N from i = N down to
0, evaluating coefficients at the current point t_{i+1}. Random draws follow
one order for every method: the initial latent, then one Gaussian draw per
noisy step.
"""
from __future__ import annotations

from dataclasses import dataclass
import logging
import math
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, DomainError, RadicandError, StepSizeError
from .kernel import perturb
from .schedules import Schedule, coeffs, evaluate

logger = logging.getLogger(__name__)

EpsFn = Callable[[np.ndarray, float], np.ndarray]
GradFn = Callable[[np.ndarray, float, int], np.ndarray]

METHODS = ("sde", "ode", "ddim", "reparam_sde", "rk45")
CHAIN_METHODS = ("sde", "ode", "ddim", "reparam_sde")
COMBINE_RULES = ("spherical", "linear")
RADICAND_SLACK = 1e-12
MIN_STEP = 1e-12


@dataclass(frozen=True)
class SamplerConfig:
    schedule: Schedule
    method: str = "sde"
    steps: int = 400
    rtol: float = 1e-5
    atol: float = 1e-5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise DomainError(f"unknown sampler method {self.method!r}; expected one of {METHODS}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise DomainError(f"steps must be an integer >= 1, got {self.steps}")
        if self.rtol <= 0.0 or self.atol <= 0.0:
            raise DomainError("rk45 tolerances must be positive")


@dataclass(frozen=True)
class GuidanceSpec:
    """Class-mixing guidance: weights lambda_i over labels y_i."""

    grad_fn: GradFn
    labels: tuple[int, ...]
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        labels = tuple(int(y) for y in self.labels)
        weights = tuple(float(w) for w in self.weights)
        if len(labels) != len(weights) or not labels:
            raise DomainError("guidance needs one weight per label")
        if any(w < 0.0 for w in weights) or abs(math.fsum(weights) - 1.0) > 1e-12:
            raise DomainError(f"guidance weights must be >= 0 and sum to 1, got {weights}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "weights", weights)


@dataclass(frozen=True)
class InpaintSpec:
    mask: np.ndarray
    x_fixed: np.ndarray

    def __post_init__(self) -> None:
        mask = np.asarray(self.mask, dtype=float)
        x_fixed = np.asarray(self.x_fixed, dtype=float)
        if mask.shape != x_fixed.shape:
            raise DimensionError(f"mask shape {mask.shape} does not match reference shape {x_fixed.shape}")
        if not np.all((mask == 0.0) | (mask == 1.0)):
            raise DimensionError("mask entries must be 0 or 1")
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "x_fixed", x_fixed)


def time_grid(steps: int, t_end: float = 1.0) -> np.ndarray:
    return t_end * np.arange(steps + 1) / steps


def initial_latent(schedule: Schedule, shape, rng: np.random.Generator) -> np.ndarray:
    return float(schedule.sigma(1.0)) * rng.standard_normal(shape)


def ddim_update(x, eps, m_prev: float, m_cur: float, sigma_prev: float, sigma_cur: float) -> np.ndarray:
    """One deterministic step from (m_cur, sigma_cur) to (m_prev, sigma_prev)."""
    ratio = m_prev / m_cur
    return ratio * x + (sigma_prev - sigma_cur * ratio) * eps


def _check_shape(x: np.ndarray, eps: np.ndarray) -> np.ndarray:
    if eps.shape != x.shape:
        raise DimensionError(f"eps-function returned shape {eps.shape} for input {x.shape}")
    return eps


def run_chain(
    eps_fn: EpsFn,
    schedule: Schedule,
    method: str,
    x: np.ndarray,
    steps: int,
    rng: np.random.Generator,
    t_end: float = 1.0,
    after_step: Callable[[int, np.ndarray], np.ndarray] | None = None,
) -> np.ndarray:
    """Run a chain sampler from t_end down to 0 starting at x."""
    if method not in CHAIN_METHODS:
        raise DomainError(f"{method!r} is not a fixed-step method")
    grid = time_grid(steps, t_end)
    c = evaluate(schedule, grid)
    dt = np.diff(grid)
    clamped = 0
    x = np.array(x, dtype=float)
    for i in range(steps - 1, -1, -1):
        j = i + 1
        sigma_j = float(c.sigma[j])
        eps = _check_shape(x, np.asarray(eps_fn(x, sigma_j), dtype=float))
        if method == "sde":
            x = (1.0 - c.f[j] * dt[i]) * x - (c.g[j] ** 2 * dt[i] / sigma_j) * eps
            if i > 0:
                x = x + c.g[j] * math.sqrt(dt[i]) * rng.standard_normal(x.shape)
        elif method == "ode":
            x = (1.0 - c.f[j] * dt[i]) * x - (c.g[j] ** 2 * dt[i] / (2.0 * sigma_j)) * eps
        elif method == "ddim":
            x = ddim_update(x, eps, c.m[i], c.m[j], c.sigma[i], sigma_j)
        else:
            ratio = c.m[i] / c.m[j]
            x = ratio * x + 2.0 * (c.sigma[i] - sigma_j * ratio) * eps
            if i > 0:
                radicand = (sigma_j * ratio) ** 2 - c.sigma[i] ** 2
                if radicand < 0.0:
                    if radicand < -RADICAND_SLACK:
                        raise RadicandError(f"negative radicand {radicand:.3e} at t={grid[j]:.6g}")
                    radicand = 0.0
                    clamped += 1
                x = x + math.sqrt(radicand) * rng.standard_normal(x.shape)
        if after_step is not None:
            x = after_step(i, x)
    if clamped:
        logger.warning("clamped %d slightly negative radicands to zero", clamped)
    return x


def _start(schedule: Schedule, shape, rng, x_init) -> np.ndarray:
    if x_init is not None:
        return np.array(x_init, dtype=float)
    return initial_latent(schedule, shape, rng)


def sample_sde(eps_fn: EpsFn, cfg: SamplerConfig, rng, shape, x_init=None) -> np.ndarray:
    x = _start(cfg.schedule, shape, rng, x_init)
    return run_chain(eps_fn, cfg.schedule, "sde", x, cfg.steps, rng)


def sample_ode(eps_fn: EpsFn, cfg: SamplerConfig, rng, shape, x_init=None) -> np.ndarray:
    x = _start(cfg.schedule, shape, rng, x_init)
    return run_chain(eps_fn, cfg.schedule, "ode", x, cfg.steps, rng)


def sample_ddim(eps_fn: EpsFn, cfg: SamplerConfig, rng, shape, x_init=None) -> np.ndarray:
    x = _start(cfg.schedule, shape, rng, x_init)
    return run_chain(eps_fn, cfg.schedule, "ddim", x, cfg.steps, rng)


def sample_reparam_sde(eps_fn: EpsFn, cfg: SamplerConfig, rng, shape, x_init=None) -> np.ndarray:
    x = _start(cfg.schedule, shape, rng, x_init)
    return run_chain(eps_fn, cfg.schedule, "reparam_sde", x, cfg.steps, rng)


# Dormand-Prince 5(4)
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_E = (
    71 / 57600,
    0.0,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)


def _flow(eps_fn: EpsFn, schedule: Schedule) -> Callable[[float, np.ndarray], np.ndarray]:
    """du/dt for u = x / m, which equals d(sigma/m)/dt times eps."""

    def rhs(t: float, u: np.ndarray) -> np.ndarray:
        c = coeffs(schedule, t)
        rate = (c.dsigma_dt - c.sigma * c.f) / c.m
        return rate * np.asarray(eps_fn(c.m * u, c.sigma), dtype=float)

    return rhs


def integrate_rk45(
    eps_fn: EpsFn,
    schedule: Schedule,
    x_start,
    t_start: float,
    t_end: float,
    rtol: float = 1e-5,
    atol: float = 1e-5,
) -> np.ndarray:
    """Adaptive Dormand-Prince on the probability-flow ODE in u = x / m.

    Works in either direction. A step is accepted when
    max |err| / (atol + rtol * max(|u|, |u_new|)) <= 1 over the whole batch.
    """
    x_start = np.array(x_start, dtype=float)
    for t in (t_start, t_end):
        if not schedule.t_min - 1e-15 <= t <= 1.0:
            raise DomainError(f"integration time {t} outside [t_min={schedule.t_min:.6g}, 1]")
    if t_start == t_end:
        return x_start

    rhs = _flow(eps_fn, schedule)
    u = x_start / coeffs(schedule, t_start).m
    t = t_start
    span = t_end - t_start
    direction = 1.0 if span > 0 else -1.0
    lower, upper = min(t_start, t_end), max(t_start, t_end)
    h = span / 100.0
    k1 = rhs(t, u)
    accepted = rejected = 0

    while direction * (t_end - t) > 0.0:
        if abs(h) < MIN_STEP:
            raise StepSizeError(f"step size {abs(h):.3e} below {MIN_STEP:g} at t={t:.10g}")
        if direction * (t + h - t_end) > 0.0:
            h = t_end - t
        k = [k1]
        for stage in range(1, 7):
            a = _DP_A[stage]
            u_stage = u + h * sum(coef * ki for coef, ki in zip(a, k) if coef != 0.0)
            t_stage = min(max(t + _DP_C[stage] * h, lower), upper)
            k.append(rhs(t_stage, u_stage))
        u_new = u_stage
        err = h * sum(coef * ki for coef, ki in zip(_DP_E, k) if coef != 0.0)
        scale = atol + rtol * np.maximum(np.abs(u), np.abs(u_new))
        norm = float(np.max(np.abs(err) / scale))

        if norm <= 1.0:
            t = t_end if abs(t_end - (t + h)) < MIN_STEP else t + h
            u = u_new
            k1 = k[6]
            accepted += 1
            factor = 5.0 if norm == 0.0 else min(5.0, max(0.2, 0.9 * norm ** -0.2))
        else:
            rejected += 1
            factor = max(0.2, 0.9 * norm ** -0.2)
        h *= factor

    logger.debug(
        "rk45 %.6g -> %.6g: %d accepted, %d rejected steps", t_start, t_end, accepted, rejected
    )
    return coeffs(schedule, t_end).m * u


def encode(eps_fn: EpsFn, schedule: Schedule, x0, rtol: float = 1e-5, atol: float = 1e-5) -> np.ndarray:
    """Forward flow from t_min (x0 taken as noise-free) to the latent at t = 1."""
    return integrate_rk45(eps_fn, schedule, x0, schedule.t_min, 1.0, rtol, atol)


def decode(eps_fn: EpsFn, schedule: Schedule, latent, rtol: float = 1e-5, atol: float = 1e-5) -> np.ndarray:
    return integrate_rk45(eps_fn, schedule, latent, 1.0, schedule.t_min, rtol, atol)


def sample_rk45(eps_fn: EpsFn, cfg: SamplerConfig, rng, shape, x_init=None) -> np.ndarray:
    x = _start(cfg.schedule, shape, rng, x_init)
    return decode(eps_fn, cfg.schedule, x, cfg.rtol, cfg.atol)


_SAMPLERS = {
    "sde": sample_sde,
    "ode": sample_ode,
    "ddim": sample_ddim,
    "reparam_sde": sample_reparam_sde,
    "rk45": sample_rk45,
}


def sample(eps_fn: EpsFn, cfg: SamplerConfig, rng, shape, x_init=None) -> np.ndarray:
    return _SAMPLERS[cfg.method](eps_fn, cfg, rng, shape, x_init)


def inpaint(eps_fn: EpsFn, cfg: SamplerConfig, spec: InpaintSpec, rng, shape=None) -> np.ndarray:
    """Sample while clamping the masked coordinates to a noised copy of x_fixed.

    The overwrite m_i x_fixed + sigma_i z runs after every step, so the final
    step (m = 1, sigma = 0) leaves the masked region equal to x_fixed. Mask
    noise comes from a child stream spawned off `rng`; the step noise stream
    is therefore the one the plain sampler would see.
    """
    if cfg.method not in CHAIN_METHODS:
        raise DomainError(f"inpainting needs a fixed-step method, got {cfg.method!r}")
    shape = tuple(shape) if shape is not None else spec.x_fixed.shape
    if shape[-1:] != spec.x_fixed.shape[-1:]:
        raise DimensionError(f"sample shape {shape} does not match mask dimension {spec.x_fixed.shape}")
    schedule = cfg.schedule
    mask_rng = rng.spawn(1)[0]
    grid = time_grid(cfg.steps)
    c = evaluate(schedule, grid)
    keep = np.broadcast_to(spec.mask, shape) == 1.0

    def overwrite(i: int, x: np.ndarray) -> np.ndarray:
        z = mask_rng.standard_normal(shape)
        return np.where(keep, c.m[i] * spec.x_fixed + c.sigma[i] * z, x)

    x = initial_latent(schedule, shape, rng)
    return run_chain(eps_fn, schedule, cfg.method, x, cfg.steps, rng, after_step=overwrite)


def slerp_latent(eps1, eps2, lam: float) -> np.ndarray:
    """lam * eps1 + sqrt(1 - lam^2) * eps2."""
    eps1 = np.asarray(eps1, dtype=float)
    eps2 = np.asarray(eps2, dtype=float)
    if eps1.shape != eps2.shape:
        raise DimensionError(f"latent shapes differ: {eps1.shape} vs {eps2.shape}")
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"lambda must lie in [0, 1], got {lam}")
    return lam * eps1 + math.sqrt(1.0 - lam * lam) * eps2


def combine(x1, x2, lam: float, rule: str = "spherical") -> np.ndarray:
    if rule == "spherical":
        return slerp_latent(x1, x2, lam)
    if rule == "linear":
        if not 0.0 <= lam <= 1.0:
            raise DomainError(f"lambda must lie in [0, 1], got {lam}")
        return lam * np.asarray(x1, dtype=float) + (1.0 - lam) * np.asarray(x2, dtype=float)
    raise DomainError(f"unknown combination rule {rule!r}; expected one of {COMBINE_RULES}")


def latent_interpolate(
    eps_fn: EpsFn, schedule: Schedule, x1, x2, lam: float, rtol: float = 1e-5, atol: float = 1e-5
) -> np.ndarray:
    """Encode both points, combine the latents spherically, decode."""
    z1 = encode(eps_fn, schedule, x1, rtol, atol)
    z2 = encode(eps_fn, schedule, x2, rtol, atol)
    return decode(eps_fn, schedule, slerp_latent(z1, z2, lam), rtol, atol)


def _partial_steps(steps: int, t_level: float) -> int:
    return max(1, math.ceil(steps * t_level))


def _check_level(schedule: Schedule, t: float, name: str) -> None:
    if not schedule.t_min <= t <= 1.0:
        raise DomainError(f"{name} must lie in [t_min={schedule.t_min:.6g}, 1], got {t}")


def _denoise_from(eps_fn: EpsFn, cfg: SamplerConfig, x: np.ndarray, t_level: float, rng, method: str):
    if method == "rk45":
        if t_level == cfg.schedule.t_min:
            return x
        return integrate_rk45(eps_fn, cfg.schedule, x, t_level, cfg.schedule.t_min, cfg.rtol, cfg.atol)
    return run_chain(eps_fn, cfg.schedule, method, x, _partial_steps(cfg.steps, t_level), rng, t_end=t_level)


def t_indexed_interpolate(
    eps_fn: EpsFn,
    cfg: SamplerConfig,
    x1,
    x2,
    lam: float,
    t_mid: float,
    rng,
    combine_rule: str = "spherical",
    shared_noise: bool = True,
) -> np.ndarray:
    """Corrupt both points to t_mid, combine them, denoise back to t = 0."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape != x2.shape:
        raise DimensionError(f"interpolation endpoints differ in shape: {x1.shape} vs {x2.shape}")
    _check_level(cfg.schedule, t_mid, "t_mid")
    eps1 = rng.standard_normal(x1.shape)
    eps2 = eps1 if shared_noise else rng.standard_normal(x2.shape)
    z1 = perturb(x1, t_mid, eps1, cfg.schedule)
    z2 = perturb(x2, t_mid, eps2, cfg.schedule)
    x = combine(z1, z2, lam, combine_rule)
    return _denoise_from(eps_fn, cfg, x, t_mid, rng, cfg.method)


def variations(eps_fn: EpsFn, cfg: SamplerConfig, x0, t_level: float, rng) -> np.ndarray:
    """Noise x0 up to t_level, then run the reverse SDE back to 0 with ceil(N t_level) steps."""
    x0 = np.asarray(x0, dtype=float)
    _check_level(cfg.schedule, t_level, "t_level")
    x = perturb(x0, t_level, rng.standard_normal(x0.shape), cfg.schedule)
    return _denoise_from(eps_fn, cfg, x, t_level, rng, "sde")


def guided_eps(base: EpsFn, guidance: GuidanceSpec) -> EpsFn:
    """eps_base(x, sigma) - sigma * sum_i lambda_i grad_x log p(y_i | x).

    Labels with zero weight are skipped, so a one-hot mix is the single-class
    guided function exactly.
    """
    terms = [(y, w) for y, w in zip(guidance.labels, guidance.weights) if w != 0.0]

    def eps_fn(x: np.ndarray, sigma: float) -> np.ndarray:
        eps = np.asarray(base(x, sigma), dtype=float)
        if not terms:
            return eps
        pull = sum(w * np.asarray(guidance.grad_fn(x, sigma, y), dtype=float) for y, w in terms)
        return eps - sigma * pull

    return eps_fn


def single_class_guidance(grad_fn: GradFn, label: int, labels: Sequence[int]) -> GuidanceSpec:
    labels = tuple(int(y) for y in labels)
    return GuidanceSpec(grad_fn, labels, tuple(1.0 if y == int(label) else 0.0 for y in labels))
