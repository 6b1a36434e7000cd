"""Sigma curves, m-sigma relations and the SDE coefficients they induce.

A schedule is fully described by a sigma curve sigma(t) on [0, 1] and a
relation m = (1 - sigma**gamma)**eta (or m = 1 for the variance exploding
family). Everything a sampler needs (f, beta, g, SNR) follows in closed form.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
import logging
import math
from typing import Protocol

import numpy as np
import pandas as pd

from .errors import DomainError, RangeError, SingularityError

logger = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-4
BISECTION_TOL = 1e-10
SNR_INFINITE = math.inf

CURVE_KINDS = ("cos", "exp")
NAMED_RELATIONS = {
    "vp": (2.0, 0.5),
    "subvp": (1.0, 0.5),
    "subvp11": (1.0, 1.0),
    "subvp12": (1.0, 2.0),
}
RELATION_VARIANTS = (*NAMED_RELATIONS, "ve", "custom")


class Curve(Protocol):
    def sigma(self, t) -> np.ndarray: ...

    def dsigma(self, t) -> np.ndarray: ...

    def sigma_dsigma(self, t) -> np.ndarray: ...


@dataclass(frozen=True)
class SigmaCurve:
    """sigma(t) with its analytic derivative.

    cos: sigma = (1 - cos((1 - s) pi t)) / 2, evaluated as sin^2 to avoid
    cancellation near t = 0.
    exp: sigma = sqrt(1 - exp(-a t - b t^2)).
    """

    kind: str = "cos"
    s: float = 0.006
    a: float = 0.1
    b: float = 9.95

    def __post_init__(self) -> None:
        if self.kind not in CURVE_KINDS:
            raise DomainError(f"unknown sigma curve {self.kind!r}; expected one of {CURVE_KINDS}")
        if self.kind == "cos" and not 0.0 <= self.s < 1.0:
            raise DomainError(f"cos curve shift s must lie in [0, 1), got {self.s}")
        if self.kind == "exp" and (self.a < 0.0 or self.b < 0.0 or self.a + self.b <= 0.0):
            raise DomainError(f"exp curve needs a, b >= 0 with a + b > 0, got a={self.a}, b={self.b}")

    def sigma(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "cos":
            return np.sin(0.5 * (1.0 - self.s) * np.pi * t) ** 2
        return np.sqrt(-np.expm1(-(self.a * t + self.b * t * t)))

    def dsigma(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "cos":
            w = (1.0 - self.s) * np.pi
            return 0.5 * w * np.sin(w * t)
        # infinite at t = 0 (square-root onset)
        with np.errstate(divide="ignore"):
            return self.sigma_dsigma(t) / self.sigma(t)

    def sigma_dsigma(self, t) -> np.ndarray:
        """sigma * sigma', finite everywhere on [0, 1] for both kinds."""
        t = np.asarray(t, dtype=float)
        if self.kind == "cos":
            return self.sigma(t) * self.dsigma(t)
        return 0.5 * (self.a + 2.0 * self.b * t) * np.exp(-(self.a * t + self.b * t * t))


@dataclass(frozen=True)
class MSigmaRelation:
    variant: str = "vp"
    gamma: float = 2.0
    eta: float = 0.5

    def __post_init__(self) -> None:
        if self.variant not in RELATION_VARIANTS:
            raise DomainError(
                f"unknown relation {self.variant!r}; expected one of {RELATION_VARIANTS}"
            )
        if self.variant in NAMED_RELATIONS and (self.gamma, self.eta) != NAMED_RELATIONS[self.variant]:
            raise DomainError(
                f"relation {self.variant!r} fixes (gamma, eta) = {NAMED_RELATIONS[self.variant]}"
            )
        if not self.is_ve and (self.gamma <= 0.0 or self.eta <= 0.0):
            raise DomainError(f"gamma and eta must be positive, got {self.gamma}, {self.eta}")

    @classmethod
    def from_name(
        cls, name: str, gamma: float | None = None, eta: float | None = None
    ) -> "MSigmaRelation":
        name = name.strip().lower()
        if name in NAMED_RELATIONS:
            return cls(name, *NAMED_RELATIONS[name])
        if name == "ve":
            return cls("ve", 0.0, 0.0)
        if name == "custom":
            if gamma is None or eta is None:
                raise DomainError("custom relation needs both gamma and eta")
            return cls("custom", float(gamma), float(eta))
        raise DomainError(f"unknown relation {name!r}; expected one of {RELATION_VARIANTS}")

    @property
    def is_ve(self) -> bool:
        return self.variant == "ve"

    def m_of_sigma(self, sigma) -> np.ndarray:
        sigma = np.asarray(sigma, dtype=float)
        if self.is_ve:
            return np.ones_like(sigma)
        sg = sigma ** self.gamma
        if np.any(sg >= 1.0):
            raise SingularityError(f"sigma**gamma >= 1 (max sigma {float(np.max(sigma)):.6g})")
        return (1.0 - sg) ** self.eta


@dataclass(frozen=True)
class Coeffs:
    """SDE coefficients at t. Fields are floats from `coeffs`, arrays from `evaluate`."""

    t: float | np.ndarray
    sigma: float | np.ndarray
    dsigma_dt: float | np.ndarray
    m: float | np.ndarray
    f: float | np.ndarray
    beta: float | np.ndarray
    g: float | np.ndarray
    snr: float | np.ndarray

    def as_floats(self) -> "Coeffs":
        return Coeffs(**{f.name: float(getattr(self, f.name)) for f in fields(self)})


def _beta_at_origin(curve: Curve, relation: MSigmaRelation) -> float:
    # limit of 2 eta gamma sigma' sigma**(gamma - 1) as sigma -> 0
    ds0 = float(curve.dsigma(0.0))
    if ds0 == 0.0 or relation.gamma > 2.0:
        return 0.0
    if relation.gamma == 2.0:
        return 2.0 * relation.eta * relation.gamma * float(curve.sigma_dsigma(0.0))
    return math.inf


def coefficients_for(curve: Curve, relation: MSigmaRelation, t) -> Coeffs:
    """Vectorized coefficients for any curve/relation pair (no range checks on t)."""
    t = np.asarray(t, dtype=float)
    sigma = curve.sigma(t)
    dsigma = curve.dsigma(t)
    ss = curve.sigma_dsigma(t)

    if relation.is_ve:
        m = np.ones_like(sigma)
        beta = np.zeros_like(sigma)
        g = np.sqrt(2.0 * ss)
    else:
        gamma, eta = relation.gamma, relation.eta
        sg = sigma ** gamma
        if np.any(sg >= 1.0):
            bad = np.atleast_1d(t)[np.atleast_1d(sg >= 1.0)]
            raise SingularityError(f"sigma**gamma >= 1 at t={float(bad[0]):.6g}")
        rest = 1.0 - sg
        m = rest ** eta
        positive = sigma > 0.0
        origin = _beta_at_origin(curve, relation) if not np.all(positive) else 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            beta = np.where(positive, 2.0 * eta * gamma * ss * sigma ** (gamma - 2.0) / rest, origin)
        g = np.sqrt(2.0 * ss * (gamma * eta * sg / rest + 1.0))

    with np.errstate(divide="ignore"):
        snr = np.where(sigma > 0.0, m * m / (sigma * sigma), SNR_INFINITE)
    return Coeffs(t=t, sigma=sigma, dsigma_dt=dsigma, m=m, f=-0.5 * beta, beta=beta, g=g, snr=snr)


@dataclass(frozen=True)
class Schedule:
    curve: SigmaCurve = field(default_factory=SigmaCurve)
    relation: MSigmaRelation = field(default_factory=MSigmaRelation)
    T: float = 1.0
    t_min: float = field(init=False, default=0.0)

    def __post_init__(self) -> None:
        if self.T != 1.0:
            raise DomainError("only the horizon T = 1 is supported")
        object.__setattr__(self, "t_min", solve_time_for_sigma(self, SIGMA_FLOOR))

    def sigma(self, t) -> np.ndarray:
        return self.curve.sigma(t)

    def m(self, t) -> np.ndarray:
        return self.relation.m_of_sigma(self.curve.sigma(t))

    def describe(self) -> str:
        rel = self.relation
        shape = f"{rel.variant}" if rel.is_ve else f"{rel.variant}(gamma={rel.gamma:g}, eta={rel.eta:g})"
        return f"{self.curve.kind} curve, {shape}, t_min={self.t_min:.6g}"


def _check_times(t: np.ndarray, T: float) -> None:
    if np.any(~np.isfinite(t)) or np.any(t < 0.0) or np.any(t > T):
        raise DomainError(f"time must lie in [0, {T:g}]")


def evaluate(schedule: Schedule, t) -> Coeffs:
    t = np.asarray(t, dtype=float)
    _check_times(t, schedule.T)
    return coefficients_for(schedule.curve, schedule.relation, t)


def coeffs(schedule: Schedule, t: float) -> Coeffs:
    return evaluate(schedule, float(t)).as_floats()


def solve_time_for_sigma(schedule: Schedule, target: float) -> float:
    """Bisection for t with |sigma(t) - target| <= 1e-10 (sigma is increasing)."""
    curve = schedule.curve
    top = float(curve.sigma(schedule.T))
    if not 0.0 <= target < top:
        raise RangeError(f"sigma target {target} outside [0, sigma(1)={top:.10g})")
    if target == 0.0:
        return 0.0
    lo, hi = 0.0, schedule.T
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        value = float(curve.sigma(mid))
        if abs(value - target) <= BISECTION_TOL:
            return mid
        if value < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def beta_integral(schedule: Schedule, t):
    """Integral of beta over [0, t], closed form -2 ln m(t)."""
    t = np.asarray(t, dtype=float)
    _check_times(t, schedule.T)
    rel = schedule.relation
    if rel.is_ve:
        out = np.zeros_like(t)
    else:
        out = -2.0 * rel.eta * np.log1p(-schedule.curve.sigma(t) ** rel.gamma)
    return float(out) if out.ndim == 0 else out


def g_from_beta_integral(schedule: Schedule, t):
    """g written through beta and its integral (the generalized sub-VP form).

    VP reduces to sqrt(beta), sub-VP to sqrt(beta (1 - exp(-2 int beta))).
    """
    t = np.asarray(t, dtype=float)
    c = evaluate(schedule, t)
    rel = schedule.relation
    if rel.is_ve:
        out = np.sqrt(2.0 * schedule.curve.sigma_dsigma(t))
    else:
        gamma, eta = rel.gamma, rel.eta
        decay = -np.asarray(beta_integral(schedule, t)) / (2.0 * eta)
        e = np.exp(decay)
        base = -np.expm1(decay)
        with np.errstate(divide="ignore", invalid="ignore"):
            g2 = c.beta * (base ** (2.0 / gamma) + e * base ** (2.0 / gamma - 1.0) / (gamma * eta))
        out = np.sqrt(g2)
    return float(out) if out.ndim == 0 else out


@dataclass
class ValidationReport:
    table: pd.DataFrame
    max_residuals: dict
    tolerance: float
    algebraic_tolerance: float
    passed: bool

    def summary_lines(self) -> list[str]:
        lines = [f"grid points: {len(self.table)}"]
        for name, value in self.max_residuals.items():
            limit = self.algebraic_tolerance if name == "algebraic" else self.tolerance
            flag = "ok" if value < limit else "FAIL"
            lines.append(f"max residual {name}: {value:.3e} (< {limit:g}) {flag}")
        lines.append("PASS" if self.passed else "FAIL")
        return lines


def validate(
    schedule: Schedule,
    grid_size: int = 256,
    step: float = 1e-5,
    tolerance: float = 1e-3,
    algebraic_tolerance: float = 1e-9,
) -> ValidationReport:
    """Check the m/sigma system and the g/m identity on a uniform grid.

    Residuals are |lhs - rhs| / (1 + |analytic side|); derivatives are central
    differences with step min(step, 1e-3 t).
    """
    if grid_size < 16:
        raise DomainError(f"grid_size must be >= 16, got {grid_size}")
    t = np.linspace(schedule.t_min, 1.0 - 1.0 / grid_size, grid_size)
    h = np.minimum(step, 1e-3 * t)
    c = evaluate(schedule, t)
    up = evaluate(schedule, t + h)
    down = evaluate(schedule, t - h)

    dm = (up.m - down.m) / (2.0 * h)
    dsigma2 = (up.sigma ** 2 - down.sigma ** 2) / (2.0 * h)
    dratio = ((up.sigma / up.m) ** 2 - (down.sigma / down.m) ** 2) / (2.0 * h)

    fm = c.f * c.m
    residual_a = np.abs(dm - fm) / (1.0 + np.abs(fm))
    rhs_b = 2.0 * c.f * c.sigma ** 2 + c.g ** 2
    residual_b = np.abs(dsigma2 - rhs_b) / (1.0 + np.abs(rhs_b))
    g_over_m = c.g / c.m
    residual_c = np.abs(g_over_m - np.sqrt(np.maximum(dratio, 0.0))) / (1.0 + g_over_m)
    algebraic = np.abs(c.g - g_from_beta_integral(schedule, t)) / (1.0 + c.g)

    table = pd.DataFrame(
        {
            "t": t,
            "sigma": c.sigma,
            "m": c.m,
            "f": c.f,
            "beta": c.beta,
            "g": c.g,
            "snr": c.snr,
            "residual_a": residual_a,
            "residual_b": residual_b,
            "residual_c": residual_c,
        }
    )
    max_residuals = {
        "a": float(residual_a.max()),
        "b": float(residual_b.max()),
        "c": float(residual_c.max()),
        "algebraic": float(algebraic.max()),
    }
    passed = (
        max(max_residuals["a"], max_residuals["b"], max_residuals["c"]) < tolerance
        and max_residuals["algebraic"] < algebraic_tolerance
    )
    logger.info("validated %s: %s", schedule.describe(), "pass" if passed else "fail")
    return ValidationReport(table, max_residuals, tolerance, algebraic_tolerance, passed)


@dataclass(frozen=True)
class AffineLogSnrCurve:
    """sigma(t) for which log(sigma^2 / m^2) = a t + b under `relation`.

    sigma is found by bisection on the monotone map sigma -> log(sigma^2/m^2);
    sigma' follows from differentiating that constraint.
    """

    a: float
    b: float
    relation: MSigmaRelation = field(default_factory=MSigmaRelation)
    kind: str = "logsnr"

    def _log_ratio(self, sigma: np.ndarray) -> np.ndarray:
        rel = self.relation
        with np.errstate(divide="ignore"):
            return 2.0 * np.log(sigma) - 2.0 * rel.eta * np.log1p(-sigma ** rel.gamma)

    def sigma(self, t) -> np.ndarray:
        target = self.a * np.asarray(t, dtype=float) + self.b
        if self.relation.is_ve:
            return np.exp(0.5 * target)
        lo = np.zeros_like(target)
        hi = np.ones_like(target)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            below = self._log_ratio(mid) < target
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    def dsigma(self, t) -> np.ndarray:
        sigma = self.sigma(t)
        rel = self.relation
        if rel.is_ve:
            return 0.5 * self.a * sigma
        sg = sigma ** rel.gamma
        slope = 2.0 / sigma + 2.0 * rel.eta * rel.gamma * sigma ** (rel.gamma - 1.0) / (1.0 - sg)
        return self.a / slope

    def sigma_dsigma(self, t) -> np.ndarray:
        return self.sigma(t) * self.dsigma(t)
