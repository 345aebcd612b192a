"""Regret-theoretic model of a human driver's lane-change decision.

A driver stuck behind a slower vehicle weighs changing lanes (option C)
against keeping the lane and slowing down (option K). The decision is
computed in closed form from five observable quantities:

    v_s  speed of the blocking leader
    v_c  the deciding vehicle's own speed
    v_f  speed of the vehicle approaching in the target lane
    v_b  the driver's best (desired) speed
    d    gap to the approaching vehicle

All utilities are normalised by the collision cost, so the collision
outcome of option C has utility -1.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields

import numpy as np

MIN_LEADER_SPEED = 0.05  # m/s; a stopped leader belongs to car following


class DomainError(ValueError):
    """Input outside the domain of a model function."""


class SingularInputError(DomainError):
    """Input at which the keep-lane utility is undefined (zero speed)."""


@dataclass(frozen=True)
class RegretParams:
    """The seven driver-specific constants of the decision model."""

    sigma1: float
    sigma2: float
    sigma3: float
    eta1: float  # m^2/s^2
    beta1: float
    beta2: float
    tau_s: float  # s

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise DomainError(f"{f.name} must be finite, got {value}")
        for name in ("sigma1", "sigma2", "sigma3", "eta1", "beta1", "beta2"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.tau_s <= 0:
            raise DomainError(f"tau_s must be > 0, got {self.tau_s}")

    def to_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "RegretParams":
        return cls(**{f.name: float(data[f.name]) for f in fields(cls)})


# Pilot-subject fit used as the shared driver profile for all manual vehicles.
REFERENCE_DRIVER = RegretParams(
    sigma1=10.1795,
    sigma2=0.1130,
    sigma3=0.5108,
    eta1=152.5796,
    beta1=9.9170,
    beta2=2.3812,
    tau_s=3.5193,
)


@dataclass(frozen=True)
class LaneChangeObservation:
    """What the deciding driver sees. ``d = inf`` means no approaching vehicle."""

    v_s: float
    v_c: float
    v_f: float
    v_b: float
    d: float

    def __post_init__(self):
        for name in ("v_s", "v_c", "v_f", "v_b"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise DomainError(f"{name} must be a finite speed >= 0, got {value}")
        if math.isnan(self.d) or self.d < 0:
            raise DomainError(f"d must be >= 0, got {self.d}")
        if self.v_s <= MIN_LEADER_SPEED:
            raise DomainError(f"v_s must exceed {MIN_LEADER_SPEED} m/s, got {self.v_s}")
        if self.v_s > self.v_b:
            raise DomainError(f"v_s ({self.v_s}) must not exceed v_b ({self.v_b})")


class LaneDecision(enum.Enum):
    CHANGE = "C"
    KEEP = "K"

    def flipped(self) -> "LaneDecision":
        return LaneDecision.KEEP if self is LaneDecision.CHANGE else LaneDecision.CHANGE


@dataclass(frozen=True)
class DecisionTrace:
    t_c: float
    p_hat: float
    u_keep: float
    w_val: float
    e_ck: float
    decision: LaneDecision


def regret_transform(delta_u: float, p: RegretParams) -> float:
    """q(du) = sigma1 * sinh(sigma2 * du) + sigma3 * du."""
    if not math.isfinite(delta_u):
        raise DomainError(f"utility difference must be finite, got {delta_u}")
    try:
        curved = p.sigma1 * math.sinh(p.sigma2 * delta_u)
    except OverflowError:  # saturate like numpy; the exact value exceeds float range
        curved = math.copysign(math.inf, delta_u) if p.sigma1 > 0 else 0.0
    return curved + p.sigma3 * delta_u


def probability_weight(p_obj: float, p: RegretParams) -> float:
    """Prelec weighting w(p) = exp(-beta1 * (-log p)^beta2), with w(0) = 0."""
    if not 0.0 <= p_obj <= 1.0:
        raise DomainError(f"probability must lie in [0, 1], got {p_obj}")
    if p_obj == 0.0:
        return 0.0
    if p_obj == 1.0:
        return 1.0
    return math.exp(-p.beta1 * (-math.log(p_obj)) ** p.beta2)


def time_to_collision(d: float, v_f: float, v_c: float) -> float:
    """Time until the approaching vehicle closes the gap; ``math.inf`` if it never does."""
    if math.isnan(d) or d < 0:
        raise DomainError(f"gap must be >= 0, got {d}")
    if v_c >= v_f:
        return math.inf
    return d / (v_f - v_c)


def estimate_success_probability(t_c: float, p: RegretParams) -> float:
    if math.isnan(t_c) or t_c < 0:
        raise DomainError(f"time to collision must be >= 0, got {t_c}")
    if t_c >= p.tau_s:
        return 1.0
    return t_c / p.tau_s


def keep_lane_utility(obs: LaneChangeObservation, p: RegretParams) -> float:
    """Normalised cost of yielding: eta1 * (1/v_f^2 - v_b / (v_s v_f^2))."""
    if obs.v_s == 0 or obs.v_f == 0:
        raise SingularInputError("keep-lane utility needs v_s > 0 and v_f > 0")
    return p.eta1 * (1.0 / obs.v_f**2 - obs.v_b / (obs.v_s * obs.v_f**2))


def net_advantage(obs: LaneChangeObservation, p: RegretParams) -> DecisionTrace:
    t_c = time_to_collision(obs.d, obs.v_f, obs.v_c)
    p_hat = estimate_success_probability(t_c, p)
    u_keep = keep_lane_utility(obs, p)
    w_val = probability_weight(p_hat, p)
    # no-collision column compares 0 with u_keep; collision column compares -1 with 0
    gain = w_val * regret_transform(-u_keep, p) if w_val > 0 else 0.0  # 0 * inf stays 0
    e_ck = gain + (1.0 - w_val) * regret_transform(-1.0, p)
    decision = LaneDecision.CHANGE if e_ck > 0 else LaneDecision.KEEP
    return DecisionTrace(t_c, p_hat, u_keep, w_val, e_ck, decision)


def decide(obs: LaneChangeObservation, p: RegretParams) -> LaneDecision:
    return net_advantage(obs, p).decision


def net_advantage_array(v_s, v_c, v_f, v_b, d, p: RegretParams) -> np.ndarray:
    """Vectorised e_ck over arrays of already-validated observations.

    Used by calibration, where the same dataset is evaluated thousands of
    times per fit. Agrees with :func:`net_advantage` to rounding.
    """
    v_s, v_c, v_f, v_b, d = (np.asarray(a, dtype=float) for a in (v_s, v_c, v_f, v_b, d))
    closing = v_f - v_c
    with np.errstate(divide="ignore", invalid="ignore"):
        t_c = np.where(closing > 0, d / np.where(closing > 0, closing, 1.0), np.inf)
    p_hat = np.minimum(t_c / p.tau_s, 1.0)
    with np.errstate(divide="ignore"):
        neg_log = -np.log(p_hat)
    w_val = np.where(p_hat > 0, np.exp(-p.beta1 * np.abs(neg_log) ** p.beta2), 0.0)
    w_val = np.where(p_hat >= 1.0, 1.0, w_val)
    u_keep = p.eta1 * (1.0 / v_f**2 - v_b / (v_s * v_f**2))
    with np.errstate(over="ignore", invalid="ignore"):
        q_keep = p.sigma1 * np.sinh(-p.sigma2 * u_keep) - p.sigma3 * u_keep
        gain = np.where(w_val > 0, w_val * q_keep, 0.0)
    q_collide = p.sigma1 * math.sinh(-p.sigma2) - p.sigma3
    return gain + (1.0 - w_val) * q_collide
