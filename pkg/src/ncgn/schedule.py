"""Noise-adaptive schedules for message passing range and resolution.

A schedule maps noise level t in [0, 1] (t=0 high noise, t=1 none) to the
neighbor count r_t and coarse node count s_t. All shapes share the same
contract: s interpolates from s0 up to s1 through a progress curve g, and
in budget mode r is derived from the r_t * s_t ~ r1 * N work budget so the
per-layer message count stays linear in N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

SCHEDULE_KINDS = ("linear", "exponential", "logarithm", "relu")

DEFAULT_EXP_RATE = 4.0
DEFAULT_LOG_RATE = 20.0
DEFAULT_RELU_KNEE = 0.5


@dataclass
class ScheduleSpec:
    kind: str = "exponential"
    r0: int = 1
    r1: int = 1
    s0: int = 1
    s1: int = 1
    budget_mode: bool = False
    exp_rate: float = DEFAULT_EXP_RATE
    log_rate: float = DEFAULT_LOG_RATE
    relu_knee: float = DEFAULT_RELU_KNEE

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not (self.r0 >= self.r1 >= 1):
            raise ValueError("need r0 >= r1 >= 1")
        if not (self.s1 >= self.s0 >= 1):
            raise ValueError("need s1 >= s0 >= 1")


def progress(spec: ScheduleSpec, t: float) -> float:
    """Monotone progress curve with g(0)=0 and g(1)=1."""
    if spec.kind == "linear":
        return t
    if spec.kind == "exponential":
        a = spec.exp_rate
        return (math.exp(a * t) - 1.0) / (math.exp(a) - 1.0)
    if spec.kind == "logarithm":
        a = spec.log_rate
        return math.log1p(a * t) / math.log1p(a)
    # relu: flat until the knee, then linear up to 1
    knee = spec.relu_knee
    return max(0.0, t - knee) / (1.0 - knee)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def eval_schedule(spec: ScheduleSpec, t: float, n_nodes: int):
    """Return (r_t, s_t) for noise level t over an N-node graph.

    r_t is capped at s0 - 1: a node cannot have more neighbors than there
    are other coarse nodes, and since s_t >= s0 this constant cap keeps r_t
    monotone (a cap of s_t - 1 would track the growing s curve). Specs with
    r0 = s0 therefore realize "fully connected" at the high-noise end.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    g = progress(spec, t)
    s_t = _round_half_up(spec.s0 + (spec.s1 - spec.s0) * g)
    s_t = min(max(s_t, spec.s0), spec.s1)
    if spec.budget_mode:
        r_t = _round_half_up(spec.r1 * n_nodes / s_t)
        r_t = max(r_t, spec.r1)
    else:
        r_t = _round_half_up(spec.r0 + (spec.r1 - spec.r0) * g)
        r_t = min(max(r_t, spec.r1), spec.r0)
    r_t = max(min(r_t, spec.s0 - 1), 1)
    return r_t, s_t


def default_bounds(n_nodes: int, kind: str = "exponential", **kwargs) -> ScheduleSpec:
    """Boundary conditions giving linear message passing cost.

    Sparse full resolution at t=1 (r1 = ceil(N^(1/3)), s1 = N) and a fully
    connected coarse graph of s0 = ceil(sqrt(r1*N)) nodes at t=0, so
    r_t * s_t stays near r1 * N throughout.
    """
    if n_nodes < 2:
        raise ValueError("need at least two nodes")
    r1 = math.ceil(n_nodes ** (1.0 / 3.0) - 1e-9)
    s1 = n_nodes
    s0 = math.ceil(math.sqrt(r1 * n_nodes) - 1e-9)
    return ScheduleSpec(
        kind=kind, r0=s0, r1=r1, s0=s0, s1=s1, budget_mode=True, **kwargs
    )
