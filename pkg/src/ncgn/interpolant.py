"""Noising processes: what gets interpolated, regressed against, and how
samples are drawn back out.

Three kinds:
  cfm  - straight-path conditional flow matching with a small sigma_min,
         sampled with explicit Euler from t=0 to t=1.
  ddpm - variance-preserving diffusion with a linear beta range and
         epsilon-prediction, sampled ancestrally.
  ve   - variance-exploding noise, used for the noise-vs-structure studies.

t=1 is always the data end, t=0 the noise end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import GeometricGraph


@dataclass
class InterpolantSpec:
    kind: str = "cfm"
    sigma_min: float = 1e-3
    steps: int = 1000
    beta_min: float = 1e-4
    beta_max: float = 0.02
    sigma_max: float = 1.0

    def __post_init__(self):
        if self.kind not in ("cfm", "ddpm", "ve"):
            raise ValueError(f"unknown interpolant kind {self.kind!r}")
        if self.sigma_min <= 0:
            raise ValueError("sigma_min must be positive")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.beta_max <= self.beta_min:
            raise ValueError("beta range must be increasing")

    def betas(self):
        return np.linspace(self.beta_min, self.beta_max, self.steps)

    def alpha_bar(self, t):
        """Cumulative signal retention at noise level t; alpha_bar(1) = 1."""
        k = int(round((1.0 - t) * self.steps))
        if k == 0:
            return 1.0
        return float(np.prod(1.0 - self.betas()[:k]))

    def sigma_t(self, t):
        """Noise standard deviation at level t."""
        if self.kind == "cfm":
            return self.sigma_min
        if self.kind == "ve":
            return self.sigma_max * (1.0 - t)
        ab = self.alpha_bar(t)
        return float(np.sqrt(1.0 - ab))

    def snr(self, t, data_var=1.0):
        s = self.sigma_t(t)
        return data_var / max(s * s, 1e-300)


def _noise(shape, seed):
    return np.random.default_rng(seed).standard_normal(shape)


def interpolate(z0, z1, t, spec: InterpolantSpec, seed):
    """Draw the noised sample z_t between prior draw z0 and data z1."""
    z0 = np.asarray(z0, dtype=np.float64)
    z1 = np.asarray(z1, dtype=np.float64)
    if z0.shape != z1.shape:
        raise ValueError("z0 and z1 must have the same shape")
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    eps = _noise(z1.shape, seed)
    if spec.kind == "cfm":
        return (1.0 - t) * z0 + t * z1 + spec.sigma_min * eps
    if spec.kind == "ve":
        return z1 + spec.sigma_t(t) * eps
    ab = spec.alpha_bar(t)
    return np.sqrt(ab) * z1 + np.sqrt(1.0 - ab) * eps


def regression_target(z0, z1, z_t, t, spec: InterpolantSpec, seed=None):
    """The vector the network regresses against at noise level t.

    For ddpm this is the noise draw itself, so the same seed used in
    ``interpolate`` must be passed back in.
    """
    z0 = np.asarray(z0, dtype=np.float64)
    z1 = np.asarray(z1, dtype=np.float64)
    if spec.kind == "cfm":
        return z1 - z0
    if spec.kind == "ve":
        s = max(spec.sigma_t(t), 1e-8)
        return (z1 - np.asarray(z_t)) / s
    if seed is None:
        raise ValueError("ddpm target requires the interpolate seed")
    return _noise(z1.shape, seed)


def generate(field, prior_graph: GeometricGraph, spec: InterpolantSpec,
             nfes: int, task="features", seed=0, callback=None):
    """Integrate the learned field from prior to data.

    ``field(graph, t)`` returns an N x odim array for the generated
    component (features or positions). cfm uses explicit Euler with step
    1/nfes; ddpm runs ancestral sampling over the spec's diffusion steps
    interpreting the field output as predicted noise. ``callback(graph, t)``
    runs after every step (used for conditioning clamps).
    """
    if nfes < 1:
        raise ValueError("nfes must be >= 1")
    graph = prior_graph.copy()

    def current():
        return graph.features if task == "features" else graph.positions

    def assign(z):
        if task == "features":
            graph.features = z
        else:
            graph.positions = z

    if spec.kind == "cfm":
        dt = 1.0 / nfes
        for i in range(nfes):
            t = i * dt
            v = np.asarray(field(graph, t))
            if v.shape != current().shape:
                raise ValueError("field returned wrong shape")
            assign(current() + dt * v)
            if callback is not None:
                callback(graph, t + dt)
        return graph

    if spec.kind != "ddpm":
        raise ValueError("generation is defined for cfm and ddpm")

    betas = spec.betas()
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(current().shape)
    assign(z)
    for k in range(spec.steps, 0, -1):
        t = 1.0 - k / spec.steps
        eps_pred = np.asarray(field(graph, t))
        if eps_pred.shape != z.shape:
            raise ValueError("field returned wrong shape")
        beta, alpha, ab = betas[k - 1], alphas[k - 1], alpha_bars[k - 1]
        z = (z - beta / np.sqrt(1.0 - ab) * eps_pred) / np.sqrt(alpha)
        if k > 1:
            z = z + np.sqrt(beta) * rng.standard_normal(z.shape)
        assign(z)
        if callback is not None:
            callback(graph, 1.0 - (k - 1) / spec.steps)
    return graph
