"""Leaky integrate-and-fire neuron state and step dynamics.

The membrane potential follows the continuous dynamics
``tau * dV/dt = -(V - V_rest) + I(t) * R`` discretized with an explicit Euler
step of size 1. A neuron emits a binary spike whenever its potential reaches
the threshold, after which the potential is hard-reset to ``v_reset``.

The spike nonlinearity is a Heaviside step in the forward pass; its backward
rule is the arctan-shaped surrogate

    sigma'(u) = (alpha / 2) / (1 + (pi * alpha * u / 2)**2),   u = v - v_th

which integrates to exactly 1 over the real line. ``soft_spike`` is the smooth
primitive whose derivative equals the surrogate; it replaces the Heaviside
only in gradient-check mode, where the whole network must be differentiable
so BPTT can be validated against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .tensor import Tensor, add, affine, apply_rule, mul, register_gradient_rule


@dataclass
class LifParams:
    """Neuron constants shared by every unit of a wrapped layer.

    ``tau`` is the membrane time constant in steps, ``resistance`` scales the
    input current. ``leak_factor``, when set, applies an extra multiplicative
    decay ``v *= (1 - leak_factor)`` after integration and before the
    threshold test; it ships disabled because the time constant already
    provides the leak. ``alpha`` controls the surrogate gradient's steepness.
    """

    tau: float = 2.0
    v_th: float = 1.0
    v_rest: float = 0.0
    v_reset: float = 0.0
    resistance: float = 1.0
    leak_factor: Optional[float] = None
    alpha: float = 2.0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.v_th <= self.v_reset:
            raise ValueError(f"v_th ({self.v_th}) must exceed v_reset ({self.v_reset})")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.leak_factor is not None and not (0.0 <= self.leak_factor < 1.0):
            raise ValueError(f"leak_factor must lie in [0, 1), got {self.leak_factor}")


class LifState:
    """Per-layer membrane potentials plus the current time-step index."""

    __slots__ = ("v", "t", "name")

    def __init__(self, v: Tensor, t: int = 0, name: str = "lif"):
        self.v = v
        self.t = t
        self.name = name

    @classmethod
    def zeros(cls, shape, params: LifParams, name: str = "lif") -> "LifState":
        v = Tensor(np.full(shape, params.v_rest, dtype=np.float32))
        return cls(v, 0, name)


def reset_state(state: LifState, params: LifParams) -> None:
    """Clear a state between samples: all potentials at rest, step index 0."""
    state.v = Tensor(np.full(state.v.shape, params.v_rest, dtype=np.float32))
    state.t = 0


def surrogate_derivative(u, alpha: float = 2.0):
    """Arctan surrogate gradient, peaking at alpha/2 for u = 0.

    Accepts scalars or arrays; scalar in, Python float out.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    u_arr = np.asarray(u)
    val = (alpha / 2.0) / (1.0 + (np.pi * alpha * u_arr / 2.0) ** 2)
    return float(val) if np.isscalar(u) else val


def soft_spike(u, alpha: float = 2.0):
    """Smooth spike stand-in: (1/pi) * arctan(pi*alpha*u/2) + 1/2.

    Strictly increasing with limits 0 and 1; its derivative is exactly
    ``surrogate_derivative``. Used only in gradient-check mode.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    u_arr = np.asarray(u)
    val = np.arctan(np.pi * alpha * u_arr / 2.0) / np.pi + 0.5
    return float(val) if np.isscalar(u) else val


def _hard_spike_forward(u: np.ndarray, alpha: float) -> np.ndarray:
    return (u >= 0).astype(np.float32)


def _soft_spike_forward(u: np.ndarray, alpha: float) -> np.ndarray:
    return soft_spike(u, alpha).astype(np.float32)


def _spike_backward(g: np.ndarray, u: np.ndarray, out: np.ndarray, alpha: float) -> np.ndarray:
    return (g * surrogate_derivative(u, alpha)).astype(np.float32)


register_gradient_rule("spike_hard", _hard_spike_forward, _spike_backward)
register_gradient_rule("spike_soft", _soft_spike_forward, _spike_backward)


def lif_step(state: LifState, current: Tensor, params: LifParams,
             smooth: bool = False) -> Tensor:
    """Advance one Euler step and return the layer's spike tensor.

    Update order: integrate, apply the optional extra leak, threshold, hard
    reset. With ``smooth=True`` the Heaviside is replaced by ``soft_spike``
    (gradient-check mode); the reset then blends proportionally.
    """
    if current.shape != state.v.shape:
        raise ValueError(
            f"LIF layer '{state.name}': current shape {current.shape} "
            f"!= state shape {state.v.shape}")
    if np.isnan(current.data).any():
        raise ValueError(f"LIF layer '{state.name}': NaN in input current")

    inv_tau = 1.0 / params.tau
    # v <- v + (1/tau) * (-(v - v_rest) + R * I)
    decayed = affine(state.v, 1.0 - inv_tau, inv_tau * params.v_rest,
                     name=f"{state.name}.decay")
    drive = affine(current, inv_tau * params.resistance, 0.0,
                   name=f"{state.name}.drive")
    v = add(decayed, drive, name=f"{state.name}.integrate")
    if params.leak_factor is not None:
        v = affine(v, 1.0 - params.leak_factor, 0.0, name=f"{state.name}.leak")

    u = affine(v, 1.0, -params.v_th, name=f"{state.name}.u")
    rule = "spike_soft" if smooth else "spike_hard"
    spikes = apply_rule(rule, u, alpha=params.alpha, name=f"{state.name}.spike")

    # hard reset: v' = v * (1 - s) + v_reset * s
    keep = affine(spikes, -1.0, 1.0, name=f"{state.name}.keep")
    v_next = mul(v, keep, name=f"{state.name}.reset")
    if params.v_reset != 0.0:
        v_next = add(v_next, affine(spikes, params.v_reset, 0.0,
                                    name=f"{state.name}.reset_level"),
                     name=f"{state.name}.reset_add")

    state.v = v_next
    state.t += 1
    return spikes
