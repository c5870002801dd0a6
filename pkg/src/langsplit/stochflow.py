"""Exact flows of the stochastic sub-systems.

The dissipative stochastic subsystem contracts both coordinates at rate
``upsilon/2`` and drives the momentum with additive noise:

    dP = -(upsilon/2) P dt + sigma dW,    dQ = -(upsilon/2) Q dt.

It is solved exactly in two interchangeable forms: distribution-exact
sampling from a single standard normal draw, and path-coupled evaluation of
the stochastic convolution on a window of fine Brownian increments (so a
coarse run and a fine reference run can share one Wiener path).

The naive sub-step (full-rate Ornstein-Uhlenbeck momentum, frozen position)
is kept for the non-dissipation comparison; it is exactly the sub-flow whose
failure to damp the physical energy motivates the dissipative splitting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch
from .model import ArrayLike, PhysParams, State

__all__ = [
    "OUIncrement",
    "FineWindow",
    "ou_substep_exact",
    "ou_substep_coupled",
    "naive_substep_exact",
    "naive_increment",
]


@dataclass(frozen=True)
class OUIncrement:
    """Exact one-step statistics of the dissipative stochastic subsystem.

    ``decay`` multiplies both coordinates; ``noise_std`` is the standard
    deviation of the stochastic convolution added to the momentum, satisfying
    ``noise_std^2 == sigma^2 (1 - decay^2) / upsilon``.
    """

    decay: float
    noise_std: float
    tau: float

    @classmethod
    def from_params(cls, prm: PhysParams, tau: float) -> "OUIncrement":
        if tau <= 0:
            raise ValueError(f"step size must be positive, got {tau}")
        decay = math.exp(-0.5 * prm.upsilon * tau)
        noise_std = prm.sigma * math.sqrt((1.0 - decay * decay) / prm.upsilon)
        return cls(decay=decay, noise_std=noise_std, tau=tau)

    def apply(self, s: State, z: ArrayLike) -> State:
        return State(self.decay * s.p + self.noise_std * z, self.decay * s.q)


@dataclass(frozen=True)
class FineWindow:
    """Fine Brownian increments spanning one coarse step.

    ``increments`` has the time axis first: shape ``(n_fine,)`` for one path
    or ``(n_fine, n_paths)`` for a batch; entries are N(0, tau_f) draws.
    """

    increments: np.ndarray
    tau_f: float

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        object.__setattr__(self, "increments", inc)
        if inc.shape[0] == 0:
            raise GridMismatch("fine window is empty")
        if self.tau_f <= 0:
            raise ValueError(f"fine spacing must be positive, got {self.tau_f}")

    @property
    def span(self) -> float:
        return self.increments.shape[0] * self.tau_f


def ou_substep_exact(s: State, tau: float, prm: PhysParams,
                     z: ArrayLike) -> State:
    """One exact step of the dissipative stochastic subsystem.

    ``z`` is a standard normal draw (caller-owned randomness); the output is
    equal in distribution to the subsystem solution after time ``tau``.
    """
    return OUIncrement.from_params(prm, tau).apply(s, z)


def _midpoint_weights(upsilon: float, tau: float, n_fine: int,
                      tau_f: float) -> np.ndarray:
    # Deterministic weight of fine cell k, evaluated at the cell midpoint:
    # exp(-(u/2) (tau - (k + 1/2) tau_f)).  Second-order quadrature of the
    # exact convolution kernel.
    k = np.arange(n_fine)
    return np.exp(-0.5 * upsilon * (tau - (k + 0.5) * tau_f))


def ou_substep_coupled(s: State, window: FineWindow, prm: PhysParams,
                       tau: float = None) -> State:
    """Dissipative stochastic sub-step driven by a shared fine Wiener path.

    The stochastic convolution is evaluated as a midpoint-weighted sum of the
    window's fine increments, so a coarse run and a fine-step reference run
    consume the same Brownian path.  Consistent with
    :func:`ou_substep_exact` to O(tau_f) in mean and variance.

    Parameters
    ----------
    s, prm : state and model constants.
    window : FineWindow
        Fine increments spanning the step; its span defines the step size.
    tau : float, optional
        Intended coarse step; raises :class:`GridMismatch` if the window
        does not tile it.
    """
    span = window.span
    if tau is not None and abs(span - tau) > 1e-9 * max(tau, window.tau_f):
        raise GridMismatch(
            f"window spans {span:g} but the step is {tau:g}; fine spacing "
            f"{window.tau_f:g} must tile the step exactly")
    u = prm.upsilon
    decay = math.exp(-0.5 * u * span)
    w = _midpoint_weights(u, span, window.increments.shape[0], window.tau_f)
    conv = np.tensordot(w, window.increments, axes=(0, 0))
    if np.ndim(conv) == 0:
        conv = float(conv)
    return State(decay * s.p + prm.sigma * conv, decay * s.q)


def naive_increment(prm: PhysParams, tau: float):
    """(decay, noise_std) of the full-rate OU momentum sub-step."""
    decay = math.exp(-prm.upsilon * tau)
    noise_std = prm.sigma * math.sqrt(
        (1.0 - decay * decay) / (2.0 * prm.upsilon))
    return decay, noise_std


def naive_substep_exact(s: State, tau: float, prm: PhysParams,
                        z: ArrayLike) -> State:
    """Naive stochastic sub-step: full-rate OU momentum, frozen position.

    Exact solution of ``dP = -upsilon P dt + sigma dW, dQ = 0``.  The
    position (hence the potential energy) is untouched, which is why this
    sub-step cannot damp the physical energy.
    """
    if tau <= 0:
        raise ValueError(f"step size must be positive, got {tau}")
    decay, noise_std = naive_increment(prm, tau)
    return State(decay * s.p + noise_std * z, s.q)
