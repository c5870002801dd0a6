"""Scheme compositions: conservative sub-step + exact stochastic sub-step.

A single-sweep step applies the conservative map for the full step and then
the exact stochastic flow; the symmetric variant wraps the stochastic flow
between two half steps of the conservative map (second-order weak accuracy).
The noise consumed by the stochastic flow is always an explicit argument,
either a standard normal draw (standalone and ergodic runs) or a
:class:`~langsplit.stochflow.FineWindow` of shared fine Brownian increments
(convergence studies), so reproducibility and path coupling are entirely
caller-controlled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Union

import numpy as np

from .detflow import (MAP_KINDS, SolverSettings, conservative_step,
                      subsystem_field)
from .errors import NonConvergence, NonIntegralRatio
from .model import ArrayLike, PhysParams, State
from .stochflow import FineWindow, OUIncrement, ou_substep_coupled

COMPOSITIONS = ("lie_trotter", "strang")

# Named recipes: map kind + composition.
_SCHEME_NAMES = {
    "savf": ("avf", "lie_trotter"),
    "sdg": ("dg", "lie_trotter"),
    "spavf": ("pavf", "lie_trotter"),
    "strang-savf": ("avf", "strang"),
    "strang-sdg": ("dg", "strang"),
    "strang-spavf": ("pavf", "strang"),
    "sympl-euler": ("sympl_euler", "lie_trotter"),
    "strang-sympl-euler": ("sympl_euler", "strang"),
}

Noise = Union[float, np.ndarray, FineWindow]

__all__ = [
    "COMPOSITIONS",
    "SchemeSpec",
    "Trajectory",
    "ConsistencyResiduals",
    "lie_trotter_step",
    "strang_step",
    "scheme_step",
    "simulate",
    "simulate_on_grid",
    "consistency_residuals",
]


@dataclass(frozen=True)
class SchemeSpec:
    """Composition recipe: which conservative map, and how it is composed."""

    map_kind: str
    composition: str = "lie_trotter"
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if self.map_kind not in MAP_KINDS:
            raise ValueError(
                f"unknown map kind {self.map_kind!r}; expected one of {MAP_KINDS}")
        if self.composition not in COMPOSITIONS:
            raise ValueError(
                f"unknown composition {self.composition!r}; "
                f"expected one of {COMPOSITIONS}")

    @classmethod
    def from_name(cls, name: str, solver: SolverSettings = None) -> "SchemeSpec":
        """Build a spec from a recipe name like ``"savf"`` or ``"strang-savf"``."""
        key = name.lower().replace("_", "-")
        if key not in _SCHEME_NAMES:
            raise ValueError(
                f"unknown scheme {name!r}; expected one of {sorted(_SCHEME_NAMES)}")
        kind, comp = _SCHEME_NAMES[key]
        return cls(map_kind=kind, composition=comp,
                   solver=solver if solver is not None else SolverSettings())

    @property
    def name(self) -> str:
        for key, val in _SCHEME_NAMES.items():
            if val == (self.map_kind, self.composition):
                return key
        return f"{self.composition}:{self.map_kind}"


@dataclass
class Trajectory:
    """A simulated path (or batch of paths sharing the time grid).

    ``p`` and ``q`` have the time axis first: shape ``(n_steps + 1,)`` for a
    scalar run, ``(n_steps + 1, *batch)`` otherwise.  ``states[0]`` is the
    supplied initial value.
    """

    times: np.ndarray
    p: np.ndarray
    q: np.ndarray
    scheme: SchemeSpec
    seed: object = None

    @property
    def states(self) -> State:
        return State(self.p, self.q)

    def state(self, n: int) -> State:
        return State(self.p[n], self.q[n])

    def __len__(self):
        return self.times.shape[0]


class ConsistencyResiduals(NamedTuple):
    """Defect of one conservative step against the subsystem vector field."""

    rA: ArrayLike
    rB: ArrayLike


def _apply_noise(s: State, tau: float, prm: PhysParams, noise: Noise) -> State:
    if isinstance(noise, FineWindow):
        return ou_substep_coupled(s, noise, prm, tau=tau)
    return OUIncrement.from_params(prm, tau).apply(s, noise)


def lie_trotter_step(s: State, tau: float, prm: PhysParams, spec: SchemeSpec,
                     noise: Noise) -> State:
    """One single-sweep step: conservative map, then stochastic flow."""
    if tau == 0:
        return s
    mid = conservative_step(spec.map_kind, s, tau, prm, spec.solver)
    return _apply_noise(mid, tau, prm, noise)


def strang_step(s: State, tau: float, prm: PhysParams, spec: SchemeSpec,
                noise: Noise) -> State:
    """One symmetric step: half map, full stochastic flow, half map."""
    if tau == 0:
        return s
    half = conservative_step(spec.map_kind, s, 0.5 * tau, prm, spec.solver)
    mid = _apply_noise(half, tau, prm, noise)
    return conservative_step(spec.map_kind, mid, 0.5 * tau, prm, spec.solver)


def scheme_step(s: State, tau: float, prm: PhysParams, spec: SchemeSpec,
                noise: Noise) -> State:
    if spec.composition == "strang":
        return strang_step(s, tau, prm, spec, noise)
    return lie_trotter_step(s, tau, prm, spec, noise)


def _steps_for(T: float, tau: float) -> int:
    n = int(round(T / tau))
    if n < 0 or abs(n * tau - T) > 1e-9 * max(abs(T), tau):
        raise ValueError(f"horizon {T} is not an integer multiple of tau={tau}")
    return n


# Number of per-path draws pulled from each generator at a time.  Any value
# gives identical results (per-path streams are consumed in time order);
# this only bounds memory.
_NOISE_BLOCK = 4096


def simulate(initial: State, T: float, tau: float, prm: PhysParams,
             spec: SchemeSpec, seed) -> Trajectory:
    """Evolve a trajectory of ``T/tau`` steps with exact noise sampling.

    Parameters
    ----------
    initial : State
        Scalar fields give one path.  Array fields give a batch of paths
        stepped in lockstep.
    seed : int or sequence of ints
        A single int drives one noise stream shared by every lane of the
        batch (all lanes see the same draws, as in the phase-area
        experiment).  A sequence of ints gives one independent stream per
        lane, matched by position.

    Returns
    -------
    Trajectory
        Deterministic in (seed, spec, prm, tau, initial); bit-identical
        across runs and worker counts.

    Raises
    ------
    NonConvergence
        From the inner solver, annotated with the failing step index.
    """
    n_steps = _steps_for(T, tau)
    times = np.arange(n_steps + 1) * tau

    shared_stream = np.isscalar(seed) or isinstance(seed, (int, np.integer))
    if shared_stream:
        rngs = [np.random.default_rng(seed)]
    else:
        seed = np.asarray(seed)
        rngs = [np.random.default_rng(s) for s in seed]

    p0 = np.asarray(initial.p, dtype=float)
    q0 = np.asarray(initial.q, dtype=float)
    batch_shape = np.broadcast_shapes(p0.shape, q0.shape)
    if not shared_stream and batch_shape != (len(rngs),):
        raise ValueError(
            f"per-path seeds (n={len(rngs)}) require a matching 1-D batch of "
            f"initial states, got batch shape {batch_shape}")

    p_out = np.empty((n_steps + 1,) + batch_shape)
    q_out = np.empty_like(p_out)
    p_out[0] = p0
    q_out[0] = q0

    cur = State(np.broadcast_to(p0, batch_shape).astype(float),
                np.broadcast_to(q0, batch_shape).astype(float))
    done = 0
    while done < n_steps:
        block = min(_NOISE_BLOCK, n_steps - done)
        if shared_stream:
            z_block = rngs[0].standard_normal(block)
        else:
            z_block = np.stack([rng.standard_normal(block) for rng in rngs],
                               axis=1)
        for k in range(block):
            n = done + k
            try:
                cur = scheme_step(cur, tau, prm, spec, z_block[k])
            except NonConvergence as exc:
                exc.step_index = n
                raise
            p_out[n + 1] = cur.p
            q_out[n + 1] = cur.q
        done += block
        if not (np.all(np.isfinite(cur.p)) and np.all(np.isfinite(cur.q))):
            raise NonConvergence(
                "trajectory left the finite domain", step_index=done)

    if p0.ndim == 0 and q0.ndim == 0:
        p_out = p_out.reshape(n_steps + 1)
        q_out = q_out.reshape(n_steps + 1)
    return Trajectory(times=times, p=p_out, q=q_out, scheme=spec, seed=seed)


def simulate_on_grid(initial: State, tau: float, prm: PhysParams,
                     spec: SchemeSpec, increments: np.ndarray, tau_f: float,
                     keep: str = "all", record_every: int = 1):
    """Evolve on a shared fine Brownian grid (path-coupled evaluation).

    Each coarse step consumes one window of ``tau/tau_f`` fine increments,
    so runs at different ``tau`` on the same ``increments`` see the same
    Wiener path.

    Parameters
    ----------
    increments : ndarray
        N(0, tau_f) draws, time axis first; ``(n_fine,)`` or
        ``(n_fine, n_paths)``.
    keep : {"all", "last"}
        Return a full :class:`Trajectory` or only the terminal state.
    record_every : int
        With ``keep="all"``, record every k-th coarse state (the initial
        state is always recorded and the horizon must tile).

    Raises
    ------
    NonIntegralRatio
        If ``tau`` is not an integer multiple of ``tau_f``.
    """
    increments = np.asarray(increments, dtype=float)
    ratio = int(round(tau / tau_f))
    if ratio < 1 or abs(ratio * tau_f - tau) > 1e-9 * tau:
        raise NonIntegralRatio(
            f"coarse step {tau} is not an integer multiple of fine spacing {tau_f}")
    n_fine = increments.shape[0]
    n_steps = n_fine // ratio
    if n_steps * ratio != n_fine:
        raise NonIntegralRatio(
            f"{n_fine} fine increments do not tile steps of {ratio} cells")

    batch_shape = increments.shape[1:]
    cur = State(np.broadcast_to(np.asarray(initial.p, float), batch_shape).astype(float),
                np.broadcast_to(np.asarray(initial.q, float), batch_shape).astype(float))

    record = keep == "all"
    if record:
        if n_steps % record_every != 0:
            raise ValueError("record_every must tile the number of steps")
        n_rec = n_steps // record_every
        times = np.arange(n_rec + 1) * (tau * record_every)
        p_out = np.empty((n_rec + 1,) + batch_shape)
        q_out = np.empty_like(p_out)
        p_out[0] = cur.p
        q_out[0] = cur.q

    for n in range(n_steps):
        window = FineWindow(increments[n * ratio:(n + 1) * ratio], tau_f)
        try:
            cur = scheme_step(cur, tau, prm, spec, window)
        except NonConvergence as exc:
            exc.step_index = n
            raise
        if record and (n + 1) % record_every == 0:
            p_out[(n + 1) // record_every] = cur.p
            q_out[(n + 1) // record_every] = cur.q

    if record:
        return Trajectory(times=times, p=p_out, q=q_out, scheme=spec, seed=None)
    return cur


def consistency_residuals(map_kind: str, s: State, tau: float,
                          prm: PhysParams,
                          settings: SolverSettings = SolverSettings()
                          ) -> ConsistencyResiduals:
    """Defect of the one-step increments against the subsystem field.

    With ``A = p1 - p`` and ``B = q1 - q``, returns

        rA = |(u/2) p + U'(q) + A / tau|,
        rB = |p + (u/2) q - B / tau|,

    both of which vanish at rate O(tau) with a state-polynomial prefactor
    for every shipped map kind.
    """
    if tau <= 0:
        raise ValueError("consistency residuals need tau > 0")
    out = conservative_step(map_kind, s, tau, prm, settings)
    f = subsystem_field(s, prm)
    r_a = np.abs((out.p - s.p) / tau - f.p)
    r_b = np.abs((out.q - s.q) / tau - f.q)
    return ConsistencyResiduals(rA=r_a, rB=r_b)
