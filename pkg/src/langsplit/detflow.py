"""One-step maps for the deterministic (conservative) subsystem.

The subsystem integrated here is the Hamiltonian pair

    dP = -(upsilon/2) P dt - U'(Q) dt,
    dQ = P dt + (upsilon/2) Q dt,

whose invariant is the shifted energy ``H``.  Three implicit maps conserve
``H`` exactly (up to solver tolerance): the average-vector-field map, the
midpoint discrete-gradient map, and the partitioned average-vector-field
map.  The explicit symplectic Euler map does not conserve ``H`` but has unit
Jacobian determinant, which is what the conformal-symplectic composition
needs.

All maps act elementwise on scalar or array states, so a batch of phase
points can be stepped in one call; the implicit solves run a vectorized
2-D Newton iteration with analytic Jacobians.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from .errors import NonConvergence, SingularJacobian
from .model import ArrayLike, PhysParams, State, energy_H

__all__ = [
    "CONSERVATIVE_KINDS",
    "MAP_KINDS",
    "SolverSettings",
    "avg_cubic",
    "newton_solve_2d",
    "avf_step",
    "dg_step",
    "pavf_step",
    "sympl_euler_step",
    "conservative_step",
    "energy_residual",
    "subsystem_field",
]

# Map-kind tags.  The first three conserve H exactly; the last preserves the
# symplectic two-form instead.
CONSERVATIVE_KINDS = ("avf", "dg", "pavf")
MAP_KINDS = CONSERVATIVE_KINDS + ("sympl_euler",)


@dataclass(frozen=True)
class SolverSettings:
    """Newton solver tolerances and budgets.

    ``max_iter`` below 1 exhausts the budget immediately and is only useful
    for exercising the failure path.  ``fallback`` enables a damped
    fixed-point retry when Newton stalls.
    """

    rel_tol: float = 1e-12
    abs_tol: float = 1e-14
    max_iter: int = 50
    fallback: bool = True

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 0:
            raise ValueError("max_iter must be >= 0")


def avg_cubic(a: ArrayLike, b: ArrayLike) -> ArrayLike:
    """Average of the cube along the segment from ``a`` to ``b``.

    Closed form ``(a+b)(a^2+b^2)/4`` of ``int_0^1 (a + lam*(b-a))^3 dlam``;
    continuous at a == b where it reduces to ``a^3``.
    """
    return 0.25 * (a + b) * (a * a + b * b)


def subsystem_field(s: State, prm: PhysParams) -> State:
    """Right-hand side of the conservative subsystem at ``s``."""
    u = prm.upsilon
    return State(p=-0.5 * u * s.p - prm.potential.grad(s.q),
                 q=s.p + 0.5 * u * s.q)


def _check_tau(tau: float, prm: PhysParams) -> None:
    # tau == 0 is the identity map and always fine; the upper bound keeps
    # (1 - tau*u/4) and (1 + tau*u/2) away from 0.
    if tau < 0:
        raise ValueError(f"step size must be nonnegative, got {tau}")
    limit = min(1.0, 2.0 / prm.upsilon)
    if tau >= limit and tau > 0:
        raise ValueError(
            f"step size {tau} outside (0, {limit}) for upsilon={prm.upsilon}; "
            "the implicit solves are not well-conditioned there")


def newton_solve_2d(
    residual: Callable[[State], Tuple[ArrayLike, ArrayLike]],
    jacobian: Callable[[State], Tuple[ArrayLike, ArrayLike, ArrayLike, ArrayLike]],
    guess: State,
    settings: SolverSettings = SolverSettings(),
    return_info: bool = False,
):
    """Solve ``residual(x) == 0`` by plain 2-D Newton iteration.

    Parameters
    ----------
    residual : callable
        Maps a state to the residual pair ``(f_p, f_q)``.
    jacobian : callable
        Maps a state to the row-major Jacobian entries
        ``(d f_p/d p, d f_p/d q, d f_q/d p, d f_q/d q)``; must be the exact
        derivative of ``residual``.
    guess : State
        Initial iterate; also sets the relative-tolerance scale.
    settings : SolverSettings
    return_info : bool
        If true, also return a dict with iteration count, final residual
        norm, and whether the fixed-point fallback ran.

    Returns
    -------
    State
        Root with ``max(|f_p|, |f_q|) <= abs_tol + rel_tol * |guess|``
        elementwise.

    Raises
    ------
    NonConvergence
        Budget exhausted (including ``max_iter == 0`` with a non-root guess).
    SingularJacobian
        A Jacobian determinant vanished during the iteration.
    """
    p = np.asarray(guess.p, dtype=float)
    q = np.asarray(guess.q, dtype=float)
    scale = np.maximum(np.abs(p), np.abs(q))
    tol = settings.abs_tol + settings.rel_tol * scale

    def res_norm(x):
        f1, f2 = residual(x)
        return np.maximum(np.abs(f1), np.abs(f2)), (f1, f2)

    norm, (f1, f2) = res_norm(State(p, q))
    iterations = 0
    fallback_used = False
    while iterations < settings.max_iter and not np.all(norm <= tol):
        j11, j12, j21, j22 = jacobian(State(p, q))
        det = j11 * j22 - j12 * j21
        active = norm > tol
        if np.any(active & (np.abs(det) < 1e-13)):
            raise SingularJacobian(
                "Newton Jacobian numerically singular; step size too close "
                "to the conditioning boundary")
        # Converged lanes are frozen, so each lane's iterate sequence is the
        # one a standalone solve of that lane would produce.
        with np.errstate(divide="ignore", invalid="ignore"):
            p = np.where(active, p - (j22 * f1 - j12 * f2) / det, p)
            q = np.where(active, q - (j11 * f2 - j21 * f1) / det, q)
        norm, (f1, f2) = res_norm(State(p, q))
        iterations += 1
    converged = bool(np.all(norm <= tol))

    if not converged and settings.fallback and settings.max_iter > 0:
        # Damped fixed-point retry: contraction for the small steps the
        # schemes are used with, slower but insensitive to a bad predictor.
        fallback_used = True
        p = np.asarray(guess.p, dtype=float)
        q = np.asarray(guess.q, dtype=float)
        for _ in range(8 * settings.max_iter):
            f1, f2 = residual(State(p, q))
            norm = np.maximum(np.abs(f1), np.abs(f2))
            if np.all(norm <= tol):
                converged = True
                break
            active = norm > tol
            p = np.where(active, p - 0.5 * f1, p)
            q = np.where(active, q - 0.5 * f2, q)

    if not converged:
        worst = float(np.max(norm))
        raise NonConvergence(
            f"implicit step did not converge (max |residual| = {worst:.3e} "
            f"after {settings.max_iter} Newton iterations"
            + (", fixed-point fallback tried" if fallback_used else "")
            + ")",
            iterations=settings.max_iter, residual=worst)

    out = State(p if p.ndim else float(p), q if q.ndim else float(q))
    if return_info:
        return out, {"iterations": iterations,
                     "residual_norm": float(np.max(norm)),
                     "fallback_used": fallback_used}
    return out


def _predictor(s: State, tau: float, prm: PhysParams) -> State:
    f = subsystem_field(s, prm)
    return State(s.p + tau * f.p, s.q + tau * f.q)


def avf_step(s: State, tau: float, prm: PhysParams,
             settings: SolverSettings = SolverSettings()) -> State:
    """Average-vector-field map: implicit, conserves ``H`` exactly.

    Solves
        p1 = p - (tau*u/4)(p1 + p) - tau * avg_grad(q, q1),
        q1 = q + (tau/2)(p1 + p) + (tau*u/4)(q1 + q).
    """
    _check_tau(tau, prm)
    u, pot = prm.upsilon, prm.potential
    p0 = np.asarray(s.p, dtype=float)
    q0 = np.asarray(s.q, dtype=float)
    a4 = 0.25 * tau * u

    def residual(x):
        f1 = x.p - p0 + a4 * (x.p + p0) + tau * pot.avg_grad(q0, x.q)
        f2 = x.q - q0 - 0.5 * tau * (x.p + p0) - a4 * (x.q + q0)
        return f1, f2

    def jacobian(x):
        return (1.0 + a4, tau * pot.avg_grad_db(q0, x.q),
                -0.5 * tau, 1.0 - a4)

    return newton_solve_2d(residual, jacobian, _predictor(s, tau, prm), settings)


def dg_step(s: State, tau: float, prm: PhysParams,
            settings: SolverSettings = SolverSettings()) -> State:
    """Midpoint discrete-gradient map: implicit, conserves ``H`` exactly.

    The discrete gradient is the midpoint gradient plus the rank-one
    correction enforcing the exact energy-difference identity.  The
    correction numerator is evaluated in the cancellation-free form
    ``(avg_grad(q, q1) - U'(mid_q)) * (q1 - q)``, which is identical to the
    literal ``H``-difference quotient but stable for small displacements.
    When ``|delta|^2 < 1e-28`` the correction is defined as zero.
    """
    _check_tau(tau, prm)
    u, pot = prm.upsilon, prm.potential
    p0 = np.asarray(s.p, dtype=float)
    q0 = np.asarray(s.q, dtype=float)
    tiny = 1e-28

    def _parts(x):
        mp = 0.5 * (x.p + p0)
        mq = 0.5 * (x.q + q0)
        dp = x.p - p0
        dq = x.q - q0
        dd = dp * dp + dq * dq
        live = dd >= tiny
        dd_safe = np.where(live, dd, 1.0)
        corr_num = (pot.avg_grad(q0, x.q) - pot.grad(mq)) * dq
        c = np.where(live, corr_num / dd_safe, 0.0)
        return mp, mq, dp, dq, dd_safe, live, c

    def residual(x):
        mp, mq, dp, dq, _, _, c = _parts(x)
        f1 = x.p - p0 + tau * (pot.grad(mq) + 0.5 * u * mp + c * dq)
        f2 = x.q - q0 - tau * (mp + 0.5 * u * mq + c * dp)
        return f1, f2

    def jacobian(x):
        mp, mq, dp, dq, dd_safe, live, c = _parts(x)
        s_term = pot.avg_grad(q0, x.q) - pot.grad(mq)
        ds_dq1 = pot.avg_grad_db(q0, x.q) - 0.5 * pot.hess(mq)
        dc_dp1 = np.where(live, -2.0 * c * dp / dd_safe, 0.0)
        dc_dq1 = np.where(live,
                          (ds_dq1 * dq + s_term) / dd_safe - 2.0 * c * dq / dd_safe,
                          0.0)
        j11 = 1.0 + tau * (0.25 * u + dc_dp1 * dq)
        j12 = tau * (0.5 * pot.hess(mq) + dc_dq1 * dq + c)
        j21 = -tau * (0.5 + dc_dp1 * dp + c)
        j22 = 1.0 - tau * (0.25 * u + dc_dq1 * dp)
        return j11, j12, j21, j22

    return newton_solve_2d(residual, jacobian, _predictor(s, tau, prm), settings)


def pavf_step(s: State, tau: float, prm: PhysParams,
              settings: SolverSettings = SolverSettings()) -> State:
    """Partitioned average-vector-field map: implicit, conserves ``H`` exactly.

    Solves
        p1 = p - (tau*u/2) p1 - tau * avg_grad(q, q1),
        q1 = q + (tau/2)(p1 + p) + (tau*u/2) q.

    Conservation is the cancellation
    ``dp * [(p1+p)/2 + (u/2) q] + dq * [avg_grad + (u/2) p1] = 0``.
    """
    _check_tau(tau, prm)
    u, pot = prm.upsilon, prm.potential
    p0 = np.asarray(s.p, dtype=float)
    q0 = np.asarray(s.q, dtype=float)
    a2 = 0.5 * tau * u

    def residual(x):
        f1 = x.p - p0 + a2 * x.p + tau * pot.avg_grad(q0, x.q)
        f2 = x.q - q0 - 0.5 * tau * (x.p + p0) - a2 * q0
        return f1, f2

    def jacobian(x):
        return (1.0 + a2, tau * pot.avg_grad_db(q0, x.q),
                -0.5 * tau, np.ones_like(np.asarray(x.q)))

    return newton_solve_2d(residual, jacobian, _predictor(s, tau, prm), settings)


def sympl_euler_step(s: State, tau: float, prm: PhysParams,
                     settings: SolverSettings = None) -> State:
    """Symplectic Euler map: explicit closed form, unit Jacobian determinant.

        p1 = (p - tau * U'(q)) / (1 + tau*u/2),
        q1 = q + tau * (p1 + (u/2) q).

    Does not conserve ``H`` (the defect is O(tau^2) per step); ``settings``
    is accepted for signature uniformity and ignored.
    """
    if tau < 0:
        raise ValueError(f"step size must be nonnegative, got {tau}")
    u = prm.upsilon
    p1 = (s.p - tau * prm.potential.grad(s.q)) / (1.0 + 0.5 * tau * u)
    q1 = s.q + tau * (p1 + 0.5 * u * s.q)
    return State(p1, q1)


_STEP_FUNCS = {
    "avf": avf_step,
    "dg": dg_step,
    "pavf": pavf_step,
    "sympl_euler": sympl_euler_step,
}


def conservative_step(kind: str, s: State, tau: float, prm: PhysParams,
                      settings: SolverSettings = SolverSettings()) -> State:
    """Dispatch one deterministic sub-step by map kind."""
    try:
        func = _STEP_FUNCS[kind]
    except KeyError:
        raise ValueError(f"unknown map kind {kind!r}; expected one of {MAP_KINDS}")
    return func(s, tau, prm, settings)


def energy_residual(kind: str, s: State, tau: float, prm: PhysParams,
                    settings: SolverSettings = SolverSettings()) -> ArrayLike:
    """``H(map(s)) - H(s)`` for one deterministic sub-step.

    Near machine zero for the conservative kinds; O(tau^2) and generally
    nonzero for ``sympl_euler``.
    """
    out = conservative_step(kind, s, tau, prm, settings)
    return energy_H(out, prm) - energy_H(s, prm)
