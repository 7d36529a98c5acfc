"""Time integration of the mean-field equations of motion."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import DOP853

from .model import ModelParams
from .steady import MeanFieldState, NoRootError, SteadySolution, flow, solve_from

RTOL = 1e-9
ATOL = 1e-12
FLOW_TOL = 1e-10
CONSECUTIVE = 3
# settle hands off to Newton once the flow is this small; the integrator's
# own noise floor sits near rtol times the largest rate
HANDOFF_TOL = 1e-6
HANDOFF_DIST = 1e-5


class StiffnessError(RuntimeError):
    pass


class SettleError(RuntimeError):
    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


@dataclass
class Trajectory:
    times: np.ndarray
    values: np.ndarray
    converged: bool
    final_residual: float
    warnings: list = field(default_factory=list)

    @property
    def states(self) -> list[MeanFieldState]:
        return [MeanFieldState.from_array(y) for y in self.values]

    @property
    def final(self) -> MeanFieldState:
        return MeanFieldState.from_array(self.values[-1])

    def spin_length(self) -> np.ndarray:
        v = self.values
        return v[:, 2] ** 2 + v[:, 3] ** 2 + v[:, 4] ** 2


def integrate(params: ModelParams, initial: MeanFieldState, horizon: float, *,
              rtol: float = RTOL, atol: float = ATOL, flow_tol: float = FLOW_TOL,
              stop_early: bool = True, max_step: float = np.inf) -> Trajectory:
    """Adaptive 8th-order Runge-Kutta (DOP853) from ``initial`` up to ``horizon``.

    Integration stops early once the flow norm stays below ``flow_tol``
    for three consecutive accepted steps.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    y0 = initial.to_array()
    if not np.all(np.isfinite(y0)):
        raise ValueError("initial state is not finite")
    warnings = []
    if params.is_rate_free:
        warnings.append("rate-free model: the flow is conservative and does not relax")

    def rhs(t, y):
        return flow(params, y)

    times, values = [0.0], [y0]
    f0 = float(np.linalg.norm(rhs(0.0, y0)))
    if stop_early and f0 < flow_tol and not params.is_rate_free:
        return Trajectory(np.array(times), np.array(values), True, f0, warnings)
    solver = DOP853(rhs, 0.0, y0, horizon, rtol=rtol, atol=atol, max_step=max_step)
    below = 0
    fn = f0
    while solver.status == "running":
        msg = solver.step()
        if solver.status == "failed":
            raise StiffnessError(f"integration failed at t={solver.t:.6g}: {msg}; "
                                 "try a smaller tolerance or an implicit method")
        y = solver.y
        if not np.all(np.isfinite(y)):
            raise StiffnessError(f"non-finite state at t={solver.t:.6g}")
        times.append(solver.t)
        values.append(y.copy())
        fn = float(np.linalg.norm(rhs(solver.t, y)))
        below = below + 1 if fn < flow_tol else 0
        if stop_early and below >= CONSECUTIVE:
            break
    converged = below >= CONSECUTIVE
    return Trajectory(np.array(times), np.array(values), converged, fn, warnings)


def settle(params: ModelParams, initial: MeanFieldState, max_horizon: float = 2e4, *,
           first_horizon: float = 50.0, flow_tol: float = FLOW_TOL) -> SteadySolution:
    """Relax ``initial`` under the flow, then polish the endpoint with Newton.

    Newton takes over as soon as the flow norm is below HANDOFF_TOL, provided
    the polished root is stable and close to the trajectory endpoint;
    otherwise integration continues until the flow norm drops below
    ``flow_tol``.
    """
    if params.is_rate_free:
        raise ValueError("settle needs a dissipative model")
    state = initial
    elapsed, h = 0.0, first_horizon
    tol = max(flow_tol, HANDOFF_TOL)
    while elapsed < max_horizon:
        h = min(h, max_horizon - elapsed)
        traj = integrate(params, state, h, flow_tol=tol)
        elapsed += traj.times[-1]
        state = traj.final
        if traj.converged:
            try:
                sol = solve_from(params, state)
            except NoRootError as exc:
                if tol <= flow_tol:
                    raise SettleError("relaxed state failed to polish", last=state) from exc
                sol = None
            if tol <= flow_tol:
                return sol
            if (sol is not None and sol.stability == "stable"
                    and sol.state.distance(state) < HANDOFF_DIST):
                return sol
            tol = flow_tol
        h *= 2
    raise SettleError(f"no relaxation within t={max_horizon:g}", last=state)
