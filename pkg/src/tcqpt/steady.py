"""Mean-field steady states: residuals, Newton roots, stability, continuation.

State coordinates are the scaled expectation values

    a_mean = <a>/sqrt(N),  jm = <J->/(N/2),  jz = <Jz>/(N/2)

flattened to five reals ``(Re a, Im a, Re jm, Im jm, jz)``.  Root finding
works on the reduced three-real system in ``(jm, jz)``; the cavity
equation is linear in ``a_mean`` and is solved exactly afterwards.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .model import ModelParams, drives_cancel, residual_drive

NEWTON_TOL = 1e-11
DEDUP_DIST = 1e-7
MARGIN = 1e-9
# eigenvalues this close to zero (relative to ||J||) at a symmetric
# broken-phase root belong to the phase rotation, not to the dynamics
SYMMETRY_BAND = 1e-6


class NoRootError(RuntimeError):
    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class NotARootError(ValueError):
    pass


@dataclass(frozen=True)
class MeanFieldState:
    a_mean: complex
    jm: complex
    jz: float

    @classmethod
    def from_array(cls, y) -> "MeanFieldState":
        return cls(complex(y[0], y[1]), complex(y[2], y[3]), float(y[4]))

    def to_array(self) -> np.ndarray:
        return np.array([self.a_mean.real, self.a_mean.imag,
                         self.jm.real, self.jm.imag, self.jz])

    @property
    def n_phot(self) -> float:
        return abs(self.a_mean) ** 2

    @property
    def f_quantity(self) -> float:
        # |jm|^2 = jx^2 + jy^2 in the scaled units
        return abs(self.jm) ** 2 + self.jz ** 2

    def conjugate(self) -> "MeanFieldState":
        return MeanFieldState(self.a_mean.conjugate(), self.jm.conjugate(), self.jz)

    def distance(self, other: "MeanFieldState") -> float:
        return float(np.linalg.norm(self.to_array() - other.to_array()))


@dataclass(frozen=True)
class SteadySolution:
    state: MeanFieldState
    residual_norm: float
    stability: str
    eigenvalues: tuple
    branch_id: int = 0
    symmetry_modes: int = 0


def trivial_state(params: ModelParams) -> MeanFieldState:
    """Normal-phase point: all spins down, cavity at the drive response."""
    return MeanFieldState(-params.omega_a / complex(params.delta_c, -params.kappa), 0j, -1.0)


# -- residual and flow -------------------------------------------------------


def _eqs(p: ModelParams, a: complex, m: complex, z: float):
    w = p.lam * a + p.omega_j
    r1 = complex(p.delta_c, -p.kappa) * a + 0.5 * p.lam * m + p.omega_a
    r2 = complex(p.delta_s, -p.gamma_perp) * m - 2.0 * z * w
    lhs3 = (p.lam * (a * m.conjugate() - a.conjugate() * m)
            + (p.omega_j * m.conjugate() - p.omega_j.conjugate() * m)
            - 1j * p.gamma_par * (1.0 + z))
    return r1, r2, lhs3 / 1j


def third_equation(params: ModelParams, state: MeanFieldState) -> complex:
    """Inversion equation after division by ``i``; real by construction."""
    return _eqs(params, state.a_mean, state.jm, state.jz)[2]


def residual(params: ModelParams, state: MeanFieldState) -> np.ndarray:
    """Five real residuals of the steady-state equations.

    The first four are the cavity and spin-lowering equations
    (``i`` times their time derivatives); the last is the inversion
    equation, which equals ``d jz/dt``.
    """
    r1, r2, r3 = _eqs(params, state.a_mean, state.jm, state.jz)
    return np.array([r1.real, r1.imag, r2.real, r2.imag, r3.real])


def flow(params: ModelParams, y) -> np.ndarray:
    """Time derivative of the flattened state."""
    p = params
    a = complex(y[0], y[1])
    m = complex(y[2], y[3])
    z = y[4]
    w = p.lam * a + p.omega_j
    da = -1j * (complex(p.delta_c, -p.kappa) * a + 0.5 * p.lam * m + p.omega_a)
    dm = -1j * (complex(p.delta_s, -p.gamma_perp) * m - 2.0 * z * w)
    dz = 2.0 * (m.conjugate() * w).imag - p.gamma_par * (1.0 + z)
    return np.array([da.real, da.imag, dm.real, dm.imag, dz])


def _holo(h: complex) -> np.ndarray:
    return np.array([[h.real, -h.imag], [h.imag, h.real]])


def flow_jacobian(params: ModelParams, y) -> np.ndarray:
    p = params
    a = complex(y[0], y[1])
    m = complex(y[2], y[3])
    z = y[4]
    w = p.lam * a + p.omega_j
    J = np.zeros((5, 5))
    J[0:2, 0:2] = _holo(-1j * complex(p.delta_c, -p.kappa))
    J[0:2, 2:4] = _holo(-0.5j * p.lam)
    J[2:4, 0:2] = _holo(2j * z * p.lam)
    J[2:4, 2:4] = _holo(-1j * complex(p.delta_s, -p.gamma_perp))
    dz = 2j * w
    J[2:4, 4] = dz.real, dz.imag
    J[4, 0] = -2.0 * p.lam * m.imag
    J[4, 1] = 2.0 * p.lam * m.real
    J[4, 2] = 2.0 * w.imag
    J[4, 3] = -2.0 * w.real
    J[4, 4] = -p.gamma_par
    return J


# -- reduced system ----------------------------------------------------------


class Reduced:
    """Steady-state equations with ``a_mean`` eliminated.

    Unknowns ``x = (Re jm, Im jm, jz)``.  For spin-conserving parameters
    the spin-length constraint ``|jm|^2 + jz^2 = 1`` is appended, since
    the steady-state equations alone leave the length undetermined.
    With cancelled drives the roots come in circles ``jm -> jm e^(i phi)``;
    ``gauge`` then appends ``Im(jm e^(-i gauge)) = 0`` to pick one point.
    """

    def __init__(self, params: ModelParams, gauge: float | None = None):
        self.params = params
        self.den = complex(params.delta_c, -params.kappa)
        self.c = params.lam ** 2 / (2.0 * self.den)
        self.R = residual_drive(params)
        self.P0 = complex(params.delta_s, -params.gamma_perp)
        self.constrained = params.spin_conserving
        self.gauge = gauge if drives_cancel(params) else None
        self.neq = 3 + self.constrained + (self.gauge is not None)

    def a_mean(self, m):
        p = self.params
        return -(0.5 * p.lam * m + p.omega_a) / self.den

    def state(self, x) -> MeanFieldState:
        m = complex(x[0], x[1])
        return MeanFieldState(self.a_mean(m), m, float(x[2]))

    def evaluate(self, X: np.ndarray):
        """Residuals ``(..., neq)`` and Jacobians ``(..., neq, 3)``."""
        X = np.asarray(X, dtype=float)
        mr, mi, z = X[..., 0], X[..., 1], X[..., 2]
        m = mr + 1j * mi
        c, R = self.c, self.R
        P = self.P0 + 2.0 * z * c
        r2 = P * m - 2.0 * z * R
        r3 = (2.0 * (np.conj(m) * R).imag - 2.0 * np.abs(m) ** 2 * c.imag
              - self.params.gamma_par * (1.0 + z))
        dz2 = 2.0 * c * m - 2.0 * R
        shape = X.shape[:-1]
        F = np.empty(shape + (self.neq,))
        J = np.zeros(shape + (self.neq, 3))
        F[..., 0], F[..., 1], F[..., 2] = r2.real, r2.imag, r3
        J[..., 0, 0], J[..., 0, 1], J[..., 0, 2] = P.real, -P.imag, dz2.real
        J[..., 1, 0], J[..., 1, 1], J[..., 1, 2] = P.imag, P.real, dz2.imag
        J[..., 2, 0] = 2.0 * R.imag - 4.0 * mr * c.imag
        J[..., 2, 1] = -2.0 * R.real - 4.0 * mi * c.imag
        J[..., 2, 2] = -self.params.gamma_par
        if self.constrained:
            F[..., 3] = mr ** 2 + mi ** 2 + z ** 2 - 1.0
            J[..., 3, 0], J[..., 3, 1], J[..., 3, 2] = 2 * mr, 2 * mi, 2 * z
        if self.gauge is not None:
            sg, cg = math.sin(self.gauge), math.cos(self.gauge)
            F[..., -1] = cg * mi - sg * mr
            J[..., -1, 0], J[..., -1, 1] = -sg, cg
        return F, J


def _full_norm(red: Reduced, x) -> float:
    F, _ = red.evaluate(x)
    st = red.state(x)
    n = float(np.linalg.norm(residual(red.params, st)))
    if red.constrained:
        n = math.hypot(n, F[3])
    return n


def _gauge_of(x) -> float:
    return math.atan2(x[1], x[0]) if math.hypot(x[0], x[1]) > 1e-8 else 0.0


def _newton(red: Reduced, x0, tol=NEWTON_TOL, max_iter=200):
    """Damped Gauss-Newton with minimum-norm steps; returns (x, norm, ok)."""
    x = np.array(x0, dtype=float)
    F, J = red.evaluate(x)
    fn = float(np.linalg.norm(F))
    for _ in range(max_iter):
        if fn < tol and _full_norm(red, x) < tol:
            return x, _full_norm(red, x), True
        step = np.linalg.lstsq(J, -F, rcond=None)[0]
        t = 1.0
        while True:
            xn = x + t * step
            Fn, Jn = red.evaluate(xn)
            fnn = float(np.linalg.norm(Fn))
            if np.isfinite(fnn) and (fnn < (1 - 1e-4 * t) * fn or t < 1e-6):
                break
            t *= 0.5
        if not np.isfinite(fnn):
            break
        if t < 1e-6 and fnn >= fn:
            # stuck at a non-root stationary point of the residual norm
            x, F, J, fn = xn, Fn, Jn, fnn
            break
        x, F, J, fn = xn, Fn, Jn, fnn
    n = _full_norm(red, x)
    return x, n, n < tol


def _gauge_fix(red: Reduced, x):
    m = complex(x[0], x[1])
    if abs(m) < 1e-300:
        return np.array([0.0, 0.0, x[2]])
    return np.array([abs(m), 0.0, x[2]])


def solve_from(params: ModelParams, initial: MeanFieldState, *,
               tol: float = NEWTON_TOL, max_iter: int = 200) -> SteadySolution:
    """Newton iteration from ``initial``; raises :class:`NoRootError`."""
    y = initial.to_array()
    if not np.all(np.isfinite(y)):
        raise ValueError("initial state is not finite")
    red = Reduced(params, gauge=_gauge_of(y[2:]))
    x, norm, ok = _newton(red, y[2:], tol=tol, max_iter=max_iter)
    if not ok:
        raise NoRootError(f"Newton did not converge (residual {norm:.3e})",
                          last=red.state(x))
    if red.gauge is not None and abs(complex(x[0], x[1])) > 0:
        red = Reduced(params, gauge=0.0)
        x, norm, _ = _newton(red, _gauge_fix(red, x), tol=tol, max_iter=5)
        if x[0] < 0:
            x = _gauge_fix(red, x)
        norm = _full_norm(red, x)
    state = red.state(x)
    stab, eig, nsym = _classify(params, state)
    return SteadySolution(state, norm, stab, tuple(eig), symmetry_modes=nsym)


def _classify(params: ModelParams, state: MeanFieldState, margin: float = MARGIN):
    J = flow_jacobian(params, state.to_array())
    eig = np.linalg.eigvals(J)
    eig = eig[np.lexsort((eig.imag, eig.real))]
    if params.is_rate_free:
        return "marginal", eig, 0
    keep = np.ones(eig.size, bool)
    nsym = 0
    if drives_cancel(params) and abs(state.jm) > 1e-9:
        band = SYMMETRY_BAND * max(1.0, np.linalg.norm(J, 2))
        idx = np.argsort(np.abs(eig))
        for i in idx[:2]:
            if abs(eig[i]) < band:
                keep[i] = False
                nsym += 1
    top = eig[keep].real.max()
    if top < -margin:
        verdict = "stable"
    elif top > margin:
        verdict = "unstable"
    else:
        verdict = "marginal"
    return verdict, eig, nsym


def classify(params: ModelParams, state: MeanFieldState, *,
             margin: float = MARGIN, root_tol: float = 1e-8):
    """Linear stability of a root: ``(verdict, eigenvalues)``.

    Verdict is ``stable`` when every eigenvalue of the flow Jacobian has
    real part below ``-margin``, ``unstable`` when one exceeds ``margin``
    and ``marginal`` otherwise.  Rate-free input is always marginal.  At a
    broken-phase root with cancelled drives, the near-zero eigenvalues
    generated by the phase symmetry are left out of the verdict (they are
    still returned).
    """
    norm = float(np.linalg.norm(residual(params, state)))
    if norm > root_tol:
        raise NotARootError(f"state is not a root (residual {norm:.3e})")
    verdict, eig, _ = _classify(params, state, margin)
    return verdict, tuple(eig)


# -- root enumeration --------------------------------------------------------


def lattice(grid=(10, 10, 10)) -> np.ndarray:
    """Initial guesses ``(Re jm, Im jm, jz)`` over jz, |jm| and arg jm."""
    nz, nr, nphi = grid
    zs = np.linspace(-1.0, 1.0, nz)
    rs = np.linspace(0.0, 1.0, nr)
    phis = 2 * np.pi * np.arange(nphi) / nphi
    Z, Rr, PH = np.meshgrid(zs, rs, phis, indexing="ij")
    return np.stack([(Rr * np.cos(PH)).ravel(), (Rr * np.sin(PH)).ravel(), Z.ravel()], -1)


def _newton_batch(red: Reduced, X: np.ndarray, max_iter=80, tol=1e-10):
    X = X.copy()
    F, J = red.evaluate(X)
    fn = np.linalg.norm(F, axis=-1)
    active = np.isfinite(fn)
    for _ in range(max_iter):
        active &= fn > tol
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        step = -np.einsum("kij,kj->ki", np.linalg.pinv(J[idx], rcond=1e-13), F[idx])
        t = np.ones(idx.size)
        pending = np.ones(idx.size, bool)
        Xn = X[idx].copy()
        Fn = F[idx].copy()
        Jn = J[idx].copy()
        fnn = fn[idx].copy()
        for _ in range(12):
            if not pending.any():
                break
            trial = X[idx][pending] + t[pending, None] * step[pending]
            Ft, Jt = red.evaluate(trial)
            ft = np.linalg.norm(Ft, axis=-1)
            good = np.isfinite(ft) & (ft < (1 - 1e-4 * t[pending]) * fn[idx][pending])
            sub = np.nonzero(pending)[0]
            acc = sub[good]
            Xn[acc], Fn[acc], Jn[acc], fnn[acc] = trial[good], Ft[good], Jt[good], ft[good]
            pending[acc] = False
            t[pending] *= 0.5
        X[idx], F[idx], J[idx], fn[idx] = Xn, Fn, Jn, fnn
        # no descent, or far outside the Bloch ball: give up on the start
        lost = pending | (np.abs(Xn[:, 2]) > 2.0) | (np.hypot(Xn[:, 0], Xn[:, 1]) > 2.0)
        active[idx[lost]] = False
    return X, fn


def find_all(params: ModelParams, grid=(10, 10, 10), *, dedup: float = DEDUP_DIST,
             tol: float = NEWTON_TOL, starts: np.ndarray | None = None) -> list[SteadySolution]:
    """All distinct roots reached from a lattice of initial guesses.

    With cancelled drives, broken-phase roots are reported with ``jm``
    real and non-negative.  Results are sorted by ``jz`` and numbered
    through ``branch_id``.
    """
    red = Reduced(params, gauge=0.0)
    X0 = lattice(grid) if starts is None else np.asarray(starts, float)
    X, fn = _newton_batch(red, X0)
    cand = X[np.isfinite(fn) & (fn < 1e-6)]
    cand = cand[np.abs(cand[:, 2]) <= 1.0 + 1e-6]
    symmetric = drives_cancel(params)
    if symmetric:
        cand = np.array([_gauge_fix(red, x) for x in cand]).reshape(-1, 3)
    # cheap pre-merge before polishing each candidate individually
    reps: list[np.ndarray] = []
    for x in cand:
        if all(np.linalg.norm(x - r) > 1e-5 for r in reps):
            reps.append(x)
    found: list[SteadySolution] = []
    for x in reps:
        try:
            sol = solve_from(params, red.state(x), tol=tol)
        except NoRootError:
            continue
        if abs(sol.state.jz) > 1.0 + 1e-9:
            continue
        if all(sol.state.distance(f.state) > dedup for f in found):
            found.append(sol)
    if not found:
        raise NoRootError("no steady state found on the start lattice")
    found.sort(key=lambda s: (s.state.jz, s.state.jm.real, s.state.jm.imag))
    return [SteadySolution(s.state, s.residual_norm, s.stability, s.eigenvalues, i,
                           s.symmetry_modes) for i, s in enumerate(found)]


def order_branch(solutions: Sequence[SteadySolution]) -> SteadySolution:
    """Pick the ordered-phase root: largest |jm|, then lowest jz."""
    return min(solutions, key=lambda s: (-round(abs(s.state.jm), 12), s.state.jz))


# -- continuation ------------------------------------------------------------


@dataclass(frozen=True)
class ParameterPath:
    """A one-parameter family of models, ``build(t)`` for t in [start, stop]."""

    name: str
    build: Callable[[float], ModelParams]
    start: float
    stop: float


@dataclass(frozen=True)
class BranchPoint:
    value: float
    solution: SteadySolution
    fold: bool = False


@dataclass
class Branch:
    name: str
    points: list = field(default_factory=list)
    stalled: bool = False

    @property
    def folds(self) -> list:
        return [p for p in self.points if p.fold]


def _point(params, x, t, norm, fold=False) -> BranchPoint:
    red = Reduced(params)
    st = red.state(x)
    stab, eig, nsym = _classify(params, st)
    return BranchPoint(t, SteadySolution(st, norm, stab, tuple(eig), symmetry_modes=nsym), fold)


def _extended_jacobian(path: ParameterPath, x, t, span):
    red = Reduced(path.build(t))
    F, J = red.evaluate(x)
    h = 1e-7 * max(1.0, abs(t))
    Fp, _ = Reduced(path.build(t + h)).evaluate(x)
    Fm, _ = Reduced(path.build(t - h)).evaluate(x)
    Ft = (Fp - Fm) / (2 * h)
    return F, np.column_stack([J, Ft])


def _tangent(path, x, t, span, ref=None):
    _, M = _extended_jacobian(path, x, t, span)
    tau = np.linalg.svd(M)[2][-1]
    if ref is not None and tau @ ref < 0:
        tau = -tau
    return tau


def continue_branch(path: ParameterPath, seed: SteadySolution, *,
                    step: float | None = None, max_step: float | None = None,
                    max_points: int = 20000, tol: float = NEWTON_TOL,
                    bounds: tuple[float, float] | None = None,
                    name: str = "branch") -> Branch:
    """Follow the root ``seed`` from ``path.start`` towards ``path.stop``.

    Natural-parameter steps with secant prediction are used while the
    branch is a graph over the parameter.  When the parameter component
    of the tangent gets small, or natural steps keep failing, the
    stepper switches to pseudo-arclength and can pass folds; points where
    the parameter direction reverses are flagged.  Leaving the parameter
    window (``bounds``, default the path interval) ends the branch with a
    point on the boundary.
    """
    lo, hi = sorted(bounds if bounds is not None else (path.start, path.stop))
    span = hi - lo
    branch = Branch(name)
    params0 = path.build(path.start)
    x = seed.state.to_array()[2:].copy()
    branch.points.append(BranchPoint(path.start, seed))
    if span == 0:
        return branch
    direction = 1.0 if path.stop > path.start else -1.0
    square = not (params0.spin_conserving or drives_cancel(params0))
    max_step = max_step or span / 100
    h = step or span / 200
    h_min = 1e-10 * span
    t = path.start
    x_prev = t_prev = None
    mode = "natural"
    tau = None
    if square:
        tau = _tangent(path, x, t, span)
        if tau[3] * direction < 0:
            tau = -tau

    while len(branch.points) < max_points:
        if mode == "natural":
            t_new = t + direction * h
            t_new = min(max(t_new, lo), hi)
            if x_prev is not None and t != t_prev:
                x_pred = x + (x - x_prev) * (t_new - t) / (t - t_prev)
            else:
                x_pred = x
            red = Reduced(path.build(t_new), gauge=0.0)
            xn, norm, ok = _newton(red, x_pred, tol=tol, max_iter=12)
            if ok and np.linalg.norm(xn - x) < 10 * max(h, max_step):
                if drives_cancel(red.params) and abs(complex(xn[0], xn[1])) > 0:
                    xn = _gauge_fix(red, xn)
                    norm = _full_norm(red, xn)
                x_prev, t_prev, x, t = x, t, xn, t_new
                branch.points.append(_point(red.params, x, t, norm))
                if t in (lo, hi) and t != path.start:
                    return branch
                h = min(h * 1.3, max_step)
                if square:
                    tau = _tangent(path, x, t, span, tau)
                    if abs(tau[3]) < 0.3:
                        mode = "arclength"
                continue
            h *= 0.5
            if h < h_min:
                if not square:
                    branch.stalled = True
                    return branch
                mode = "arclength"
                h = max(h_min * 100, 1e-4 * span)
            continue

        # pseudo-arclength predictor / corrector
        u = np.append(x, t)
        u_pred = u + h * tau
        v = u_pred.copy()
        ok = False
        for _ in range(15):
            if not lo - 0.5 * span <= v[3] <= hi + 0.5 * span:
                break
            F, M = _extended_jacobian(path, v[:3], v[3], span)
            G = np.append(F, tau @ (v - u_pred))
            if np.linalg.norm(F) < tol:
                ok = True
                break
            A = np.vstack([M, tau])
            try:
                v = v - np.linalg.solve(A, G)
            except np.linalg.LinAlgError:
                break
        if not ok or np.linalg.norm(v - u) > 3 * h:
            h *= 0.5
            if h < h_min:
                branch.stalled = True
                return branch
            continue
        t_new = v[3]
        if t_new < lo or t_new > hi:
            # leave the window: land exactly on the boundary
            edge = lo if t_new < lo else hi
            frac = (edge - t) / (t_new - t)
            red = Reduced(path.build(edge), gauge=0.0)
            xe, norm, ok = _newton(red, x + frac * (v[:3] - x), tol=tol, max_iter=20)
            if ok:
                branch.points.append(_point(red.params, xe, edge, norm))
            else:
                branch.stalled = True
            return branch
        new_tau = _tangent(path, v[:3], t_new, span, tau)
        fold = np.sign(new_tau[3]) != np.sign(tau[3])
        params = path.build(t_new)
        x_prev, t_prev = x, t
        x, t = v[:3], t_new
        branch.points.append(_point(params, x, t, _full_norm(Reduced(params), x), fold))
        tau = new_tau
        h = min(h * 1.3, max_step)
        if abs(tau[3]) > 0.6:
            mode = "natural"
            direction = float(np.sign(tau[3]))
            x_prev = t_prev = None
    branch.stalled = True
    return branch
