"""Second-order cumulant steady states.

Keeps the correlators <Jz a> and <a J+> as unknowns, scaled as

    c_za = <Jz a> / ((N/2) sqrt(N)),   c_ap = <a J+> / (sqrt(N) (N/2)),

and factorizes every remaining product.  In these units the system is
free of N; ``n_tls`` is carried along for bookkeeping only.

Scaled equations (k = kappa_c - kappa_g, wJ = Omega_J/sqrt(N),
wA = Omega_a/sqrt(N), <a^+ J-> = conj(c_ap)):

    (dc - i k) a + lam m/2 + wA = 0
    (ds - i gp) m - 2 lam c_za - 2 z wJ = 0
    [lam (c_ap - c_ap*) + wJ m* - wJ* m - i gz (1 + z)] / i = 0
    [dc - i(k + gz)] c_za - i gz a + lam (z m/2 - c_ap* a + c_ap a)
        + wJ c_ap - wJ* a m + wA z = 0
    [(dc - ds) - i(k + gp)] c_ap + lam |m|^2/2 + 2 lam c_za a*
        + wA m* + 2 wJ* c_za = 0
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelParams
from .steady import MeanFieldState, NoRootError, find_all, order_branch, solve_from

CUMULANT_TOL = 1e-10


@dataclass(frozen=True)
class CumulantState:
    base: MeanFieldState
    c_za: complex
    c_ap: complex

    @classmethod
    def factorized(cls, state: MeanFieldState) -> "CumulantState":
        return cls(state, state.jz * state.a_mean, state.a_mean * state.jm.conjugate())

    @classmethod
    def from_array(cls, y) -> "CumulantState":
        return cls(MeanFieldState.from_array(y[:5]), complex(y[5], y[6]), complex(y[7], y[8]))

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.base.to_array(),
                               [self.c_za.real, self.c_za.imag, self.c_ap.real, self.c_ap.imag]])

    @property
    def closure_gap(self) -> float:
        """Distance of the correlators from their factorized values."""
        b = self.base
        return float(np.hypot(abs(self.c_za - b.jz * b.a_mean),
                              abs(self.c_ap - b.a_mean * b.jm.conjugate())))


@dataclass(frozen=True)
class CumulantSolution:
    state: CumulantState
    residual_norm: float
    iterations: int


def cumulant_residual(params: ModelParams, state: CumulantState) -> np.ndarray:
    """Nine real residuals: three first-moment equations, two correlator equations."""
    p = params
    a, m, z = state.base.a_mean, state.base.jm, state.base.jz
    cza, cap = state.c_za, state.c_ap
    wJ, wA = p.omega_j, p.omega_a
    k = p.kappa
    r1 = complex(p.delta_c, -k) * a + 0.5 * p.lam * m + wA
    r2 = complex(p.delta_s, -p.gamma_perp) * m - 2 * p.lam * cza - 2 * z * wJ
    lhs3 = (p.lam * (cap - cap.conjugate()) + wJ * m.conjugate() - wJ.conjugate() * m
            - 1j * p.gamma_par * (1 + z))
    r3 = lhs3 / 1j
    r4 = (complex(p.delta_c, -(k + p.gamma_par)) * cza - 1j * p.gamma_par * a
          + p.lam * (0.5 * z * m - cap.conjugate() * a + cap * a)
          + wJ * cap - wJ.conjugate() * a * m + wA * z)
    r5 = (complex(p.delta_c - p.delta_s, -(k + p.gamma_perp)) * cap
          + 0.5 * p.lam * abs(m) ** 2 + 2 * p.lam * cza * a.conjugate()
          + wA * m.conjugate() + 2 * wJ.conjugate() * cza)
    return np.array([r1.real, r1.imag, r2.real, r2.imag, r3.real,
                     r4.real, r4.imag, r5.real, r5.imag])


def _jacobian(params, y):
    # the residual is at most quadratic in y, so central differences are
    # exact up to rounding for any step
    h = 1e-3
    J = np.empty((9, 9))
    for j in range(9):
        e = np.zeros(9)
        e[j] = h
        J[:, j] = (cumulant_residual(params, CumulantState.from_array(y + e))
                   - cumulant_residual(params, CumulantState.from_array(y - e))) / (2 * h)
    return J


def solve_cumulant(params: ModelParams, initial: CumulantState | None = None, *,
                   tol: float = CUMULANT_TOL, max_iter: int = 100) -> CumulantSolution:
    """Newton on the nine-real system.

    The default start is the factorized lift of the ordered mean-field
    root (largest |jm|).
    """
    if initial is None:
        initial = CumulantState.factorized(order_branch(find_all(params, (5, 5, 4))).state)
    y = initial.to_array()
    if not np.all(np.isfinite(y)):
        raise ValueError("initial state is not finite")
    F = cumulant_residual(params, initial)
    fn = float(np.linalg.norm(F))
    for it in range(max_iter + 1):
        if fn < tol:
            return CumulantSolution(CumulantState.from_array(y), fn, it)
        step = np.linalg.lstsq(_jacobian(params, y), -F, rcond=None)[0]
        t = 1.0
        while t > 1e-6:
            yn = y + t * step
            Fn = cumulant_residual(params, CumulantState.from_array(yn))
            if np.linalg.norm(Fn) < (1 - 1e-4 * t) * fn:
                break
            t *= 0.5
        y, F = yn, Fn
        fn = float(np.linalg.norm(F))
    raise NoRootError(f"cumulant Newton did not converge (residual {fn:.3e})",
                      last=CumulantState.from_array(y))


def compare_with_meanfield(params: ModelParams, seed: MeanFieldState | None = None):
    """Solve both closures from the same mean-field root; returns (mf, cumulant)."""
    if seed is None:
        mf = order_branch(find_all(params, (5, 5, 4)))
    else:
        mf = solve_from(params, seed)
    cum = solve_cumulant(params, CumulantState.factorized(mf.state))
    return mf, cum
