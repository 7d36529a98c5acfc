"""Figure programs, parameter sweeps and CSV export."""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace as dc_replace
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .analytic import OrderParameters, gain_balanced_order, hermitian_order
from .cumulant import CumulantState, solve_cumulant
from .model import (ModelParams, format_flat, gain_balance_rate, matching_ratio,
                    parse_flat)
from .steady import (Branch, BranchPoint, NoRootError, ParameterPath, SteadySolution,
                     continue_branch, find_all, solve_from)

CSV_HEADER = ["value", "jz", "jm_re", "jm_im", "a_re", "a_im", "n_phot", "F",
              "stability", "residual_norm", "fold"]
SWEEP_GRID = (4, 4, 4)
STABILITY_RANK = {"stable": 0, "marginal": 1, "unstable": 2}


class FigureError(ValueError):
    pass


# -- parameter programs ------------------------------------------------------


@dataclass(frozen=True)
class Case:
    """One curve of a figure: a base model plus a rule for the swept value.

    ``sweep`` is ``lambda_over_delta`` (lambda fixed, delta_c = delta_s =
    lambda / t) or ``delta_over_lambda`` (delta_c = delta_s = t * lambda),
    or the name of a ModelParams field set directly.  ``regime`` selects
    the drive-ratio formula, ``factor`` multiplies it and ``gain_factor``
    sets kappa_g to that multiple of the balancing rate (gain_balanced
    only).
    """

    name: str
    base: ModelParams
    sweep: str
    start: float
    stop: float
    points: int
    regime: str = "lossy"
    factor: float = 1.0
    gain_factor: float = 1.0
    method: str = "grid"

    def params(self, t: float) -> ModelParams:
        p = self.base
        if self.sweep == "lambda_over_delta":
            d = p.lam / t
            p = p.replace(delta_c=d, delta_s=d)
        elif self.sweep == "delta_over_lambda":
            d = t * p.lam
            p = p.replace(delta_c=d, delta_s=d)
        else:
            p = p.replace(**{self.sweep: t})
        if self.regime == "hermitian":
            p = p.replace(kappa_c=0.0, kappa_g=0.0, gamma_perp=0.0, gamma_par=0.0)
        elif self.regime == "gain_balanced":
            p = p.replace(kappa_g=self.gain_factor * gain_balance_rate(p))
        elif self.regime == "none":
            return p
        ratio = self.factor * matching_ratio(p, self.regime)
        return p.replace(omega_j=p.omega_a / ratio)

    def values(self) -> np.ndarray:
        if self.points == 1:
            return np.array([self.start])
        return np.linspace(self.start, self.stop, self.points)

    def metadata(self) -> dict[str, object]:
        meta = dict(self.base.to_mapping())
        meta.update({
            "run.case": self.name, "run.sweep": self.sweep, "run.start": self.start,
            "run.stop": self.stop, "run.points": self.points, "run.regime": self.regime,
            "run.factor": self.factor, "run.gain_factor": self.gain_factor,
            "run.method": self.method, "run.version": __version__,
        })
        return meta

    @classmethod
    def from_metadata(cls, meta: dict[str, str]) -> "Case":
        base = ModelParams.from_mapping({k: v for k, v in meta.items() if not k.startswith("run.")})
        return cls(name=meta["run.case"], base=base, sweep=meta["run.sweep"],
                   start=float(meta["run.start"]), stop=float(meta["run.stop"]),
                   points=int(meta["run.points"]), regime=meta["run.regime"],
                   factor=float(meta["run.factor"]), gain_factor=float(meta["run.gain_factor"]),
                   method=meta["run.method"])


@dataclass
class SweepResult:
    case: Case
    values: np.ndarray
    records: list = field(default_factory=list)
    branches: dict = field(default_factory=dict)
    overlay: list | None = None

    @property
    def sweep_param(self) -> str:
        return self.case.sweep

    @property
    def metadata(self) -> dict[str, object]:
        return self.case.metadata()


FIG2_BASE = ModelParams(delta_c=8.0, delta_s=8.0, lam=8.0, omega_a=1.0, kappa_c=1.0,
                        gamma_perp=1.0, gamma_par=0.1, n_tls=1000)


def figure_cases(figure_id: str, overrides: dict | None = None,
                 points: int | None = None) -> list[Case]:
    base = FIG2_BASE
    if overrides:
        unknown = set(overrides) - set(base.to_mapping())
        if unknown:
            raise FigureError(f"unknown override keys: {sorted(unknown)}")
        merged = dict(base.to_mapping())
        merged.update(overrides)
        base = ModelParams.from_mapping(merged)
    n = points or 501

    def lam_sweep(name, **kw):
        return Case(name, base, "lambda_over_delta", 0.5, 2.0, n, **kw)

    if figure_id in ("fig2", "fig3"):
        return [lam_sweep(f"{figure_id}_hermitian", regime="hermitian"),
                lam_sweep(f"{figure_id}_gain_balanced", regime="gain_balanced")]
    if figure_id == "fig4a":
        return [lam_sweep(f"fig4a_drive{f:.1f}", regime="gain_balanced", factor=f)
                for f in (1.0, 1.1, 1.2)]
    if figure_id == "fig4b":
        return [lam_sweep(f"fig4b_gain{g:.1f}", regime="gain_balanced", gain_factor=g)
                for g in (1.0, 1.2, 1.4)]
    if figure_id in ("figS1a", "figS1b"):
        f = 1.0 if figure_id == "figS1a" else 1.2
        lossy = base.replace(kappa_g=0.0)
        return [Case(figure_id, lossy, "lambda_over_delta", 0.5, 2.0, points or 151,
                     regime="lossy", factor=f, method="cumulant")]
    s2 = {"figS2a": 0.87, "figS2b": 0.77, "figS2c": 0.7, "figS2d": 0.6}
    if figure_id in s2:
        lossy = base.replace(kappa_g=0.0)
        return [Case(figure_id, lossy, "delta_over_lambda", 0.2, 2.5, points or 116,
                     regime="lossy", factor=s2[figure_id], method="continuation")]
    raise FigureError(f"unknown figure id {figure_id!r}")


FIGURES = ("fig2", "fig3", "fig4a", "fig4b", "figS1a", "figS1b",
           "figS2a", "figS2b", "figS2c", "figS2d")


# -- sweep engines -----------------------------------------------------------


def select_root(roots: Sequence[SteadySolution]) -> SteadySolution:
    """Representative root: best stability class, then largest |jm|, then lowest jz."""
    return min(roots, key=lambda s: (STABILITY_RANK[s.stability],
                                     -round(abs(s.state.jm), 10), s.state.jz))


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _overlay(case: Case, t: float) -> OrderParameters | None:
    p = case.params(t)
    if case.factor != 1.0 or case.gain_factor != 1.0:
        return None
    if case.regime == "hermitian":
        return hermitian_order(p)
    if case.regime == "gain_balanced":
        return gain_balanced_order(p)
    return None


def grid_sweep(case: Case, threads: int = 1, grid=SWEEP_GRID) -> SweepResult:
    values = case.values()
    records = _map(lambda t: find_all(case.params(t), grid), values, threads)
    picked = [BranchPoint(float(t), select_root(r)) for t, r in zip(values, records)]
    result = SweepResult(case, values, records, {"order": picked})
    result.overlay = [_overlay(case, t) for t in values]
    return result


def cumulant_sweep(case: Case, threads: int = 1, grid=SWEEP_GRID) -> SweepResult:
    result = grid_sweep(case, threads, grid)

    def lift(bp: BranchPoint) -> BranchPoint:
        p = case.params(bp.value)
        sol = solve_cumulant(p, CumulantState.factorized(bp.solution.state))
        st = sol.state.base
        return BranchPoint(bp.value, SteadySolution(st, sol.residual_norm, "unclassified", ()))

    result.branches = {"meanfield": result.branches["order"],
                       "cumulant": _map(lift, result.branches["order"], threads)}
    return result


def _near_branch(branch: Branch, t: float, state, tol: float) -> bool:
    pts = branch.points
    y = state.to_array()
    for p, q in zip(pts, pts[1:]):
        a, b = p.value, q.value
        if min(a, b) - 1e-12 <= t <= max(a, b) + 1e-12:
            w = 0.0 if a == b else (t - a) / (b - a)
            guess = (1 - w) * p.solution.state.to_array() + w * q.solution.state.to_array()
            if np.linalg.norm(guess - y) < tol:
                return True
    if len(pts) == 1 and abs(pts[0].value - t) < 1e-12:
        return pts[0].solution.state.distance(state) < tol
    return False


def _join(backward: Branch, forward: Branch, name: str) -> Branch:
    pts = list(reversed(backward.points)) + forward.points[1:]
    return Branch(name, pts, backward.stalled or forward.stalled)


def continuation_sweep(case: Case, threads: int = 1, grid=(6, 6, 6),
                       max_step: float | None = None) -> SweepResult:
    """All branches over the window: continuation from the top end plus
    any disconnected pieces found by root enumeration on the value grid."""
    values = case.values()
    records = _map(lambda t: find_all(case.params(t), grid), values, threads)
    lo, hi = min(case.start, case.stop), max(case.start, case.stop)
    span = hi - lo
    max_step = max_step or span / 300

    def path(a, b):
        return ParameterPath(case.sweep, case.params, a, b)

    branches: list[Branch] = []
    top = int(np.argmax(values))
    seed = min(records[top], key=lambda s: s.state.jz)
    branches.append(continue_branch(path(values[top], values[np.argmin(values)]), seed,
                                    max_step=max_step, name="branch0"))
    for t, roots in sorted(zip(values, records), key=lambda x: -x[0]):
        for r in roots:
            if any(_near_branch(b, t, r.state, 1e-3) for b in branches):
                continue
            name = f"branch{len(branches)}"
            down = continue_branch(path(t, lo), r, max_step=max_step, bounds=(lo, hi),
                                   name=name)
            up = continue_branch(path(t, hi), r, max_step=max_step, bounds=(lo, hi),
                                 name=name)
            branches.append(_join(down, up, name))
    return SweepResult(case, values, records, {b.name: b.points for b in branches})


def run_case(case: Case, threads: int = 1) -> SweepResult:
    if case.method == "grid":
        return grid_sweep(case, threads)
    if case.method == "cumulant":
        return cumulant_sweep(case, threads)
    if case.method == "continuation":
        return continuation_sweep(case, threads)
    raise FigureError(f"unknown method {case.method!r}")


def run_figure(figure_id: str, overrides: dict | None = None, *, points: int | None = None,
               threads: int = 1) -> list[SweepResult]:
    return [run_case(c, threads) for c in figure_cases(figure_id, overrides, points)]


# -- export ------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def branch_rows(points: Sequence[BranchPoint]) -> list[list[str]]:
    rows = []
    for bp in points:
        st = bp.solution.state
        rows.append([_fmt(bp.value), _fmt(st.jz), _fmt(st.jm.real), _fmt(st.jm.imag),
                     _fmt(st.a_mean.real), _fmt(st.a_mean.imag), _fmt(st.n_phot),
                     _fmt(st.f_quantity), bp.solution.stability,
                     _fmt(bp.solution.residual_norm), "1" if bp.fold else "0"])
    return rows


def export(result: SweepResult, directory) -> list[str]:
    """Write ``<case>.meta`` plus ``<case>__<branch>.csv`` per branch."""
    os.makedirs(directory, exist_ok=True)
    stem = os.path.join(directory, result.case.name)
    written = [stem + ".meta"]
    with open(stem + ".meta", "w", encoding="utf-8") as fh:
        fh.write(format_flat(result.metadata))
    for name, points in result.branches.items():
        path = f"{stem}__{name}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            w.writerows(branch_rows(points))
        written.append(path)
    return written


def read_metadata(path) -> Case:
    with open(path, encoding="utf-8") as fh:
        return Case.from_metadata(parse_flat(fh.read()))


def read_branch(path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# -- critical exponents ------------------------------------------------------

OBSERVABLES = {
    "jz": lambda s: s.state.jz,
    "jm": lambda s: abs(s.state.jm),
    "n_phot": lambda s: s.state.n_phot,
}


def threshold_case(regime: str, base: ModelParams = FIG2_BASE) -> Case:
    """Model with lambda swept directly and detunings placing lambda_c at base.lam."""
    lam = base.lam
    if regime == "hermitian":
        d = lam
    elif regime == "gain_balanced":
        # lambda_c^2 = d^2 + gamma_perp^2 when delta_c = delta_s = d
        d = math.sqrt(lam * lam - base.gamma_perp ** 2)
    else:
        raise FigureError(f"no threshold in regime {regime!r}")
    return Case(f"threshold_{regime}", base.replace(delta_c=d, delta_s=d), "lam",
                lam, 2 * lam, 2, regime=regime)


def exponent_study(regime: str, observable: str, *, points: int = 12,
                   eps_range=(3e-6, 3e-4), base: ModelParams = FIG2_BASE):
    """Solver samples of ``observable`` just above threshold and their power-law fit."""
    from .analytic import fit_critical_exponent
    from .model import critical_coupling

    if observable not in OBSERVABLES:
        raise FigureError(f"unknown observable {observable!r}")
    case = threshold_case(regime, base)
    lc = critical_coupling(case.params(base.lam), regime)
    get = OBSERVABLES[observable]
    at_c = get(select_root(find_all(case.params(lc), SWEEP_GRID)))
    lams = lc * (1 + np.geomspace(*eps_range, points))
    samples = [(float(l), get(select_root(find_all(case.params(l), SWEEP_GRID)))) for l in lams]
    return fit_critical_exponent(samples, lc, at_c), samples
