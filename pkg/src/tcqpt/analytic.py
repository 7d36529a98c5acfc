"""Closed-form order parameters and critical-exponent fits.

Both phases are covered for the Hermitian model and for the
gain-balanced model under drive matching.  ``jm`` is reported real and
non-negative (the phase of the broken-symmetry branch is a gauge choice).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .model import ModelParams, critical_coupling

EXCLUDE_REL = 1e-6


@dataclass(frozen=True)
class OrderParameters:
    jz: float
    jm: complex
    a_mean: complex
    n_phot: float
    f_quantity: float


def _order(jz, jm, a_mean) -> OrderParameters:
    return OrderParameters(jz, complex(jm), a_mean, abs(a_mean) ** 2, jm * jm + jz * jz)


def hermitian_order(params: ModelParams, lam: float | None = None) -> OrderParameters:
    """Hermitian mean-field solution at coupling ``lam`` (default ``params.lam``)."""
    lam = params.lam if lam is None else lam
    lc = critical_coupling(params, "hermitian")
    if lam < lc:
        jz, jm = -1.0, 0.0
    else:
        r = (lc / lam) ** 2
        jz, jm = -r, math.sqrt(max(0.0, 1.0 - r * r))
    a = -(lam * jm / 2 + params.omega_a) / params.delta_c
    return _order(jz, jm, a)


def gain_balanced_order(params: ModelParams, lam: float | None = None) -> OrderParameters:
    """Gain-balanced solution; falls back to the Hermitian form when gamma_perp = 0."""
    lam = params.lam if lam is None else lam
    if params.gamma_perp == 0:
        return hermitian_order(params, lam)
    lc = critical_coupling(params, "gain_balanced")
    if lam < lc:
        jz, jm = -1.0, 0.0
    else:
        r = (lc / lam) ** 2
        jz = -r
        jm = (lc / lam) * math.sqrt(max(0.0, (1.0 - r) * params.gamma_par / params.gamma_perp))
    den = params.delta_c * complex(1.0, params.gamma_perp / params.delta_s)
    a = -(lam * jm / 2 + params.omega_a) / den
    return _order(jz, jm, a)


def f_closed_form(params: ModelParams, lam: float | None = None) -> float:
    """Spin-length measure of the gain-balanced solution in closed form."""
    lam = params.lam if lam is None else lam
    lc = critical_coupling(params, "gain_balanced")
    if lam < lc:
        return 1.0
    r = (lc / lam) ** 2
    return r * (1.0 - r) * params.gamma_par / params.gamma_perp + r * r


def _order_fn(regime):
    if regime == "hermitian":
        return hermitian_order, "hermitian"
    if regime == "gain_balanced":
        return gain_balanced_order, "gain_balanced"
    raise ValueError(f"unknown regime {regime!r}")


def photon_number_variation(params: ModelParams, lam: float, regime: str = "hermitian") -> float:
    """``n_phot(lam) - n_phot(lambda_c)`` from the exact branch formulas."""
    fn, reg = _order_fn(regime)
    if reg == "gain_balanced" and params.gamma_perp == 0:
        reg = "hermitian"
    lc = critical_coupling(params, reg)
    if lam < lc:
        return 0.0
    return fn(params, lam).n_phot - fn(params, lc).n_phot


def photon_variation_amplitude(params: ModelParams, regime: str = "hermitian") -> float:
    """Leading coefficient of ``delta n ~ A (lam - lambda_c)^(1/2)``; real drive only."""
    if params.omega_a.imag != 0:
        raise ValueError("leading-order amplitude assumes a real cavity drive")
    om = params.omega_a.real
    if regime == "hermitian" or params.gamma_perp == 0:
        lc = critical_coupling(params, "hermitian")
        return 2 * om * math.sqrt(lc) / params.delta_c ** 2
    if regime != "gain_balanced":
        raise ValueError(f"unknown regime {regime!r}")
    lc = critical_coupling(params, "gain_balanced")
    g = params.gamma_perp / params.delta_s
    return om * math.sqrt(2 * lc * params.gamma_par / params.gamma_perp) / (
        params.delta_c ** 2 * (1 + g * g))


@dataclass(frozen=True)
class ExponentFit:
    exponent: float
    amplitude: float
    r_squared: float
    n_used: int

    def __iter__(self):
        return iter((self.exponent, self.amplitude, self.r_squared))


def fit_critical_exponent(samples: Iterable[tuple[float, float]], lambda_c: float,
                          at_critical: float, *, min_samples: int = 8) -> ExponentFit:
    """Power-law fit ``|obs - obs(lambda_c)| = A (lam - lambda_c)^nu``.

    ``at_critical`` is the observable at ``lambda_c``.  Points closer than
    ``1e-6 lambda_c`` to threshold and zero differences are dropped.
    """
    data = np.asarray(list(samples), dtype=float).reshape(-1, 2)
    if len(data) < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {len(data)}")
    lam, obs = data[:, 0], data[:, 1]
    if np.any(lam <= lambda_c):
        raise ValueError("samples must lie above the critical coupling")
    dl = lam - lambda_c
    dy = np.abs(obs - at_critical)
    keep = (dl >= EXCLUDE_REL * lambda_c) & (dy > 0) & np.isfinite(dy)
    if keep.sum() < 4:
        raise ValueError("fewer than 4 usable samples after filtering")
    x, y = np.log(dl[keep]), np.log(dy[keep])
    slope, icept = np.polyfit(x, y, 1)
    pred = slope * x + icept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return ExponentFit(float(slope), float(math.exp(icept)), r2, int(keep.sum()))
