"""Parameter space of the driven two-drive Tavis-Cummings model.

All drive amplitudes are stored scaled by ``sqrt(N)`` so that the
mean-field layer never sees the ensemble size.  Frequencies are plain
floats in a common, user-chosen unit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Mapping

REGIMES = ("hermitian", "lossy", "gain_balanced")

#: relative tolerance for the algebraic matching flags
MATCH_RTOL = 1e-12


class ModelError(ValueError):
    """Invalid model parameters or configuration."""


class DegenerateCouplingError(ModelError):
    pass


@dataclass(frozen=True)
class ModelParams:
    """One instance of the model.

    ``omega_a`` is the cavity drive and ``omega_j`` the collective
    ensemble drive, both divided by ``sqrt(N)``.  ``lam`` is the
    collective coupling (``lambda`` in config files).
    """

    delta_c: float
    delta_s: float
    lam: float
    omega_a: complex = 0j
    omega_j: complex = 0j
    kappa_c: float = 0.0
    kappa_g: float = 0.0
    gamma_perp: float = 0.0
    gamma_par: float = 0.0
    n_tls: int = 1000
    omega_c: float | None = None
    omega_s: float | None = None
    omega_d: float | None = None

    def __post_init__(self):
        for name in ("delta_c", "delta_s", "lam", "kappa_c", "kappa_g",
                     "gamma_perp", "gamma_par"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ModelError(f"{name} must be finite, got {v!r}")
        if self.delta_c <= 0 or self.delta_s <= 0:
            raise ModelError("detunings delta_c and delta_s must be > 0")
        if self.lam < 0:
            raise ModelError("coupling lambda must be >= 0")
        for name in ("kappa_c", "kappa_g", "gamma_perp", "gamma_par"):
            if getattr(self, name) < 0:
                raise ModelError(f"{name} must be >= 0")
        for name in ("omega_a", "omega_j"):
            v = complex(getattr(self, name))
            if not (math.isfinite(v.real) and math.isfinite(v.imag)):
                raise ModelError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if int(self.n_tls) != self.n_tls or self.n_tls < 1:
            raise ModelError("n_tls must be a positive integer")
        triple = (self.omega_c, self.omega_s, self.omega_d)
        if any(v is not None for v in triple):
            if any(v is None for v in triple):
                raise ModelError("omega_c, omega_s, omega_d must be given together")
            if (self.omega_c - self.omega_d != self.delta_c
                    or self.omega_s - self.omega_d != self.delta_s):
                raise ModelError("frequency triple inconsistent with detunings")

    @classmethod
    def from_frequencies(cls, omega_c: float, omega_s: float, omega_d: float,
                         **kwargs) -> "ModelParams":
        return cls(delta_c=omega_c - omega_d, delta_s=omega_s - omega_d,
                   omega_c=omega_c, omega_s=omega_s, omega_d=omega_d, **kwargs)

    @staticmethod
    def relaxation_rates(gamma_p: float, gamma_h: float) -> tuple[float, float]:
        """(gamma_perp, gamma_par) from single-emitter dephasing and decay."""
        if gamma_p < 0 or gamma_h < 0:
            raise ModelError("gamma_p and gamma_h must be >= 0")
        return gamma_h + 2.0 * gamma_p, 2.0 * gamma_h

    @property
    def kappa(self) -> float:
        """Effective cavity loss; negative when gain wins."""
        return self.kappa_c - self.kappa_g

    @property
    def is_rate_free(self) -> bool:
        return (self.kappa_c == 0 and self.kappa_g == 0
                and self.gamma_perp == 0 and self.gamma_par == 0)

    @property
    def spin_conserving(self) -> bool:
        # the collective spin length is a constant of motion of the flow
        return self.gamma_perp == 0 and self.gamma_par == 0

    def replace(self, **changes) -> "ModelParams":
        if "omega_c" not in changes and any(
                k in changes for k in ("delta_c", "delta_s")):
            changes.setdefault("omega_c", None)
            changes.setdefault("omega_s", None)
            changes.setdefault("omega_d", None)
        return replace(self, **changes)

    # -- flat key = value mapping -------------------------------------------

    def to_mapping(self) -> dict[str, object]:
        out: dict[str, object] = {}
        if self.omega_c is not None:
            out.update(omega_c=self.omega_c, omega_s=self.omega_s,
                       omega_d=self.omega_d)
        out.update(
            delta_c=self.delta_c, delta_s=self.delta_s, **{"lambda": self.lam},
            n_tls=int(self.n_tls),
            omega_a_re=self.omega_a.real, omega_a_im=self.omega_a.imag,
            omega_j_re=self.omega_j.real, omega_j_im=self.omega_j.imag,
            kappa_c=self.kappa_c, kappa_g=self.kappa_g,
            gamma_perp=self.gamma_perp, gamma_par=self.gamma_par,
        )
        return out

    @classmethod
    def from_mapping(cls, data: Mapping[str, object]) -> "ModelParams":
        unknown = set(data) - set(CONFIG_KEYS)
        if unknown:
            raise ModelError(f"unknown parameter keys: {sorted(unknown)}")
        d = {k: _number(k, v) for k, v in data.items()}
        kw: dict[str, object] = {}
        triple = [d.get(k) for k in ("omega_c", "omega_s", "omega_d")]
        if any(v is not None for v in triple):
            if any(v is None for v in triple):
                raise ModelError("omega_c, omega_s, omega_d must be given together")
            oc, os_, od = triple
            kw.update(omega_c=oc, omega_s=os_, omega_d=od)
            for key, val in (("delta_c", oc - od), ("delta_s", os_ - od)):
                if key in d and d[key] != val:
                    raise ModelError(f"{key}={d[key]!r} inconsistent with frequencies")
                d[key] = val
        for key in ("delta_c", "delta_s", "lambda"):
            if key not in d:
                raise ModelError(f"missing required key {key!r}")
        kw.update(delta_c=d["delta_c"], delta_s=d["delta_s"], lam=d["lambda"])
        if "n_tls" in d:
            n = d["n_tls"]
            if n != int(n):
                raise ModelError("n_tls must be an integer")
            kw["n_tls"] = int(n)
        kw["omega_a"] = complex(d.get("omega_a_re", 0.0), d.get("omega_a_im", 0.0))
        kw["omega_j"] = complex(d.get("omega_j_re", 0.0), d.get("omega_j_im", 0.0))
        for key in ("kappa_c", "kappa_g"):
            if key in d:
                kw[key] = d[key]
        if "gamma_p" in d or "gamma_h" in d:
            gperp, gpar = cls.relaxation_rates(d.get("gamma_p", 0.0),
                                               d.get("gamma_h", 0.0))
            for key, val in (("gamma_perp", gperp), ("gamma_par", gpar)):
                if key in d and d[key] != val:
                    raise ModelError(f"{key}={d[key]!r} inconsistent with gamma_p/gamma_h")
                d[key] = val
        for key in ("gamma_perp", "gamma_par"):
            if key in d:
                kw[key] = d[key]
        return cls(**kw)


CONFIG_KEYS = (
    "omega_c", "omega_s", "omega_d", "delta_c", "delta_s", "lambda", "n_tls",
    "omega_a_re", "omega_a_im", "omega_j_re", "omega_j_im",
    "kappa_c", "kappa_g", "gamma_perp", "gamma_par", "gamma_p", "gamma_h",
)


def _number(key, value) -> float:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    try:
        return float(str(value).strip())
    except ValueError:
        raise ModelError(f"{key}: not a number: {value!r}") from None


def parse_flat(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ModelError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ModelError(f"line {lineno}: empty key")
        if key in out:
            raise ModelError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def format_flat(data: Mapping[str, object]) -> str:
    lines = []
    for key, value in data.items():
        # repr gives the shortest string that round-trips a float
        lines.append(f"{key} = {value!r}" if isinstance(value, float)
                     else f"{key} = {value}")
    return "\n".join(lines) + "\n"


def load_config(path) -> ModelParams:
    with open(path, encoding="utf-8") as fh:
        return ModelParams.from_mapping(parse_flat(fh.read()))


def dump_config(params: ModelParams, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_flat(params.to_mapping()))


# -- derived quantities ----------------------------------------------------


def matching_ratio(params: ModelParams, regime: str) -> complex:
    """Drive ratio ``Omega_a / Omega_J`` at which the two drives cancel.

    ``lossy`` uses the effective loss ``kappa_c - kappa_g`` of ``params``;
    ``gain_balanced`` assumes the balancing gain rate regardless of the
    ``kappa_g`` actually stored.
    """
    if params.lam == 0:
        raise DegenerateCouplingError("matching ratio undefined for lambda = 0")
    if regime == "hermitian":
        return complex(params.delta_c / params.lam)
    if regime == "lossy":
        return complex(params.delta_c, -params.kappa) / params.lam
    if regime == "gain_balanced":
        return params.delta_c * complex(1.0, params.gamma_perp / params.delta_s) / params.lam
    raise ValueError(f"unknown regime {regime!r}")


def gain_balance_rate(params: ModelParams) -> float:
    """Gain rate that cancels ``delta_c*gamma_perp + delta_s*kappa``."""
    if params.delta_s == 0:
        raise ZeroDivisionError("delta_s = 0")
    return params.kappa_c + params.gamma_perp * params.delta_c / params.delta_s


def critical_coupling(params: ModelParams, regime: str = "hermitian") -> float:
    if regime == "hermitian":
        return math.sqrt(params.delta_s * params.delta_c)
    if regime == "gain_balanced":
        g = params.gamma_perp / params.delta_s
        return math.sqrt(params.delta_c * params.delta_s * (1.0 + g * g))
    raise ValueError(f"unknown regime {regime!r}")


def is_gain_balanced(params: ModelParams, rtol: float = MATCH_RTOL) -> bool:
    k0 = gain_balance_rate(params)
    return abs(params.kappa_g - k0) <= rtol * max(abs(k0), abs(params.kappa_c), 1e-300)


def impose_regime(params: ModelParams, regime: str, factor: complex = 1.0) -> ModelParams:
    """Return params whose ensemble drive satisfies ``regime`` matching.

    ``omega_a`` is kept fixed and ``omega_j`` is set so that
    ``omega_a / omega_j = factor * matching_ratio``.  For
    ``gain_balanced`` the gain rate is set to the balancing value and
    for ``hermitian`` every rate is zeroed.
    """
    if regime == "gain_balanced":
        params = params.replace(kappa_g=gain_balance_rate(params))
    elif regime == "hermitian":
        params = params.replace(kappa_c=0.0, kappa_g=0.0, gamma_perp=0.0, gamma_par=0.0)
    elif regime != "lossy":
        raise ValueError(f"unknown regime {regime!r}")
    ratio = factor * matching_ratio(params, regime)
    return params.replace(omega_j=params.omega_a / ratio)


@dataclass(frozen=True)
class EffectiveModel:
    alpha: complex
    residual_drive: complex
    lambda_crit: float
    kappa_eff: float
    matched: dict = field(default_factory=dict)


def displacement(params: ModelParams) -> complex:
    return -params.omega_a / complex(params.delta_c, -params.kappa)


def residual_drive(params: ModelParams) -> complex:
    return params.omega_j + params.lam * displacement(params)


def drives_cancel(params: ModelParams, rtol: float = MATCH_RTOL) -> bool:
    """Whether the residual ensemble drive vanishes up to rounding."""
    r = residual_drive(params)
    scale = max(abs(params.omega_j), abs(params.lam * displacement(params)))
    if scale == 0:
        return True
    return abs(r) <= rtol * scale


def build_effective(params: ModelParams, rtol: float = MATCH_RTOL) -> EffectiveModel:
    alpha = displacement(params)
    matched = {}
    for regime in REGIMES:
        if params.lam == 0:
            matched[regime] = False
            continue
        if params.omega_j == 0:
            matched[regime] = params.omega_a == 0
            continue
        target = matching_ratio(params, regime)
        ratio = params.omega_a / params.omega_j
        matched[regime] = abs(ratio - target) <= rtol * abs(target)
    if params.gamma_perp > 0 and is_gain_balanced(params):
        lc = critical_coupling(params, "gain_balanced")
    else:
        lc = critical_coupling(params, "hermitian")
    return EffectiveModel(alpha=alpha,
                          residual_drive=params.omega_j + params.lam * alpha,
                          lambda_crit=lc, kappa_eff=params.kappa, matched=matched)


def param_names() -> list[str]:
    return [f.name for f in fields(ModelParams)]
