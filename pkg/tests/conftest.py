import math

import pytest

from tcqpt.model import ModelParams, impose_regime

_LINES: list[str] = []


def fig2_params(ratio: float, regime: str = "gain_balanced", factor: float = 1.0,
                delta_s_scale: float = 1.0) -> ModelParams:
    """lambda = 8, Omega_a = 1, kappa_c = gamma_perp = 1, gamma_par = 0.1, x = lambda/delta_c."""
    d = 8.0 / ratio
    base = ModelParams(delta_c=d, delta_s=d * delta_s_scale, lam=8.0, omega_a=1.0,
                       kappa_c=1.0, gamma_perp=1.0, gamma_par=0.1)
    return impose_regime(base, regime, factor)


def s2_params(x: float, factor: float) -> ModelParams:
    """Passive cavity, delta_c = delta_s = x * lambda, lossy drive ratio times factor."""
    base = ModelParams(delta_c=8.0 * x, delta_s=8.0 * x, lam=8.0, omega_a=1.0,
                       kappa_c=1.0, gamma_perp=1.0, gamma_par=0.1)
    return impose_regime(base, "lossy", factor)


@pytest.fixture
def report():
    def emit(criterion: int, ok: bool, detail: str):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}"
        print(line)
        _LINES.append(line)
        return ok
    return emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


SQRT63 = math.sqrt(63.0)
