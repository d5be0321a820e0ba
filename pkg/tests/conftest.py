import math

import numpy as np
import pytest

from twofluid.closure import (
    CapillaryLaw,
    ModelCoefficients,
    PhaseLaw,
    Viscosities,
    derive_coefficients,
    solve_equilibrium,
)


def canonical_laws(fp=1.0):
    return PhaseLaw(2.0, 2.0), CapillaryLaw(0.0, fp), Viscosities(2.0, 2.0, 0.0, 0.0)


def canonical_coeffs(fp=1.0):
    phase, cap, visc = canonical_laws(fp)
    return derive_coefficients(solve_equilibrium(phase, cap), visc, cap)


def abstract_coeffs(beta2=2.0):
    return ModelCoefficients.from_betas(1.0, beta2, 1.0, 1.0, 1.0, 1.0)


def random_laws(rng):
    """Draw physically valid laws with f'(1) > 0 and alpha4 > 0."""
    while True:
        phase = PhaseLaw(rng.uniform(1.0, 3.0), rng.uniform(1.0, 3.0))
        cap = CapillaryLaw(rng.uniform(-1.0, 1.0), rng.uniform(0.05, 1.5),
                           rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5))
        mu_p, mu_m = rng.uniform(0.2, 3.0, size=2)
        visc = Viscosities(mu_p, mu_m, rng.uniform(-0.5, 1.0) * mu_p, rng.uniform(-0.5, 1.0) * mu_m)
        eq = solve_equilibrium(phase, cap)
        a4 = eq.c2 * eq.rho_plus / eq.rho_minus - eq.c2 * eq.alpha_plus * cap.fp / eq.s2_plus
        if a4 > 0.05 * eq.c2:
            return phase, cap, visc


@pytest.fixture
def canonical():
    return canonical_coeffs()


@pytest.fixture
def abstract():
    return abstract_coeffs()


SQRT2M1 = math.sqrt(2.0) - 1.0


def smooth_field(grid, rng, amp, kmax=2, terms=6):
    """Real trigonometric polynomial with integer wavenumbers up to ``kmax``."""
    x, y, z = grid.coords
    out = np.zeros(grid.shape)
    for _ in range(terms):
        k = rng.integers(-kmax, kmax + 1, 3)
        ph = rng.uniform(0, 2 * np.pi)
        out += amp * rng.standard_normal() * np.cos(
            2 * np.pi * (k[0] * x + k[1] * y + k[2] * z) / grid.box + ph)
    return out


def smooth_state(grid, rng, amp, kmax=2):
    from twofluid.state import State

    vec = lambda: np.stack([smooth_field(grid, rng, amp, kmax) for _ in range(3)])
    return State(grid, smooth_field(grid, rng, amp, kmax), vec(), smooth_field(grid, rng, amp, kmax), vec())


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
