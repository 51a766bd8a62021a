import numpy as np
import pytest
from hypothesis import settings

from stableparareal.spectral import SpectralField

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


def random_real_field(rng, max_mode, period=2.0 * np.pi, decay=0.0):
    """Hermitian coefficients with optional |l|^-decay envelope."""
    half = rng.standard_normal(max_mode + 1) + 1j * rng.standard_normal(max_mode + 1)
    half[0] = half[0].real
    half[1:] /= np.arange(1, max_mode + 1) ** decay
    return SpectralField(period, np.concatenate([np.conj(half[:0:-1]), half]))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


def report_criterion(number, passed, detail, elapsed):
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  ({elapsed:.1f} s)  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
