import sys

import numpy as np
import pytest
from scipy.special import i0

from homogasym.torus import TorusField

TWO_PI = 2 * np.pi
ETA_RATCHET = 1.0 / i0(1.0) ** 2


@pytest.fixture
def ratchet_drift():
    """α1 = -2π cos 2πz, the gradient drift of ψ = sin 2πz."""
    return TorusField.from_function(lambda z: -TWO_PI * np.cos(TWO_PI * z), 1, 256)


def random_band_limited(dim, m, kmax, seed, amp=1.0):
    rng = np.random.default_rng(seed)
    axes = TorusField.coordinates(dim, m)
    y = np.meshgrid(*axes, indexing="ij")
    comps = []
    for _ in range(dim):
        val = np.zeros((m,) * dim)
        for _ in range(6):
            k = rng.integers(-kmax, kmax + 1, size=dim)
            if not k.any():
                continue
            ph = rng.uniform(0, TWO_PI)
            val += amp * rng.uniform(-1, 1) * np.cos(sum(TWO_PI * ki * yi for ki, yi in zip(k, y)) + ph)
        comps.append(val)
    return TorusField(np.stack(comps), dim)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(mod.LINES):
        terminalreporter.write_line(mod.LINES[num])
