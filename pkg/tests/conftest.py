"""Shared model builders.

The reference setting is a four-tenor, half-year grid with a one-factor
driver carrying three jump atoms; the same curve feeds all three families.
"""

import numpy as np
import pytest

from liborforge import (
    AffineDriverSpec,
    AffineFunctional,
    AtomicJumpMeasure,
    InitialCurve,
    LocalCharacteristics,
    ModelSpec,
    TenorStructure,
    VolatilityStructure,
    build_affine_model,
    build_fpm_model,
    build_lmm_model,
)

RATES = (0.03, 0.035, 0.04)
FIRST_PRICE = 0.99


def tenor4():
    return TenorStructure.uniform(4, 0.5)


def curve4():
    return InitialCurve.from_rates(tenor4(), FIRST_PRICE, RATES)


def levy_driver(horizon=2.0, diffusion=1.0, jumps=True):
    atoms = AtomicJumpMeasure([[0.5], [-0.4], [0.2]], [0.6, 0.8, 1.0]) if jumps else None
    return LocalCharacteristics.constant(horizon, [0.0], [[diffusion]], atoms)


def flat_vol(vol):
    return VolatilityStructure.flat(tenor4(), [[vol]] * 3)


def lmm_model(vol=0.3, **kw):
    return build_lmm_model(curve4(), levy_driver(**kw), flat_vol(vol))


def fpm_model(vol=0.3, **kw):
    return build_fpm_model(curve4(), levy_driver(**kw), flat_vol(vol))


def affine_driver():
    return AffineDriverSpec(0.5, -0.5, 0.3,
                            AtomicJumpMeasure([0.2, 0.5], [0.5, 0.2]),
                            AtomicJumpMeasure([0.3], [0.4]))


def constant_model(driver, values):
    """Terminal-family model with constant functionals ``g^k = values[k-1]``."""
    n = len(values) + 1
    tenor = TenorStructure.uniform(n, 0.5)
    d = driver.dimension
    funcs = [AffineFunctional(v, np.zeros(d), lipschitz_bound=1.0) for v in values]
    prices = np.exp(np.append(values, 0.0))
    curve = InitialCurve(tenor, prices * 0.9)
    return ModelSpec(tenor, driver, "fpm", funcs, curve)


@pytest.fixture(scope="session")
def lmm():
    return lmm_model()


@pytest.fixture(scope="session")
def fpm():
    return fpm_model()


@pytest.fixture(scope="session")
def affine():
    return build_affine_model(curve4(), affine_driver())


# one line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
