import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from v2g_tradeoff.degradation import BatteryPackSpec, CellDegradationParams
from v2g_tradeoff.equilibrium import GameInstance
from v2g_tradeoff.session import SessionConfig, assign_intervals
from v2g_tradeoff.studies.config import load_config
from v2g_tradeoff.studies.runners import reference_instance

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def default_config(tmp_path_factory):
    return load_config(overrides={"out": str(tmp_path_factory.mktemp("out"))}, environ={})


@pytest.fixture(scope="session")
def reference(default_config) -> GameInstance:
    return reference_instance(default_config)


TOY_ALPHA = np.array([0.3, 0.1, 0.4, 0.2])


def toy_session(alpha=TOY_ALPHA, **kw) -> SessionConfig:
    """Four one-hour intervals, unit efficiency, integer-friendly bounds."""
    base = dict(T=4, delta_t=1.0, P_min=-10.0, P_max=10.0, E_min=10.0, E_max=50.0, E_0=20.0,
                E_des=30.0, epsilon=1.0, eta_avg=1.0, alpha=alpha, pack=BatteryPackSpec())
    base.update(kw)
    return SessionConfig(**base)


def toy_instance(w=2, session=None, B1=None, B2_hat=None) -> GameInstance:
    """Degradation weights comparable to the tariff (about 0.01 EUR/kW^2)."""
    session = session or toy_session()
    B1 = np.array([1.0e-3, 1.2e-3, 0.9e-3, 1.1e-3]) if B1 is None else B1
    B2_hat = np.array([650.0, 600.0, 700.0, 620.0]) if B2_hat is None else B2_hat
    return GameInstance(session, assign_intervals(session.alpha, w), B1, B2_hat, 1.0e-3,
                        CellDegradationParams())


@pytest.fixture
def toy():
    return toy_instance()
