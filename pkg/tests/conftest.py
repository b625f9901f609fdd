import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SIGMA2_C = np.pi * 1e-2
SIGMA2_R = np.pi * 1e-4
DB_25 = 24.9897000433602
DB_41 = 40.9897000433602


def rho_total(db: float, M: int = 2) -> float:
    return M * 10.0 ** (db / 10.0)


@pytest.fixture(scope="session")
def fig_noise():
    from combcap.channel import ChannelParams
    return ChannelParams(2, SIGMA2_C, SIGMA2_R)


_VERDICTS: list[str] = []


class _Recorder:
    def __call__(self, criterion: int, ok: bool, detail: str) -> None:
        line = f"CRITERION {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS.append(line)
        print(line)
        assert ok, line


@pytest.fixture(scope="session")
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    return _Recorder()


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
