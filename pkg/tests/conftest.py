import numpy as np
import pytest

from fqreg.simulate import DesignSpec, gen_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def design_data():
    """One draw of the alpha = 2, normal-error design with n = 100."""
    return gen_dataset(DesignSpec(alpha=2.0, n=100, seed=11))


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_record():
    """Append one ``PASS``/``FAIL`` line per acceptance criterion to the session summary."""

    def record(number, title, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} | {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
