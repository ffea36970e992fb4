import numpy as np
import pytest

from ccvb.queueing import QueueDataset

ACCEPTANCE_LINES = []


def record(criterion: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def dataset_from(gaps, services) -> QueueDataset:
    """Single-server FCFS dataset with the given interarrival and service times."""
    T = np.cumsum(gaps)
    S = np.empty_like(T)
    E = np.empty_like(T)
    free = 0.0
    for i, (t, s) in enumerate(zip(T, services)):
        S[i] = max(t, free)
        E[i] = S[i] + s
        free = E[i]
    return QueueDataset(T, S, E)


@pytest.fixture
def exact_rate_data():
    # lambda_hat = 16 / 1.0, mu_hat = 16 / 4.0, both exact in binary
    return dataset_from(np.full(16, 0.0625), np.full(16, 0.25))
