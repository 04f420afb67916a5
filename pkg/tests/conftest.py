import numpy as np
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def random_hermitian(rng, n=4, scale=3.0):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (a + a.conj().T) / 2


def random_density(rng, n=4, rank=None):
    k = rank or n
    a = rng.normal(size=(n, k)) + 1j * rng.normal(size=(n, k))
    r = a @ a.conj().T
    return r / np.trace(r).real


ACCEPTANCE = {}  # criterion number -> report line, filled by test_acceptance


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
