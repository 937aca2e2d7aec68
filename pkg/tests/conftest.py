"""Shared oracles for the test suite."""

import numpy as np
import pytest


def fd_grads(loss_fn, params, step=1e-5):
    """Central-difference gradients of ``loss_fn()`` w.r.t. every array in ``params``.

    ``params`` maps names to arrays that ``loss_fn`` reads; entries are
    perturbed in place and restored. Pass ``longdouble`` arrays to keep
    float64 cancellation out of the oracle.
    """
    out = {}
    for name, p in params.items():
        g = np.zeros(p.shape)
        h = p.dtype.type(step)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            lp = loss_fn()
            p[idx] = orig - h
            lm = loss_fn()
            p[idx] = orig
            g[idx] = float((lp - lm) / (2 * h))
        out[name] = g
    return out


def max_rel_err(analytic, numeric, floor=1e-8):
    worst = 0.0
    for name, n in numeric.items():
        a = np.asarray(analytic[name], dtype=np.float64)
        err = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(err.max(initial=0.0)))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
