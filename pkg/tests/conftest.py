import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []


def random_chain(n, rng, density=1.0, symmetric_mask=False, diag=0.0):
    """Random mixing column-stochastic matrix with a guaranteed positive diagonal and cycle."""
    a = rng.uniform(0.05, 1.0, size=(n, n)) * (rng.uniform(size=(n, n)) < density)
    # a cycle keeps the chain irreducible whatever the sparsity
    idx = np.arange(n)
    a[(idx + 1) % n, idx] = rng.uniform(0.2, 1.0, size=n)
    if symmetric_mask:
        a[idx, (idx + 1) % n] = rng.uniform(0.2, 1.0, size=n)
        a = a * ((a > 0) & (a.T > 0))
    a[idx, idx] += rng.uniform(0.05, 1.0, size=n) + diag
    return a / a.sum(axis=0)


def random_valid_p(m, rng, mask=None):
    """Random unit-norm perturbation with zero column sums on the support of ``m``."""
    a = np.asarray(m.entries if hasattr(m, "entries") else m)
    sup = a > 0 if mask is None else mask
    p = rng.standard_normal(a.shape) * sup
    counts = sup.sum(axis=0)
    p -= sup * (p.sum(axis=0) / np.maximum(counts, 1))
    return p / np.linalg.norm(p)


def record(label: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def sample_feasible(a, u, k, rng, measure_preserving=False):
    """``k`` random unit-norm feasible perturbations, by least-squares projection."""
    rows, cols = np.nonzero(a.T)
    rows, cols = cols, rows
    n = a.shape[0]
    z = rng.standard_normal((rows.size, k))
    cons = np.zeros((n, rows.size))
    cons[cols, np.arange(rows.size)] = 1.0
    if measure_preserving:
        b = np.zeros((n, rows.size))
        b[rows, np.arange(rows.size)] = u[cols]
        cons = np.vstack([cons, b])
    z -= np.linalg.pinv(cons) @ (cons @ z)
    z /= np.linalg.norm(z, axis=0)
    out = np.zeros((k, n, n))
    out[:, rows, cols] = z.T
    return out
