import numpy as np
import pytest

from linkmi.imputation import LinkedDataset


def synthetic_mixture(
    rng,
    n=200,
    beta=(3.0, 3.0),
    sigma2=1.0,
    true_frac=0.7,
    n_seeds=0,
    c_gap=2.0,
    py_mean=None,
    py_sd=None,
):
    """A completed dataset with known true/false rows, built directly.

    True rows follow the regression; false rows pair the covariate with
    an unrelated response drawn from the marginal.  Confidence measures
    are informative with a separation of ``c_gap``.  Seeds are true rows
    moved to the front.
    """
    beta = np.asarray(beta, dtype=float)
    p = beta.size - 1
    n_true = int(round(true_frac * n))
    is_true = np.zeros(n, dtype=bool)
    is_true[:n_true] = True

    x = rng.normal(0.0, 1.0, size=(n, p))
    signal = beta[0] + x @ beta[1:]
    if py_mean is None:
        py_mean = float(beta[0])
    if py_sd is None:
        py_sd = float(np.sqrt(beta[1:] @ beta[1:] + sigma2))
    y = np.where(
        is_true,
        signal + rng.normal(0.0, np.sqrt(sigma2), size=n),
        rng.normal(py_mean, py_sd, size=n),
    )
    c = np.where(
        is_true,
        rng.normal(c_gap, 1.0, size=n),
        rng.normal(-c_gap, 1.0, size=n),
    )
    n_seeds = min(n_seeds, n_true)
    is_seed = np.zeros(n, dtype=bool)
    is_seed[:n_seeds] = True  # true rows are already first

    pairs = np.column_stack([np.arange(n), np.arange(n)])
    ds = LinkedDataset(
        x=x, y=y, c=c, is_seed=is_seed, pairs=pairs, draw=0
    )
    ds.validate()
    return ds, is_true


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One line per acceptance criterion at the end of the run."""
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria:")
        for line in sorted(RESULTS):
            terminalreporter.write_line(line)
