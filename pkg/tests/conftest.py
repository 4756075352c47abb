import numpy as np
import pytest

from lrcoreset.data import LabeledDataset, add_intercept, synthesize_logistic


# filled by tests/test_acceptance.py: (number, status, title, detail)
ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running benchmark checks")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, status, title, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{status} criterion {number:>2}: {title} -- {detail}")


@pytest.fixture
def small_ds():
    """200 x 4 logistic data with an intercept column (d = 5)."""
    return add_intercept(synthesize_logistic(200, 4, [1.0, -0.5, 0.25, 0.0], seed=3, name="small"))


def random_dataset(rng, n, d, intercept=False):
    X = rng.standard_normal((n, d))
    y = np.where(rng.random(n) < 0.5, 1, -1)
    y[0], y[1] = 1, -1
    ds = LabeledDataset(X, y)
    return add_intercept(ds) if intercept else ds


def write_census_like(path, n_rows=32561, n_pos=7841, seed=0):
    """A file shaped like the UCI adult.data: no header, ', ' separated, 15 columns."""
    rng = np.random.default_rng(seed)
    labels = np.array([">50K"] * n_pos + ["<=50K"] * (n_rows - n_pos))
    rng.shuffle(labels)
    work = np.array(["Private", "Self-emp-not-inc", "Local-gov", "?"])
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(n_rows):
            fields = [
                str(rng.integers(17, 90)), work[rng.integers(4)], str(rng.integers(12285, 1484705)),
                "Bachelors", str(rng.integers(1, 17)), "Never-married", "Sales", "Husband",
                "White", "Male" if rng.random() < 0.6 else "Female", str(rng.integers(0, 5000)),
                "0", str(rng.integers(1, 99)), "United-States", labels[i],
            ]
            fh.write(", ".join(fields) + "\n")
        fh.write("\n")
