import numpy as np
import pytest

from ivhet import Dataset, build_cells, reference_trial


@pytest.fixture
def trial_ds():
    return reference_trial()


@pytest.fixture
def trial_ct(trial_ds):
    # the benchmark trial has control arms of 3, 1 and 2 rows
    return build_cells(trial_ds, min_arm_size=1)


def two_cell_dataset():
    """Tiny hand-checkable dataset.

    Cell A: z=1 arm d=(1,1,0) y=(5,3,1); z=0 arm d=(0,0,0) y=(1,2,0)
            so pi = 2/3, dy = 2, tau = 3.
    Cell B: z=1 arm d=(1,0,1) y=(4,2,6); z=0 arm d=(0,1,0) y=(2,1,0)
            so pi = 1/3, dy = 3, tau = 9.
    Equal sizes and q = 1/2 everywhere, hence w_late = w_iv = (2/3, 1/3),
    w_ai = (4/5, 1/5), beta_late = beta_iv = 5 and beta_ai = 4.2.
    """
    y = np.array([5.0, 3, 1, 1, 2, 0, 4, 2, 6, 2, 1, 0])
    d = np.array([1, 1, 0, 0, 0, 0, 1, 0, 1, 0, 1, 0])
    z = np.array([1, 1, 1, 0, 0, 0, 1, 1, 1, 0, 0, 0])
    x = np.array([0.0] * 6 + [1.0] * 6)
    return Dataset(y=y, d=d, z=z, x=x, covariate_names=("g",))


@pytest.fixture
def hand_ds():
    return two_cell_dataset()


@pytest.fixture
def hand_ct(hand_ds):
    return build_cells(hand_ds)


def write_csv(path, ds, names=("y", "d", "z")):
    """Serialize a Dataset the way the CLI tests need it on disk."""
    cov = list(ds.covariate_names)
    with open(path, "w", encoding="utf-8") as fh:
        header = [names[0], names[1], names[2], *cov]
        if ds.cluster is not None:
            header.append("cl")
        fh.write(",".join(header) + "\n")
        for i in range(ds.n):
            row = [repr(float(ds.y[i])), str(int(ds.d[i])), str(int(ds.z[i]))]
            row += [repr(float(v)) for v in ds.x[i]]
            if ds.cluster is not None:
                row.append(str(int(ds.cluster[i])))
            fh.write(",".join(row) + "\n")
    return path
