import numpy as np
import pytest

from fecmcast.data_pipeline import Panel, SeriesMeta


def quarters(start, count):
    out, (y, q) = [], start
    for _ in range(count):
        out.append((y, q))
        y, q = (y + 1, 1) if q == 4 else (y, q + 1)
    return tuple(out)


def make_panel(values, tcs=None, orders=None, interest=None):
    values = np.asarray(values, float)
    T, N = values.shape
    tcs = tcs or [1] * N
    orders = orders or ["I1"] * N
    interest = interest or [False] * N
    meta = tuple(
        SeriesMeta(id=j + 1, mnemonic=f"S{j + 1}", description="test", tc=tcs[j],
                   is_interest_rate=interest[j], integration_order=orders[j])
        for j in range(N)
    )
    return Panel(values, quarters((2000, 1), T), meta)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
