import numpy as np
import pytest

from opd.poly import Polynomial


@pytest.fixture
def quad1():
    """f(x) = x**2 on one variable."""
    return Polynomial(1, [(1, (2,))])


@pytest.fixture
def sep2():
    """f(x) = x1**2 + x2**2."""
    return Polynomial(2, [(1, (2, 0)), (1, (0, 2))])


def random_convex_poly(rng, n, tau, blocks=3):
    """Sum of convex blocks: pure powers and expanded form powers."""
    terms = [(float(rng.uniform(0.5, 2.0)), tuple(tau if j == 0 else 0 for j in range(n)))]
    for _ in range(blocks - 1):
        if n >= 2 and rng.uniform() < 0.4:
            i, j = rng.choice(n, size=2, replace=False)
            w1, w2 = rng.uniform(0.3, 1.2, size=2)
            # (w1 x_i + w2 x_j)**2 expanded
            for c, di, dj in ((w1 * w1, 2, 0), (2 * w1 * w2, 1, 1), (w2 * w2, 0, 2)):
                degs = [0] * n
                degs[int(i)], degs[int(j)] = di, dj
                terms.append((float(c), tuple(degs)))
        else:
            i = int(rng.integers(0, n))
            d = int(rng.integers(1, tau + 1))
            degs = [0] * n
            degs[i] = d
            terms.append((float(rng.uniform(0.2, 2.0)), tuple(degs)))
    return Polynomial(n, terms)


def random_point(rng, n, low=0.05, high=3.0):
    return rng.uniform(low, high, size=n)
