import numpy as np
import pytest

from mmpca import Dataset, ModelParams
from mmpca.kframe import angle_indices


def random_xi(rng, p, k, scale=np.pi):
    xi = np.zeros((p, k))
    for a, b in zip(*angle_indices(p, k)):
        xi[a, b] = rng.uniform(-scale, scale)
    return xi


def dense_oracle(xi):
    """Explicit product of full p x p plane rotations, then the first k columns."""
    p, k = xi.shape
    R = np.eye(p)
    for b in range(k):
        for a in range(b + 1, p):
            G = np.eye(p)
            c, s = np.cos(xi[a, b]), np.sin(xi[a, b])
            G[b, b], G[b, a], G[a, b], G[a, a] = c, -s, s, c
            R = R @ G
    return R[:, :k]


def random_params(rng, dims, k, d_scale=1.0):
    return ModelParams([random_xi(rng, p, k) for p in dims], d_scale * rng.standard_normal((k, len(dims))))


def random_dataset(rng, dims, links, missing=0.0):
    blocks = {}
    for i, j in links:
        x = rng.standard_normal((dims[i], dims[j]))
        if missing:
            drop = rng.random(x.shape) < missing
            drop[0, 0] = False
            x[drop] = np.nan
        blocks[(i, j)] = x
    return Dataset.from_arrays(dims, blocks)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_links(rng, n_views):
    """A random connected set of links over ``n_views`` views."""
    order = rng.permutation(n_views)
    links = set()
    for t in range(1, n_views):
        a, b = int(order[t]), int(order[rng.integers(t)])
        links.add((a, b) if rng.random() < 0.5 else (b, a))
    for _ in range(rng.integers(0, n_views)):
        a, b = rng.choice(n_views, 2, replace=False)
        if (b, a) not in links:
            links.add((int(a), int(b)))
    return tuple(sorted(links))


def gradient_instance(rng, tau=1e-3, margin=10.0):
    """Random small problem whose smoothed terms are all away from their kinks."""
    from mmpca import Penalties

    while True:
        n_v = int(rng.integers(2, 5))
        k = int(rng.integers(1, 4))
        dims = tuple(int(rng.integers(k, 7)) for _ in range(n_v))
        ds = random_dataset(rng, dims, random_links(rng, n_v), missing=0.2)
        params = random_params(rng, dims, k)
        vd = [V * params.d[:, i] for i, V in enumerate(params.frames())]
        if np.min(np.abs(params.d)) > margin * tau and min(np.min(np.abs(x)) for x in vd) > margin * tau:
            lam = tuple(rng.uniform(0, 1, 4))
            return ds, params, Penalties(lam, tau)


def central_differences(f, x, h=1e-6):
    g = np.empty_like(x)
    for t in range(x.size):
        e = np.zeros_like(x)
        e[t] = h
        g[t] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def relative_error(g, fd):
    """Largest componentwise error relative to the gradient's overall size."""
    return float(np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-12))


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
