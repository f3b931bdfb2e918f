"""Smoke test for the gaussian_moments_py extension.

Build the module first, e.g.

    cargo build --release -p gaussian-moments-py
    cp target/release/libgaussian_moments_py.so python/gaussian_moments_py.so
    python3 python/smoke_test.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import gaussian_moments_py as gm


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    assert gm.double_factorial(6) == 15
    assert gm.enumerate_pairings(4) == [[(0, 1), (2, 3)], [(0, 2), (1, 3)], [(0, 3), (1, 2)]]

    t = gm.isserlis_tensor([[1.0, 0.0], [0.0, 1.0]], 4)
    assert t.shape == [2, 2, 2, 2]
    assert t[[0, 0, 0, 0]] == 3.0
    assert t[[0, 0, 1, 1]] == 1.0
    m = t.max_norm()
    assert m["value"] == 3.0 and m["method"] == "exact"
    op = t.operator_norm(restarts=5, seed=1)
    assert close(op["value"], 3.0, 1e-9), op
    grid = t.operator_norm_grid(360)
    assert close(grid["value"], 3.0, 1e-9), grid
    assert gm.Tensor.from_text(t.to_text()).data == t.data

    cov = gm.Covariance.family("toeplitz", 3, rho=0.5)
    assert cov.dim == 3 and cov.matrix()[0][1] == 0.5
    batch = cov.sample(2000, 7)
    assert (batch.n, batch.dim) == (2000, 3)
    again = cov.sample(2000, 7)
    assert batch.rows() == again.rows()
    s = batch.estimate(4, "sample")
    i = batch.estimate(4, "isserlis")
    truth = gm.isserlis_tensor(cov.matrix(), 4)
    assert s.distance(truth) < 1.0 and i.distance(truth) < 1.0
    p2 = batch.estimate(2, "isserlis")
    c = batch.covariance()
    assert all(close(p2[[a, b]], c[a][b]) for a in range(3) for b in range(3))

    assert gm.Covariance.family("identity", 7).r2() == 7.0
    dims = gm.Covariance.explicit([[1.0]]).effective_dims(mc_samples=200_000, seed=3)
    assert abs(dims["r_max"] - 2.0 / math.pi) < 0.02, dims

    y = [[2.0, 0.3], [0.3, 1.0]]
    x = [[2.1, 0.25], [0.25, 0.9]]
    rep = gm.check_bounds(x, y, 4, "max")
    assert rep["satisfied"] and rep["lhs"] <= rep["pairing_bound"] <= rep["rhs"], rep
    rep = gm.check_bounds(x, y, 2, "operator", blocks=[1, 1])
    assert rep["satisfied"], rep
    rel = gm.check_relative_bound(x, y, 4, "operator")
    assert rel["satisfied"], rel

    try:
        gm.isserlis_tensor([[1.0]], 3)
    except ValueError:
        pass
    else:
        raise AssertionError("odd order accepted")

    print("smoke test passed (gaussian_moments_py %s)" % gm.__version__)


if __name__ == "__main__":
    main()
