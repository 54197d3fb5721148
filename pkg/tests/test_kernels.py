import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from concaflow import kernels
from concaflow._backend import USE_NUMBA, backend_name

needs_numba = pytest.mark.skipif(not USE_NUMBA, reason="numba backend disabled")

finite = st.floats(-1e3, 1e3, allow_nan=False)
with_neg_inf = st.one_of(finite, st.just(-np.inf))


def _brute_midpoint(g, mode, relative):
    best = 0.0
    n = g.size
    for k in range(1, (n - 1) // 2 + 1):
        for i in range(n - 2 * k):
            x, m, y = g[i], g[i + k], g[i + 2 * k]
            if x == -np.inf or y == -np.inf:
                continue
            if m == -np.inf:
                return np.inf
            d = 0.5 * (x + y) - m if mode == kernels.CONCAVE else min(x, y) - m
            if relative:
                d /= max(1.0, abs(x), abs(y), abs(m))
            best = max(best, d)
    return best


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(1, 40), elements=with_neg_inf), st.sampled_from([kernels.CONCAVE, kernels.QUASI]), st.booleans())
def test_midpoint_scan_against_brute_force(g, mode, relative):
    worst, i, j = kernels.midpoint_scan_1d(g, mode, relative, backend="numpy")
    assert worst == pytest.approx(_brute_midpoint(g, mode, relative), rel=1e-12, abs=1e-300)
    if worst > 0:
        assert (j - i) % 2 == 0 and j > i


@needs_numba
@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(1, 60), elements=with_neg_inf), st.sampled_from([kernels.CONCAVE, kernels.QUASI]), st.booleans())
def test_midpoint_scan_backends_agree(g, mode, relative):
    a = kernels.midpoint_scan_1d(g, mode, relative, backend="numba")
    b = kernels.midpoint_scan_1d(g, mode, relative, backend="numpy")
    assert a[0] == pytest.approx(b[0], rel=1e-14)
    assert a[1:] == b[1:]


@needs_numba
@settings(max_examples=40, deadline=None)
@given(
    arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 12)), elements=with_neg_inf),
    st.sampled_from([kernels.CONCAVE, kernels.QUASI]),
    st.booleans(),
    st.booleans(),
)
def test_offset_scan_backends_agree(g, mode, relative, every):
    offsets = kernels.all_offsets(g.shape) if every else kernels.lattice_offsets(g.shape)
    a = kernels.offset_scan_2d(g, offsets, mode, relative, backend="numba")
    b = kernels.offset_scan_2d(g, offsets, mode, relative, backend="numpy")
    assert a[0] == pytest.approx(b[0], rel=1e-14)
    assert a[1:] == b[1:]


def test_offset_scan_finds_known_violation():
    g = np.zeros((5, 5))
    g[2, 2] = -1.0
    worst, i, j, p, q = kernels.offset_scan_2d(g, kernels.all_offsets(g.shape), kernels.CONCAVE, False)
    assert worst == 1.0
    assert (i + p, j + q) == (2, 2)


def test_offsets():
    lat = {tuple(o) for o in kernels.lattice_offsets((5, 5)).tolist()}
    assert (1, 0) in lat and (2, 0) in lat and (1, -1) in lat and (0, 2) in lat
    every = [tuple(o) for o in kernels.all_offsets((5, 5)).tolist()]
    assert len(set(every)) == len(every)
    # half-offsets with both coordinates in [-2, 2], one of each +-pair
    assert len(every) == (5 * 5 - 1) // 2


@pytest.mark.parametrize("backend", ["numpy", pytest.param("numba", marks=needs_numba)])
def test_tridiagonal_solve(backend):
    rng = np.random.default_rng(0)
    n = 50
    lower, upper = rng.uniform(-1, 1, n - 1), rng.uniform(-1, 1, n - 1)
    diag = 4 + rng.uniform(0, 1, n)
    T = kernels.Tridiagonal(lower, diag, upper, backend=backend)
    dense = np.diag(diag) + np.diag(lower, -1) + np.diag(upper, 1)
    rhs = rng.normal(size=(n, 3))
    np.testing.assert_allclose(dense @ T.solve(rhs), rhs, atol=1e-12)
    np.testing.assert_allclose(dense @ T.solve(rhs[:, 0]), rhs[:, 0], atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(2, 50), elements=st.floats(-100, 100)))
def test_upper_hull(y):
    x = np.arange(y.size, dtype=float)
    hull = kernels.upper_hull_1d(x, y, backend="numpy")
    assert hull[0] == 0 and hull[-1] == y.size - 1
    env = np.interp(x, x[hull], y[hull])
    assert np.all(env >= y - 1e-9)
    # vertices turn strictly right
    hx, hy = x[hull], y[hull]
    for a in range(len(hull) - 2):
        cross = (hx[a + 1] - hx[a]) * (hy[a + 2] - hy[a]) - (hy[a + 1] - hy[a]) * (hx[a + 2] - hx[a])
        assert cross < 0
    if USE_NUMBA:
        np.testing.assert_array_equal(kernels.upper_hull_1d(x, y, backend="numba"), hull)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.midpoint_scan_1d(np.zeros(3), backend="fortran")


def test_backend_name():
    assert backend_name() == ("numba" if USE_NUMBA else "numpy")


def test_numpy_backend_by_environment():
    code = (
        "from concaflow._backend import backend_name;"
        "from concaflow.criterion import dhf_criterion;"
        "from concaflow.admissible import make_power;"
        "print(backend_name(), dhf_criterion(make_power(-1)).preserved, dhf_criterion(make_power(0)).preserved)"
    )
    env = dict(os.environ, CONCAFLOW_BACKEND="numpy")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "False", "True"]


def test_bad_backend_variable():
    env = dict(os.environ, CONCAFLOW_BACKEND="gpu")
    out = subprocess.run([sys.executable, "-c", "import concaflow.kernels"], env=env, capture_output=True, text=True)
    assert out.returncode != 0 and "CONCAFLOW_BACKEND" in out.stderr
