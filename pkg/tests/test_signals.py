import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quadobs.errors import DomainError
from quadobs.signals import (ControlGrid, boundary_values, control_from_spec, iterated_primitives,
                             l2_norm, load_control, read_control_csv, sobolev_norm, sup_norm,
                             wminus1inf_proxy, write_control_csv)

T = 0.1


def grid(f, N=2000, T=T):
    t = np.linspace(0.0, T, N + 1)
    return ControlGrid(T, np.atleast_2d(f(t)))


def test_grid_guards():
    with pytest.raises(DomainError):
        ControlGrid(1.0, np.zeros((1, 2)))
    with pytest.raises(DomainError):
        ControlGrid(1.0, np.array([[0.0, np.nan, 1.0]]))
    with pytest.raises(DomainError):
        ControlGrid(0.0, np.zeros((1, 5)))


def test_primitive_examples():
    zero = iterated_primitives(grid(np.zeros_like), 3)
    assert not zero.prims.any()
    one = iterated_primitives(grid(np.ones_like), 2)
    t = np.linspace(0.0, T, 2001)
    np.testing.assert_allclose(one[1][0], t, atol=1e-15)
    np.testing.assert_allclose(one[2][0], t ** 2 / 2, atol=1e-15)
    w = 40.0
    cos = iterated_primitives(grid(lambda t: np.cos(w * t)), 1)
    np.testing.assert_allclose(cos[1][0], np.sin(w * t) / w, atol=1e-12)
    assert cos.scheme == "simpson"
    assert iterated_primitives(grid(np.ones_like, N=7), 1).scheme == "trapezoid"
    with pytest.raises(DomainError):
        iterated_primitives(grid(np.ones_like), 0)


smooth = st.tuples(st.floats(-3, 3), st.floats(-3, 3), st.integers(1, 6), st.floats(0, 6.3))


def smooth_grid(params, N):
    a, b, n, ph = params
    return grid(lambda t: a + b * np.cos(2 * np.pi * n * t / T + ph), N=N)


@given(smooth)
def test_discrete_fundamental_theorem(params):
    errs = []
    for N in (400, 800):
        u = smooth_grid(params, N)
        st_ = iterated_primitives(u, 2)
        for n in (0, 1):
            lo, hi = st_[n][0], st_[n + 1][0]
            errs.append(np.max(np.abs(np.diff(hi) / u.dt - 0.5 * (lo[1:] + lo[:-1]))))
    scale = max(1.0, abs(params[0]) + abs(params[1]))
    # midpoint defect is O(dt^2); halving dt must shrink it
    assert errs[2] <= 0.3 * errs[0] + 1e-9 * scale
    assert errs[0] <= 5e-3 * scale


@given(smooth)
def test_primitives_vanish_at_zero(params):
    st_ = iterated_primitives(smooth_grid(params, 200), 4)
    assert np.all(st_.prims[1:, :, 0] == 0.0)


def test_norm_examples():
    assert l2_norm(np.zeros(11), 0.1) == 0.0
    assert l2_norm(np.ones(101), T / 100) == pytest.approx(math.sqrt(T))
    u = grid(lambda t: np.sin(2 * np.pi * t / T), N=2000)
    expected = T / 2 + (2 * math.pi / T) ** 2 * T / 2
    assert sobolev_norm(u, 1) ** 2 == pytest.approx(expected, rel=1e-6)
    assert sup_norm(np.array([[1.0, -3.0], [2.0, 0.0]])) == 3.0
    with pytest.raises(DomainError):
        sobolev_norm(grid(np.ones_like, N=4), 3)


@given(smooth, st.integers(0, 3))
def test_sobolev_dominates_l2(params, m):
    u = smooth_grid(params, 400)
    assert sobolev_norm(u, m) >= l2_norm(u.values, u.dt) * (1 - 1e-12)


def test_proxy_examples():
    assert wminus1inf_proxy(grid(np.zeros_like)) == 0.0
    assert wminus1inf_proxy(grid(np.ones_like)) == pytest.approx(T)
    assert wminus1inf_proxy(grid(lambda t: np.cos(2 * np.pi * t / T))) == pytest.approx(
        T / (2 * math.pi), rel=1e-6)


@given(st.integers(0, 2 ** 32 - 1))
def test_proxy_cauchy_schwarz(seed):
    rng = np.random.default_rng(seed)
    u = ControlGrid(T, rng.standard_normal((2, 301)))
    per_channel = [l2_norm(u.values[i], u.dt) for i in range(2)]
    assert wminus1inf_proxy(u) <= math.sqrt(T) * max(per_channel) * (1 + 1e-9)


def test_boundary_values_examples():
    assert not boundary_values(iterated_primitives(grid(np.zeros_like), 2), 2).any()
    bv = boundary_values(iterated_primitives(grid(np.ones_like), 2), 2)
    np.testing.assert_allclose(bv[:, 0], [T, T ** 2 / 2], rtol=1e-12)
    bv = boundary_values(iterated_primitives(grid(lambda t: np.sin(2 * np.pi * t / T)), 1), 1)
    assert abs(bv[0, 0]) < 1e-12
    with pytest.raises(DomainError):
        boundary_values(iterated_primitives(grid(np.ones_like), 1), 2)


def test_control_spec_and_csv(tmp_path):
    doc = {"T": 0.2, "N": 40, "channels": [
        {"type": "constant", "value": 2.0},
        {"type": "sinusoid", "cycles": 2, "amplitude": 0.5},
        {"type": "polynomial", "coeffs": [0.0, 1.0]},
        {"type": "random_fourier", "seed": 3, "modes": 4}]}
    u = control_from_spec(doc)
    assert u.r == 4 and u.N == 40
    assert np.all(u.values[0] == 2.0)
    np.testing.assert_allclose(u.values[2], u.times)
    assert control_from_spec(doc).values.tobytes() == u.values.tobytes()
    path = tmp_path / "u.csv"
    write_control_csv(u, path)
    back = read_control_csv(path)
    np.testing.assert_array_equal(back.values, u.values)
    assert back.T == pytest.approx(u.T)
    assert load_control(str(path)).values.tobytes() == u.values.tobytes()
    with pytest.raises(DomainError):
        control_from_spec({"T": 1, "N": 4, "channels": [{"type": "square"}]})
