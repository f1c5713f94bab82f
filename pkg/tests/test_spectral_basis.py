import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quadobs.errors import DomainError
from quadobs.spectral_basis import (BumpSum, DipoleSet, ProblemConfig, SineSeries, eigendata,
                                    eval_mode, moment, moment_table, sine_moment_exact)


class Linear:
    """mu(x) = x, outside the closed-form families."""

    def __call__(self, x):
        return np.asarray(x, dtype=float)


def fixed_quadrature(f, j, p, panels=10_000):
    # composite 5-point Gauss-Legendre, independent of the adaptive rule
    x, w = np.polynomial.legendre.leggauss(5)
    edges = np.linspace(0.0, 1.0, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * np.diff(edges)
    pts = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wts = (half[:, None] * w[None, :]).ravel()
    return float(np.sum(wts * f(pts) * 2 * np.sin(j * np.pi * pts) * np.sin(p * np.pi * pts)))


def test_config_defaults_and_guards():
    assert ProblemConfig(K=3).J == 64
    assert ProblemConfig(K=10).J == 80
    with pytest.raises(DomainError):
        ProblemConfig(J=1)
    with pytest.raises(DomainError):
        ProblemConfig(k=0)
    with pytest.raises(DomainError):
        ProblemConfig(dt=-1.0)


def test_eigendata_values():
    eig = eigendata(ProblemConfig(K=3, J=10))
    assert eig.lam[0] == pytest.approx(9.8696044, abs=1e-7)
    assert eig.omega[0] == 0.0
    assert eig.nu[2] == 0.0
    assert np.all(np.diff(eig.lam) > 0)


@given(st.integers(1, 12), st.integers(12, 200))
def test_eigendata_frequency_identity(K, J):
    eig = eigendata(ProblemConfig(K=K, J=J))
    np.testing.assert_allclose(eig.omega + eig.nu, eig.omega_K, rtol=1e-12,
                               atol=1e-12 * eig.lam[-1])


def test_eval_mode_examples():
    assert eval_mode(1, 0.5) == pytest.approx(math.sqrt(2))
    assert eval_mode(5, 0.0) == 0.0
    assert eval_mode(3, 1.0) == 0.0
    assert eval_mode(2, 0.5) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(DomainError):
        eval_mode(0, 0.5)
    with pytest.raises(DomainError):
        eval_mode(1, 1.5)


def test_moment_examples():
    assert moment(SineSeries((0.0,)), 1, 1) == 0.0
    assert moment(lambda x: np.ones_like(x), 1, 1) == pytest.approx(1.0, abs=1e-12)
    assert moment(Linear(), 1, 1) == pytest.approx(0.5, abs=1e-12)
    value = moment(Linear(), 1, 2)
    assert value == pytest.approx(-16 / (9 * math.pi ** 2), abs=1e-10)
    assert value == pytest.approx(fixed_quadrature(Linear(), 1, 2), abs=1e-12)


@given(st.lists(st.floats(-2, 2), min_size=1, max_size=6), st.integers(1, 20), st.integers(1, 20))
def test_sine_moment_matches_closed_form(coeffs, j, p):
    mu = SineSeries(tuple(coeffs))
    exact = sine_moment_exact(coeffs, j, p)
    assert moment(mu, j, p) == pytest.approx(exact, abs=1e-10)
    assert abs(moment(mu, j, p) - moment(mu, p, j)) <= 2e-10


bump_sets = st.lists(
    st.tuples(st.floats(-3, 3), st.floats(0.01, 0.6), st.floats(0.05, 0.35)),
    min_size=1, max_size=3).map(lambda bs: BumpSum(tuple((a, lo, lo + w) for a, lo, w in bs)))


@given(bump_sets, st.integers(1, 30), st.integers(1, 30))
def test_bump_moment_symmetric(mu, j, p):
    assert abs(moment(mu, j, p) - moment(mu, p, j)) <= 2e-10


@given(bump_sets)
def test_table_matches_moment(mu):
    cfg = ProblemConfig(r=1, J=12)
    tab = moment_table(DipoleSet((mu,)), cfg)
    for j, p in [(1, 1), (1, 2), (3, 7), (12, 5)]:
        assert tab.entries[0, j - 1, p - 1] == pytest.approx(moment(mu, j, p), abs=1e-9)
    np.testing.assert_array_equal(tab.entries[0], tab.entries[0].T)


def test_table_zero_channels():
    zero = SineSeries((0.0,))
    tab = moment_table(DipoleSet((zero,)), ProblemConfig(r=1, J=8))
    assert not tab.entries.any()
    mu = SineSeries((1.0, 0.3))
    tab = moment_table(DipoleSet((mu, zero)), ProblemConfig(r=2, J=8))
    assert not tab.entries[1].any()
    assert tab.entries[0, 2, 4] == pytest.approx(moment(mu, 3, 5), abs=1e-10)


def test_table_determinism():
    mus = DipoleSet((BumpSum(((1.0, 0.1, 0.4), (-0.5, 0.3, 0.7))), SineSeries((0.2, 1.0))))
    cfg = ProblemConfig(J=40)
    a = moment_table(mus, cfg).entries
    b = moment_table(mus, cfg).entries
    assert a.tobytes() == b.tobytes()


def test_designed_set_kills_linear_moment(golden1):
    mus, cfg, _ = golden1
    tab = moment_table(mus, cfg)
    assert np.all(np.abs(tab.entries[:, 0, cfg.K - 1]) <= 1e-10)


def test_bump_support_guard():
    with pytest.raises(DomainError):
        BumpSum(((1.0, 0.0, 0.5),))


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=5), bump_sets)
def test_dipole_json_round_trip(coeffs, bumps):
    mus = DipoleSet((SineSeries(tuple(coeffs)), bumps))
    again = DipoleSet.loads(mus.dumps())
    assert again == mus
    assert again.dumps() == mus.dumps()


def test_dipole_document_errors():
    with pytest.raises(DomainError):
        DipoleSet.from_dict({"r": 1, "mus": [{"kind": "spline", "params": []}]})
    with pytest.raises(DomainError):
        DipoleSet.from_dict({"r": 2, "mus": [{"kind": "sine", "params": [1.0]}]})
