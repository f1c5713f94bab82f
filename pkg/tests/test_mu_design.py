import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quadobs.brackets import c_sequence, gamma_table
from quadobs.errors import DomainError
from quadobs.mu_design import (GOLDEN, DesignProblem, bump_layout, constraint_residuals,
                               design_mu, expansion_pairs, golden_config, load_golden)
from quadobs.spectral_basis import BumpSum, DipoleSet, ProblemConfig, eigendata, moment_table

CFG = ProblemConfig(k=1, K=2, r=2, J=64)


@pytest.fixture(scope="module")
def problem():
    return DesignProblem(CFG, 8)


def test_layout_supports_disjoint():
    for m in (2, 4, 8, 12):
        layout = bump_layout(2, m)
        assert [len(iv) for iv in layout] == [m, m]
        for a, b in layout[0]:
            for c, d in layout[1]:
                assert b <= c or d <= a
        for iv in layout:
            assert all(0 < lo < hi < 1 for lo, hi in iv)
    with pytest.raises(DomainError):
        bump_layout(2, 3)


def test_problem_guards():
    with pytest.raises(DomainError):
        DesignProblem(ProblemConfig(k=2, K=2, r=2, J=32), 4)
    with pytest.raises(DomainError):
        DesignProblem(ProblemConfig(k=1, K=2, r=3, J=32), 8)


def test_zero_amplitudes(problem):
    res = constraint_residuals(np.zeros(16), problem, weight=3.0)
    n = problem.equalities(np.zeros(16)).size
    assert not res[:n].any()
    np.testing.assert_array_equal(res[n:], 3.0 * problem.floor)


@given(st.integers(0, 2 ** 32 - 1))
def test_cross_rows_structurally_zero(seed):
    # on disjoint supports what remains of a cross row is truncation, gone by J = 256
    problem = DesignProblem(CFG.replace(J=256), 8)
    x = np.random.default_rng(seed).standard_normal(16)
    assert np.abs(problem.cross_values(x)).max() <= 1e-9 * np.abs(problem.tops(x)).max()


def test_single_bump_cross_term_decays_with_J():
    x = np.zeros(16)
    x[0], x[8] = 1.0, 1.0
    cross = [np.abs(DesignProblem(CFG.replace(J=J), 8).cross_values(x)).max()
             for J in (32, 64, 128, 256)]
    assert all(b < 0.5 * a for a, b in zip(cross, cross[1:]))
    assert cross[-1] <= 1e-11


@given(st.integers(0, 2 ** 32 - 1))
def test_rows_match_moment_table(seed):
    # constraint rows assembled from per-bump transforms agree with the
    # quadrature table on the same dipoles
    problem = DesignProblem(CFG, 8)
    x = np.random.default_rng(seed).standard_normal(16)
    mus = problem.dipoles(x)
    tab = moment_table(mus, CFG)
    eq = problem.equalities(x)
    np.testing.assert_allclose(eq[:2], tab.entries[:, 0, 1], atol=1e-10)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        g = gamma_table(c_sequence(tab, CFG), eigendata(CFG), CFG)
    tops = problem.tops(x)
    for ell in (1, 2):
        assert tops[ell - 1] == pytest.approx(g.get(1, ell), rel=1e-6, abs=1e-9)


def test_injected_solution_needs_no_iteration():
    mus, cfg, doc = load_golden(1)
    res = design_mu(cfg, m=GOLDEN[1]["m"], initial=np.array(doc["params"]),
                    floor=doc["provenance"]["floor"])
    assert res.iterations == 0 and res.provenance["start"] == "initial"
    assert res.dipoles == mus


def test_design_deterministic_and_valid():
    a = design_mu(CFG, seed=5, m=8)
    b = design_mu(CFG, seed=5, m=8)
    assert a.params.tobytes() == b.params.tobytes()
    assert a.report.passed
    assert a.provenance["max_rel_residual"] <= 1e-10
    assert np.all(a.tops > 0)
    tab = moment_table(a.dipoles, CFG)
    assert np.abs(tab.entries[:, 0, 1]).max() <= 1e-10 * np.abs(tab.entries[:, 0, :]).max()


def test_design_opposite_sign():
    res = design_mu(CFG, seed=1, m=8, sign=-1.0)
    assert np.all(res.tops < 0)


def test_golden_documents():
    for k in GOLDEN:
        mus, cfg, doc = load_golden(k)
        assert cfg == golden_config(k)
        assert doc["report"]["passed"]
        assert doc["provenance"]["max_rel_residual"] <= 1e-10
        assert all(isinstance(m, BumpSum) for m in mus.mus)
    with pytest.raises(DomainError):
        load_golden(7)


def test_expansion_pairs_fixture():
    pairs = expansion_pairs()
    assert [p[0] for p in pairs] == ["golden-k1", "golden-k2", "sine-pair"]
    for name, mus, cfg, u, eps in pairs:
        assert isinstance(mus, DipoleSet) and u.r == mus.r == cfg.r
        assert eps == [1e-2, 5e-3, 2.5e-3, 1.25e-3]
