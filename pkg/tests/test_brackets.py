import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quadobs.brackets import (GammaTable, QuadraticForm, beta_table, c_sequence, check_hypotheses,
                              commutator_gamma, commutator_scale, decay_exponent, delta_table,
                              gamma_series, gamma_table, independence_rank, positivity_verdict,
                              q_direct, tail_estimate, weighted_sum_identity)
from quadobs.spectral_basis import (BumpSum, DipoleSet, MomentTable, ProblemConfig, SineSeries,
                                    eigendata, moment_table)

EIG8 = eigendata(ProblemConfig(K=2, J=8))


def quiet_gamma(table, cfg):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return gamma_table(c_sequence(table, cfg), eigendata(cfg), cfg)


def random_bumps(rng, n=3):
    out = []
    for _ in range(2):
        bumps = []
        for _ in range(n):
            lo = rng.uniform(0.02, 0.7)
            bumps.append((rng.standard_normal(), lo, min(lo + rng.uniform(0.1, 0.28), 0.98)))
        out.append(BumpSum(tuple(bumps)))
    return DipoleSet(tuple(out))


def agree(a, b, scale, rtol):
    # entries below 1e-9 of their own term scale are zero up to truncation
    return abs(a - b) <= rtol * max(abs(a), abs(b), 1e-9 * scale)


def test_c_sequence_examples():
    cfg = ProblemConfig(r=1, J=16)
    zero = moment_table(DipoleSet((SineSeries((0.0,)),)), cfg)
    assert not c_sequence(zero, cfg).values.any()
    tab = moment_table(DipoleSet((SineSeries((1.0, 0.4, 0.2)),)), cfg)
    c = c_sequence(tab, cfg)
    np.testing.assert_array_equal(c.pair(1, 1), tab.row(cfg.K)[0] * tab.row(1)[0])


def test_gamma_examples():
    cfg = ProblemConfig(k=2, K=2, r=2, J=60)
    rng = np.random.default_rng(1)
    g = quiet_gamma(moment_table(random_bumps(rng), cfg), cfg)
    for p in (0, 2):
        assert g.get(p, 1) == 0.0 and g.get(p, 2) == 0.0
    zero = DipoleSet((SineSeries((0.0,)), SineSeries((0.0,))))
    assert not quiet_gamma(moment_table(zero, cfg), cfg).values.any()


@given(st.integers(0, 2 ** 32 - 1))
def test_gamma_matches_commutator(seed):
    rng = np.random.default_rng(seed)
    cfg = ProblemConfig(k=2, K=int(rng.integers(2, 4)), r=2, J=160)
    tab = moment_table(random_bumps(rng), cfg)
    eig = eigendata(cfg)
    g = quiet_gamma(tab, cfg)
    for p in range(4):
        for ell in (1, 2):
            for L in (1, 2):
                comm = commutator_gamma(tab, eig, p, ell, L, cfg)
                scale = commutator_scale(tab, eig, p, ell, L, cfg)
                assert agree(g.get(p, ell, L), comm, scale, 1e-6)


def test_commutator_examples():
    cfg = ProblemConfig(k=1, K=3, r=2, J=12)
    eig = eigendata(cfg)
    tab = moment_table(DipoleSet((SineSeries((1.0, 0.5)), SineSeries((0.3, -0.2, 0.8)))), cfg)
    assert commutator_gamma(tab, eig, 0, 1, 1, cfg) == 0.0
    diag = MomentTable(np.array([np.diag(np.arange(1.0, 13.0))] * 2), 0.0)
    for p in range(4):
        assert commutator_gamma(diag, eig, p, 1, 2, cfg) == 0.0


def test_beta_rows():
    beta = beta_table(6)
    assert beta[0] == (1,)
    assert beta[1] == (1, 1)
    assert beta[2] == (1, 1, -1)
    for nu in range(4):
        for l in range(nu + 3):
            left = beta[nu + 2][l]
            a = beta[nu + 1][l] if l < len(beta[nu + 1]) else 0
            b = beta[nu][l - 2] if 0 <= l - 2 < len(beta[nu]) else 0
            assert left == a - b


sequences = st.integers(1, 5).flatmap(lambda n: st.tuples(
    st.lists(st.floats(-1, 1), min_size=n, max_size=n),
    st.lists(st.floats(-1, 1), min_size=n, max_size=n)))


@given(sequences, st.integers(0, 3), st.data())
def test_weighted_sum_identity(ab, p, data):
    nu = data.draw(st.integers(0, 7 - 2 * p))
    a, b = map(np.array, ab)
    check = weighted_sum_identity(a, b, p, nu, EIG8, beta_table(7))
    assert check.residual <= 1e-9 * max(check.scale, 1.0)


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=6), st.integers(0, 2))
def test_weighted_sum_special_cases(a, p):
    a = np.array(a)
    beta = beta_table(2)
    zero = weighted_sum_identity(a, a, p, 0, EIG8, beta)
    g2p = gamma_series(a, a, 2 * p, EIG8)
    assert zero.lhs == pytest.approx(g2p, abs=1e-9 * max(zero.scale, 1))
    assert zero.rhs == pytest.approx(g2p, abs=1e-9 * max(zero.scale, 1))
    one = weighted_sum_identity(a, a, p, 1, EIG8, beta)
    expect = EIG8.omega_K * g2p - gamma_series(a, a, 2 * p + 1, EIG8)
    assert one.lhs == pytest.approx(expect, abs=1e-9 * max(one.scale, 1))


@given(sequences, st.integers(0, 2), st.data())
def test_swapped_identity_with_delta(ab, p, data):
    nu = data.draw(st.integers(0, 5 - 2 * p))
    a, b = map(np.array, ab)
    check = weighted_sum_identity(a, b, p, nu, EIG8, delta_table(5), swapped=True)
    assert check.residual <= 1e-9 * max(check.scale, 1.0)


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=8), st.lists(st.floats(-1, 1), min_size=8,
                                                                      max_size=8),
       st.integers(0, 3))
def test_even_order_antisymmetry(a, b, p):
    a = np.array(a + [0.0] * (8 - len(a)))
    b = np.array(b)
    assert gamma_series(a, b, 2 * p, EIG8) == pytest.approx(-gamma_series(b, a, 2 * p, EIG8),
                                                            abs=1e-12 * EIG8.lam[-1] ** (2 * p))


@given(st.integers(0, 2 ** 32 - 1))
def test_quadratic_form_direct(seed):
    rng = np.random.default_rng(seed)
    r = int(rng.integers(1, 5))
    vals = rng.standard_normal((2, r, r))
    g = GammaTable.injected(vals, k=1)
    form = QuadraticForm.from_gamma(g)
    for _ in range(100):
        a = rng.standard_normal(r)
        assert q_direct(g, a) == pytest.approx(form(a), rel=1e-12, abs=1e-12)


def test_positivity_injected():
    vals = np.zeros((2, 2, 2))
    vals[1] = np.eye(2)
    ok = positivity_verdict(GammaTable.injected(vals, k=1))
    assert ok["verdict"] == "pass"
    assert ok["evidence"]["two_channel_test"]["holds"]
    vals[1] = [[1.0, 3.0], [3.0, 1.0]]
    assert positivity_verdict(GammaTable.injected(vals, k=1))["verdict"] == "fail"


def test_check_zero_dipoles():
    cfg = ProblemConfig(k=1, K=2, r=2, J=16)
    zero = DipoleSet((SineSeries((0.0,)), SineSeries((0.0,))))
    rep = check_hypotheses(zero, cfg)
    assert rep.verdict("lin") == "pass"
    assert rep.verdict("pos") == "fail"
    assert not rep.passed


def test_check_injected_identity_form():
    cfg = ProblemConfig(k=1, K=2, r=2, J=32)
    mus = DipoleSet((BumpSum(((1.0, 0.1, 0.4),)), BumpSum(((1.0, 0.6, 0.9),))))
    vals = np.zeros((2, 2, 2))
    vals[1] = np.eye(2)
    rep = check_hypotheses(mus, cfg, gamma=GammaTable.injected(vals, k=1))
    assert rep.verdict("pos") == "pass"
    for name, v in rep.verdicts.items():
        assert "threshold" in v, name


def test_golden_reports(golden1_report, golden2):
    assert golden1_report.passed
    doc = golden2[2]["report"]
    assert doc["passed"]
    assert all(doc["verdicts"][n]["verdict"] == "pass" for n in ("reg", "lin", "conv", "null", "pos"))


def test_golden_report_reproduces(golden1, golden1_report):
    shipped = golden1[2]["report"]
    assert golden1_report.to_dict()["verdicts"].keys() == shipped["verdicts"].keys()
    for name in shipped["verdicts"]:
        assert golden1_report.verdict(name) == shipped["verdicts"][name]["verdict"]


def test_independence_examples(golden2):
    cfg = ProblemConfig(k=1, K=2, r=1, J=16)
    eig = eigendata(cfg)
    tab = moment_table(DipoleSet((SineSeries((1.0, 0.3)),)), cfg)
    assert independence_rank(tab, eig, cfg).rank == 1
    entries = np.array(tab.entries)
    entries[:, 0, :] = 0.0
    entries[:, :, 0] = 0.0
    dead = independence_rank(MomentTable(entries, 0.0), eig, cfg)
    assert not dead.full_rank and dead.rank == 0
    mus, cfg2, _ = golden2
    cfg2 = cfg2.replace(J=64)
    rep = independence_rank(moment_table(mus, cfg2), eigendata(cfg2), cfg2)
    assert rep.full_rank and rep.expected == 4
    assert len(rep.columns) == 4 and np.isfinite(rep.condition)


def test_decay_and_tail_helpers():
    j = np.arange(1, 201, dtype=float)
    assert decay_exponent(j ** -6.0) == pytest.approx(6.0, abs=0.05)
    assert decay_exponent(np.zeros(10)) == np.inf
    geo = 0.5 ** np.arange(40)
    assert tail_estimate(geo) >= 0.5 ** 40
    assert tail_estimate([]) == 0.0
