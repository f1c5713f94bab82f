"""Drift experiments around the ground state.

The signed drift of a control is

    D(u) = (-1)^{k+1} sgn(gamma_{2k-1}^1) Im <psi(T), phi_K e^{-i lam_1 T}>,

and the inequality under test is ``D >= C ||u_k||^2 - C ||psi(T) - psi_1(T)||^2``
for one constant ``C > 0`` over all small controls.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from .brackets import QuadraticForm, check_hypotheses
from .errors import DomainError, HypothesisRefusal, IntegrationError
from .kernel import kernel_eval, quadratic_functional  # noqa: F401  (re-exported)
from .propagator import solve_nonlinear
from .signals import (ControlGrid, iterated_primitives, l2_norm, primitives_of,
                      sobolev_norm, sup_norm)
from .spectral_basis import eigendata, moment_table


def default_horizon(omega_K):
    """``0.9 pi / (3 w_K)``; any horizon works when ``w_K = 0``."""
    return 0.9 * math.pi / (3 * omega_K) if omega_K > 0 else 0.1


def _sign(gamma):
    g = gamma.get(2 * gamma.k - 1, 1)
    return 1.0 if g >= 0 else -1.0


# -- reduction of the kernel functional ---------------------------------------

@dataclass(frozen=True)
class Reduction:
    lhs: float
    main_term: float
    residual_budget: float
    reduced: bool

    @property
    def budget_constant(self):
        """``|lhs - main| / budget``, the constant this sample needs."""
        if self.residual_budget == 0:
            return 0.0 if self.lhs == self.main_term else math.inf
        return abs(self.lhs - self.main_term) / self.residual_budget

    def __iter__(self):
        return iter((self.lhs, self.main_term, self.residual_budget))


def devgt_reduction(ell, L, f, g, gamma, eigen, T, k, c, null_certified=True) -> Reduction:
    """Compare ``Im(F^{l,L}(f, g) + F^{L,l}(g, f))`` with its leading term.

    The leading term is ``(-1)^{k+1} gamma_{2k-1}^{l,L} int f_k g_k cos(w_K (t - T))``
    and the budget ``sum_p |f_p(T)|^2 + |g_p(T)|^2 + T ||(f_k, g_k)||^2``.
    Without certified vanishing of the lower coefficients the values are
    returned flagged as not reduced.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    dt = T / (f.size - 1)
    if not f.any() and not g.any():
        return Reduction(0.0, 0.0, 0.0, bool(null_certified))
    lhs = (quadratic_functional(ell, L, f, g, c, eigen, T)
           + quadratic_functional(L, ell, g, f, c, eigen, T)).imag
    fp = primitives_of(f, dt, k)[:, 0]
    gp = primitives_of(g, dt, k)[:, 0]
    t = np.linspace(0.0, T, f.size)
    weight = np.cos(eigen.omega_K * (t - T))
    main = (-1) ** (k + 1) * gamma.get(2 * k - 1, ell, L) * simpson(fp[k] * gp[k] * weight, dx=dt)
    budget = float(np.sum(fp[1:, -1] ** 2 + gp[1:, -1] ** 2))
    budget += T * (l2_norm(fp[k], dt) ** 2 + l2_norm(gp[k], dt) ** 2)
    return Reduction(float(lhs), float(main), budget, bool(null_certified))


# -- leading-term prediction ----------------------------------------------------

def predict_quadratic_leading(u: ControlGrid, gamma, k):
    """Heuristic quadratic coefficient: full double sum and its collapsed form.

    Returns ``(full, top_only)``; the second keeps only ``p = 2k-1``.
    """
    prim = iterated_primitives(u, k).prims
    dt, r = u.dt, u.r

    def integral(x):
        return float(simpson(x, dx=dt))

    full = 0j
    for ell in range(r):
        for p in range(1, k + 1):
            full += 1j ** (2 * p - 1) * gamma.values[2 * p - 1, ell, ell] * integral(prim[p, ell] ** 2 / 2)
        for L in range(ell + 1, r):
            for p in range(2 * k):
                a, b = p // 2 + 1, (p + 1) // 2
                full += 1j ** p * gamma.values[p, ell, L] * integral(prim[a, ell] * prim[b, L])
    top = 0j
    sign = 1j * (-1) ** (k + 1)
    for ell in range(r):
        top += sign * gamma.values[2 * k - 1, ell, ell] * integral(prim[k, ell] ** 2 / 2)
        for L in range(ell + 1, r):
            top += sign * gamma.values[2 * k - 1, ell, L] * integral(prim[k, ell] * prim[k, L])
    return complex(full), complex(top)


# -- coercivity -----------------------------------------------------------------

@dataclass(frozen=True)
class CoercivityResult:
    C2: float
    margins: np.ndarray
    violations: int

    @property
    def passed(self):
        return self.violations == 0 and self.C2 > 0


def coercivity_check(gamma, T, omega_K, n_samples=500, n_steps=400, seed=0,
                     modes=6) -> CoercivityResult:
    """Evaluate ``sgn(g^1) int q(u_k) cos(w_K (t - T)) >= 2 C2 ||u_k||^2`` on random grids.

    ``C2 = lambda_min(sgn(g^1) Q) cos(w_K T) / 2``: the form is bounded
    below by its smallest eigenvalue and the weight by its value at ``t = 0``.
    """
    if omega_K * T >= math.pi / 3 and omega_K > 0:
        raise DomainError("horizon must satisfy T < pi / (3 w_K)")
    form = QuadraticForm.from_gamma(gamma)
    s = _sign(gamma)
    lam_min = float(np.min(np.linalg.eigvalsh(s * form.Q)))
    C2 = lam_min * math.cos(omega_K * T) / 2
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, T, n_steps + 1)
    weight = np.cos(omega_K * (t - T))
    dt = T / n_steps
    margins = np.empty(n_samples)
    r = form.Q.shape[0]
    n = np.arange(1, modes + 1)
    for i in range(n_samples):
        a = rng.standard_normal((r, modes)) / n
        b = rng.standard_normal((r, modes)) / n
        uk = rng.standard_normal((r, 1)) + a @ np.cos(np.pi * np.outer(n, t) / T) \
            + b @ np.sin(np.pi * np.outer(n, t) / T)
        qt = np.einsum("it,ij,jt->t", uk, s * form.Q, uk)
        lhs = simpson(qt * weight, dx=dt)
        rhs = 2 * C2 * l2_norm(uk, dt) ** 2
        margins[i] = lhs - rhs
    tol = 1e-12 * np.abs(margins).max()
    return CoercivityResult(C2, margins, int(np.sum(margins < -tol)))


# -- drift scan -----------------------------------------------------------------

@dataclass
class DriftScanResult:
    drift: np.ndarray
    coercive: np.ndarray
    slack: np.ndarray
    kinds: list
    C: float
    C_lower: float
    violations: int
    tightest: list
    dropped: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.C > 0 and self.violations == 0 and math.isfinite(self.C)

    def by_kind(self):
        """Fitted ``C`` and violation count restricted to each control family."""
        out = {}
        kinds = np.array(self.kinds)
        for kind in sorted(set(self.kinds)):
            m = kinds == kind
            C, _, viol, _ = fit_drift_constant(self.drift[m], self.coercive[m], self.slack[m])
            out[kind] = {"n": int(m.sum()), "C": C, "violations": viol}
        return out

    def summary(self):
        return {"n_samples": int(self.drift.size), "dropped": self.dropped,
                "C": self.C, "C_lower": self.C_lower, "violations": self.violations,
                "passed": self.passed, "tightest": self.tightest,
                "by_kind": self.by_kind(), **self.meta}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sample", "kind", "drift", "uk_norm_sq", "slack"])
            for i, (d, a, s, kind) in enumerate(zip(self.drift, self.coercive, self.slack, self.kinds)):
                w.writerow([i, kind, repr(float(d)), repr(float(a)), repr(float(s))])

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)


def fit_drift_constant(drift, coercive, slack):
    """Largest ``C`` with ``D >= C (a - s)`` on every sample.

    Samples with ``a > s`` cap ``C`` from above; samples with ``a < s`` and
    ``D < 0`` demand a minimum ``C_lower``.  Returns
    ``(C, C_lower, violations, tightest)`` where violations are counted
    against the fitted ``C`` (every sample with ``a >= s`` and ``D <= 0``
    counts when ``C <= 0``).
    """
    drift, coercive, slack = map(np.asarray, (drift, coercive, slack))
    gap = coercive - slack
    up = gap > 0
    C = float(np.min(drift[up] / gap[up])) if up.any() else math.inf
    low = (gap < 0) & (drift < 0)
    C_lower = float(np.max(drift[low] / gap[low])) if low.any() else 0.0
    if C <= 0:
        viol = (gap >= 0) & (drift <= 0)
        margin = drift
    else:
        ref = C if math.isfinite(C) else C_lower
        margin = drift - ref * gap
        viol = margin < -1e-12 * np.abs(drift).max()
    order = np.argsort(margin)[:3]
    tightest = [{"sample": int(i), "drift": float(drift[i]), "uk_norm_sq": float(coercive[i]),
                 "slack": float(slack[i])} for i in order]
    return C, C_lower, int(viol.sum()), tightest


def scan_ensemble(T, N, r, k, n_samples, seed, amplitude, omega_K, modes=6):
    """Seeded controls scaled to ``max_l ||u_1^l||_inf = amplitude * s``, ``s`` in [0.1, 1].

    A third are random Fourier series, a third are near-resonant at ``w_K``
    with a random slow envelope, a third are zero-mean cosine series on full
    periods whose primitives up to order ``k`` vanish at ``T``.
    """
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, T, N + 1)
    n = np.arange(1, modes + 1)
    out = []
    for i in range(n_samples):
        kind = ("fourier", "resonant", "boundary_free")[i % 3]
        vals = np.zeros((r, N + 1))
        for ell in range(r):
            if kind == "fourier":
                a, b = rng.standard_normal(modes) / n, rng.standard_normal(modes) / n
                ph = 2 * np.pi * np.outer(n, t) / T
                vals[ell] = rng.standard_normal() + a @ np.cos(ph) + b @ np.sin(ph)
            elif kind == "resonant":
                env = 1 + 0.5 * rng.standard_normal() * np.cos(np.pi * t / T)
                vals[ell] = env * np.cos(omega_K * (1 + 0.05 * rng.standard_normal()) * t
                                         + rng.uniform(0, 2 * np.pi))
            else:
                a = rng.standard_normal(modes) / n
                vals[ell] = a @ np.cos(2 * np.pi * np.outer(n, t) / T)
        u = ControlGrid(T, vals)
        size = sup_norm(iterated_primitives(u, 1)[1])
        if size == 0:
            continue
        out.append((kind, u.scaled(amplitude * rng.uniform(0.1, 1.0) / size)))
    return out


def drift_samples(mus, config, controls, table=None, sign=1.0):
    """Drift, ``||u_k||^2`` and slack for each control; failures are dropped."""
    if table is None:
        table = moment_table(mus, config)
    eigen = eigendata(config)
    k, K = config.k, config.K
    rows, dropped = [], 0
    for kind, u in controls:
        try:
            traj = solve_nonlinear(mus, u, config, table=table, store=False)
        except IntegrationError:
            dropped += 1
            continue
        psi = traj.final.coeffs
        free = np.zeros_like(psi)
        free[0] = np.exp(-1j * eigen.lam[0] * u.T)
        proj = (psi[K - 1] * np.exp(1j * eigen.lam[0] * u.T)).imag
        D = (-1) ** (k + 1) * sign * proj
        uk = iterated_primitives(u, k)[k]
        rows.append((kind, D, l2_norm(uk, u.dt) ** 2, float(np.sum(np.abs(psi - free) ** 2))))
    return rows, dropped


def drift_scan(mus, config, n_samples=200, seed=0, amplitude=1e-2, T=None, n_steps=None,
               report=None, table=None) -> DriftScanResult:
    """Falsification scan of the drift inequality over a seeded ensemble.

    Raises
    ------
    HypothesisRefusal
        If the hypothesis report does not pass.
    """
    if table is None:
        table = moment_table(mus, config)
    if report is None:
        report = check_hypotheses(mus, config, table=table)
    if not report.passed:
        bad = {n: v["verdict"] for n, v in report.verdicts.items() if v["verdict"] != "pass"}
        raise HypothesisRefusal(f"hypotheses not certified: {bad}")
    eigen = eigendata(config)
    T = default_horizon(eigen.omega_K) if T is None else T
    N = n_steps or max(2, int(round(T / config.dt)))
    N += N % 2
    sign = _sign(report.gamma)
    controls = scan_ensemble(T, N, config.r, config.k, n_samples, seed, amplitude, eigen.omega_K)
    rows, dropped = drift_samples(mus, config, controls, table, sign)
    kinds = [r_[0] for r_ in rows]
    D, a, s = (np.array([r_[i] for r_ in rows]) for i in (1, 2, 3))
    C, C_lower, n_viol, tight = fit_drift_constant(D, a, s)
    meta = {"T": T, "n_steps": N, "seed": seed, "amplitude": amplitude, "k": config.k,
            "K": config.K, "J": config.J, "sign_gamma1": sign}
    return DriftScanResult(D, a, s, kinds, C, C_lower, n_viol, tight, dropped, meta)


def unreachable_sweep(result: DriftScanResult, deltas=(1e-2, 1e-3)):
    """Targets at distance ``delta`` along the lost direction, on the forbidden side.

    Their drift is ``-delta`` and their slack ``2 (1 - sqrt(1 - delta^2))``;
    the fitted inequality forbids them when ``-delta < -C * slack``.  Each
    entry also reports how the scanned samples sit relative to the bound.
    """
    out = []
    C = result.C
    envelope = result.drift - C * (result.coercive - result.slack)
    for delta in deltas:
        slack = 2 * (1 - math.sqrt(1 - delta ** 2))
        bound = -C * slack
        out.append({"delta": delta, "target_drift": -delta, "target_slack": slack,
                    "lower_bound": bound, "unreachable": bool(-delta < bound),
                    "samples_below_bound": int(np.sum(envelope < 0))})
    return out


# -- interpolation inequality ---------------------------------------------------------

def interpolation_check(k, fs, T):
    """Largest ``||f_1||^3 / ((1 + T^{3-2k}) ||f||_{H^{2k-3}} ||f_k||^2)`` over ``fs``.

    ``fs`` is an iterable of sample arrays on a uniform grid over ``[0, T]``.
    Zero signals are skipped; a vanishing ``f_k`` with nonzero ``f_1`` raises.
    """
    if k < 2:
        raise DomainError("the interpolation inequality needs k >= 2")
    ratios = []
    for f in fs:
        f = np.asarray(f, dtype=float)
        if not f.any():
            continue
        dt = T / (f.size - 1)
        prim = primitives_of(f, dt, k)[:, 0]
        n1 = l2_norm(prim[1], dt)
        nk = l2_norm(prim[k], dt)
        if nk == 0:
            if n1 != 0:
                raise ArithmeticError("||f_k|| = 0 with ||f_1|| != 0")
            continue
        denom = (1 + T ** (3 - 2 * k)) * sobolev_norm(f, 2 * k - 3, dt) * nk ** 2
        ratios.append(n1 ** 3 / denom)
    ratios = np.array(ratios)
    return (float(ratios.max()) if ratios.size else 0.0), ratios
