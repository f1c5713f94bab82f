"""Obstruction coefficients: c-sequences, gamma series and hypothesis checks.

For channels ``l, L`` the products

    c_j^{l,L} = <mu_l phi_K, phi_j> <mu_L phi_1, phi_j>

weighted by powers of ``nu_j = lam_K - lam_j`` and ``w_j = lam_j - lam_1``
give the series

    gamma_p^{l,L} = sum_j nu_j^ceil(p/2) w_j^floor(p/2) c_j^{l,L}
                        - nu_j^floor(p/2) w_j^ceil(p/2) c_j^{L,l},

which also equal ``(-1)^p <[ad^ceil(p/2) B_l, ad^floor(p/2) B_L] phi_1, phi_K>``
with ``ad(X) = X A - A X``.  Both routes are implemented; the second only
serves as a cross-check.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import qr

from .errors import ConsistencyError, DomainError
from .spectral_basis import eigendata, moment_table

ILL_CONDITIONED = "ill-conditioned series"


def _half_powers(p):
    # exponents (of nu, of omega) on the c^{l,L} term; swapped on c^{L,l}
    return (p + 1) // 2, p // 2


def _eps_floor(scale):
    return (100 * np.finfo(float).eps * scale) ** 2


def tail_estimate(terms):
    """Tail of ``sum terms`` beyond the last index.

    Sum of ``|terms|`` over the last quartile, plus a geometric
    extrapolation when the last-quartile envelope is decaying.
    """
    a = np.abs(np.asarray(terms, dtype=float))
    n = a.size
    if n == 0:
        return 0.0
    q = a[-max(1, n // 4):]
    tail = float(q.sum())
    # monotone envelope from the right avoids zero crossings
    env = np.maximum.accumulate(q[::-1])[::-1]
    pos = env > 0
    if pos.sum() >= 2:
        idx = np.arange(q.size)[pos]
        slope = np.polyfit(idx, np.log(env[pos]), 1)[0]
        rho = math.exp(min(slope, 0.0))
        if rho < 1.0:
            tail += float(env[-1]) * rho / (1.0 - rho)
    return tail


# -- c sequences -------------------------------------------------------------

@dataclass(frozen=True)
class CSequence:
    """``values[l-1, L-1, j-1] = c_j^{l,L}``; ``tail_bound[l-1, L-1]`` of the
    ``j^{4k}``-weighted series."""

    values: np.ndarray
    tail_bound: np.ndarray
    k: int
    K: int

    @property
    def r(self):
        return self.values.shape[0]

    @property
    def J(self):
        return self.values.shape[2]

    def pair(self, ell, L):
        return self.values[ell - 1, L - 1]


def c_sequence(table, config) -> CSequence:
    if table.J < config.K:
        raise DomainError(f"J={table.J} < K={config.K}")
    c = table.row(config.K)[:, None, :] * table.row(1)[None, :, :]
    j = np.arange(1, table.J + 1, dtype=float)
    weight = j ** (4 * config.k)
    tails = np.array([[tail_estimate(c[a, b] * weight) for b in range(c.shape[1])]
                      for a in range(c.shape[0])])
    c.flags.writeable = False
    return CSequence(values=c, tail_bound=tails, k=config.k, K=config.K)


def decay_exponent(seq, scale=None):
    """Fitted polynomial decay rate ``s`` with ``|seq_j| ~ j^{-s}``.

    The fit uses the monotone envelope over the upper half of the indices
    lying above the floating-point noise floor.  A sequence that reaches the
    floor before half of its length is reported as ``inf``.
    """
    a = np.abs(np.asarray(seq, dtype=float))
    if not a.any():
        return math.inf
    scale = float(np.sqrt(a.max())) if scale is None else scale
    floor = _eps_floor(scale)
    env = np.maximum.accumulate(a[::-1])[::-1]
    alive = np.flatnonzero(env > floor)
    if alive.size == 0:
        return math.inf
    last = alive[-1] + 1
    if last < a.size // 2 or last < 8:
        return math.inf
    lo = last // 2
    j = np.arange(lo + 1, last + 1, dtype=float)
    slope = np.polyfit(np.log(j), np.log(env[lo:last]), 1)[0]
    return float(-slope)


# -- gamma -------------------------------------------------------------------

def gamma_terms(a, b, p, eigen):
    """Summands of ``gamma_p(a, b)`` (``a`` carries the ``nu``-heavy weight)."""
    J = len(a)
    nu, om = eigen.nu[:J], eigen.omega[:J]
    hi, lo = _half_powers(p)
    return nu ** hi * om ** lo * np.asarray(a) - nu ** lo * om ** hi * np.asarray(b)


def gamma_series(a, b, p, eigen):
    return float(np.sum(gamma_terms(a, b, p, eigen)))


@dataclass(frozen=True)
class GammaTable:
    """``values[p, l-1, L-1] = gamma_p^{l,L}`` for ``p = 0..2k-1``.

    All ordered pairs are filled; entries with ``l > L`` are the series with
    the roles of the channels exchanged.
    """

    values: np.ndarray
    tails: np.ndarray
    k: int
    K: int
    J: int
    warnings: tuple = ()

    @property
    def r(self):
        return self.values.shape[1]

    def get(self, p, ell, L=None):
        return float(self.values[p, ell - 1, (ell if L is None else L) - 1])

    def tail(self, p, ell, L=None):
        return float(self.tails[p, ell - 1, (ell if L is None else L) - 1])

    def top(self):
        return self.values[2 * self.k - 1]

    def flagged(self, p, ell, L):
        tag = f"gamma[{p}][{ell}][{L}]"
        return any(w.startswith(tag) for w in self.warnings)

    def to_dict(self):
        return {"k": self.k, "K": self.K, "J": self.J,
                "values": self.values.tolist(), "tails": self.tails.tolist(),
                "warnings": list(self.warnings)}

    @classmethod
    def from_dict(cls, doc):
        return cls(np.array(doc["values"], dtype=float), np.array(doc["tails"], dtype=float),
                   doc["k"], doc["K"], doc["J"], tuple(doc.get("warnings", ())))

    @classmethod
    def injected(cls, values, k, K=2, J=0):
        """Table from given values with zero tails, for what-if checks."""
        v = np.asarray(values, dtype=float)
        return cls(v, np.zeros_like(v), k, K, J)


def gamma_table(c: CSequence, eigen, config) -> GammaTable:
    """Partial sums to ``J`` with tail estimates and conditioning warnings."""
    r, k = c.r, config.k
    vals = np.zeros((2 * k, r, r))
    tails = np.zeros_like(vals)
    notes = []
    for p in range(2 * k):
        for ell in range(r):
            for L in range(r):
                terms = gamma_terms(c.values[ell, L], c.values[L, ell], p, eigen)
                s = float(terms.sum())
                tail = tail_estimate(terms)
                vals[p, ell, L], tails[p, ell, L] = s, tail
                if abs(s) > 1e-8 and tail > 1e-3 * abs(s):
                    notes.append(f"gamma[{p}][{ell + 1}][{L + 1}]: {ILL_CONDITIONED} "
                                 f"(tail {tail:.3g} vs partial sum {s:.3g})")
    for p in range(0, 2 * k, 2):
        diag = np.abs(np.diagonal(vals[p]))
        # exact cancellation term by term, any residue is an arithmetic error
        if np.any(diag > 1e-12 * (1.0 + np.abs(vals).max())):
            raise ConsistencyError(f"even diagonal gamma_{p} not zero: {diag}")
    for w in notes:
        warnings.warn(w, RuntimeWarning, stacklevel=2)
    return GammaTable(vals, tails, k, config.K, c.J, tuple(notes))


def _ad_power(X, A, m):
    for _ in range(m):
        X = X @ A - A @ X
    return X


def commutator_gamma(table, eigen, p, ell, L, config) -> float:
    """``(-1)^p`` times the ``(K, 1)`` entry of ``[ad^ceil(p/2) B_l, ad^floor(p/2) B_L]``.

    Dense matrix commutators on the truncated space, no series formula.
    """
    A = np.diag(eigen.lam)
    hi, lo = _half_powers(p)
    X = _ad_power(np.array(table.entries[ell - 1]), A, hi)
    Y = _ad_power(np.array(table.entries[L - 1]), A, lo)
    bracket = X @ Y - Y @ X
    return float((-1) ** p * bracket[config.K - 1, 0])


def commutator_scale(table, eigen, p, ell, L, config) -> float:
    """Sum of absolute values of the products entering ``commutator_gamma``."""
    hi, lo = _half_powers(p)
    K = config.K
    lam = eigen.lam
    BK = table.entries[:, K - 1, :]
    B1 = table.entries[:, :, 0]
    wK = np.abs(lam - lam[K - 1])
    w1 = np.abs(lam[0] - lam)
    s = np.abs(BK[ell - 1] * wK ** hi * B1[L - 1] * w1 ** lo)
    s += np.abs(BK[L - 1] * wK ** lo * B1[ell - 1] * w1 ** hi)
    return float(s.sum())


# -- beta / delta --------------------------------------------------------------

@dataclass(frozen=True)
class BetaTable:
    rows: tuple

    def __getitem__(self, nu):
        return self.rows[nu]

    def __len__(self):
        return len(self.rows)


def _recursion(row0, row1, nu_max):
    rows = [list(row0), list(row1)]
    for nu in range(nu_max - 1):
        prev2, prev1 = rows[nu], rows[nu + 1]
        new = []
        for l in range(nu + 3):
            a = prev1[l] if l < len(prev1) else 0
            b = prev2[l - 2] if 0 <= l - 2 < len(prev2) else 0
            new.append(a - b)
        rows.append(new)
    return tuple(tuple(r) for r in rows[:nu_max + 1])


def beta_table(nu_max) -> BetaTable:
    """Integer rows ``beta^nu``, ``nu = 0..nu_max``, by the three-term recursion."""
    if nu_max < 0:
        raise DomainError("nu_max must be >= 0")
    return BetaTable(_recursion([1], [1, 1], nu_max))


def _identity_columns(a, b, p, nu, eigen):
    wK = eigen.omega_K
    return np.array([(-1) ** l * gamma_series(a, b, 2 * p + l, eigen) * wK ** (nu - l)
                     for l in range(nu + 1)])


def _reversed_lhs(a, b, p, nu, eigen):
    J = len(a)
    om, nv = eigen.omega[:J], eigen.nu[:J]
    return float(np.sum(b * om ** (p + nu) * nv ** p - a * om ** p * nv ** (p + nu)))


def delta_table(nu_max, eigen=None, n_samples=12, seed=0) -> BetaTable:
    """Integer rows ``delta^nu`` for the identity with ``a`` and ``b`` exchanged.

    Coefficients are fitted by least squares against brute-force sums on
    random short sequences, rounded, then checked against the three-term
    recursion started from ``[-1]`` and ``[0, 1]``.
    """
    if nu_max < 0:
        raise DomainError("nu_max must be >= 0")
    if eigen is None:
        from .spectral_basis import ProblemConfig
        eigen = eigendata(ProblemConfig(K=2, J=8))
    rng = np.random.default_rng(seed)
    fitted = []
    support = min(eigen.J, 6)
    for nu in range(nu_max + 1):
        rows, rhs = [], []
        for _ in range(max(n_samples, nu + 2)):
            a = rng.standard_normal(support)
            b = rng.standard_normal(support)
            p = int(rng.integers(0, 2))
            cols = _identity_columns(a, b, p, nu, eigen)
            scale = np.abs(cols).max() or 1.0
            rows.append(cols / scale)
            rhs.append(_reversed_lhs(a, b, p, nu, eigen) / scale)
        coef = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)[0]
        ints = np.rint(coef)
        if np.max(np.abs(coef - ints)) > 1e-6:
            raise ConsistencyError(f"delta^{nu} fit is not integral: {coef}", values=coef)
        fitted.append(tuple(int(x) for x in ints))
    if nu_max >= 1:
        expected = _recursion([-1], [0, 1], nu_max)
    else:
        expected = ((-1,),)
    if tuple(fitted) != expected:
        raise ConsistencyError(f"fitted delta rows {fitted} differ from recursion {expected}")
    return BetaTable(tuple(fitted))


@dataclass(frozen=True)
class WeightedSumCheck:
    lhs: float
    rhs: float
    residual: float
    scale: float

    def __iter__(self):
        return iter((self.lhs, self.rhs, self.residual))

    @property
    def relative(self):
        return self.residual / self.scale if self.scale > 0 else self.residual


def weighted_sum_identity(a, b, p, nu, eigen, beta, swapped=False) -> WeightedSumCheck:
    """Both sides of the weighted-sum identity for sequences ``a, b``.

    ``lhs = sum_j a_j w_j^{p+nu} nu_j^p - b_j w_j^p nu_j^{p+nu}`` and
    ``rhs = sum_l beta^nu_l (-1)^l gamma_{2p+l}(a, b) w_K^{nu-l}``.  With
    ``swapped=True`` the left side exchanges ``a`` and ``b`` and ``beta``
    should be the delta table.  ``scale`` sums the magnitudes of every
    product entering either side.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    J = a.size
    if b.size != J or J > eigen.J:
        raise DomainError("sequences must share a length within the eigendata")
    om, nv = eigen.omega[:J], eigen.nu[:J]
    first, second = (b, a) if swapped else (a, b)
    lhs_terms = np.concatenate([first * om ** (p + nu) * nv ** p,
                                -second * om ** p * nv ** (p + nu)])
    lhs = float(lhs_terms.sum())
    row = beta[nu]
    rhs = 0.0
    scale = float(np.abs(lhs_terms).sum())
    for l, coef in enumerate(row):
        if coef == 0:
            continue
        w = eigen.omega_K ** (nu - l)
        terms = gamma_terms(a, b, 2 * p + l, eigen)
        rhs += coef * (-1) ** l * float(terms.sum()) * w
        scale += abs(coef) * float(np.abs(terms).sum()) * w
    return WeightedSumCheck(lhs, rhs, abs(lhs - rhs), scale)


# -- quadratic form and hypotheses ----------------------------------------------

@dataclass(frozen=True)
class QuadraticForm:
    Q: np.ndarray
    eigenvalues: np.ndarray

    @classmethod
    def from_gamma(cls, gamma: GammaTable):
        top = gamma.top()
        r = top.shape[0]
        Q = np.zeros((r, r))
        for ell in range(r):
            Q[ell, ell] = top[ell, ell] / 2
            for L in range(ell + 1, r):
                Q[ell, L] = Q[L, ell] = top[ell, L] / 2
        return cls(Q, np.sort(np.linalg.eigvalsh(Q)))

    def __call__(self, a):
        a = np.asarray(a, dtype=float)
        return float(a @ self.Q @ a)

    def is_definite(self, threshold=0.0):
        ev = self.eigenvalues
        same_sign = bool(np.all(ev > 0) or np.all(ev < 0))
        return same_sign and float(np.min(np.abs(ev))) > threshold


def q_direct(gamma: GammaTable, a):
    """The form written out as a sum over channels, without a matrix."""
    top = gamma.top()
    r = top.shape[0]
    out = 0.0
    for ell in range(r):
        out += top[ell, ell] * a[ell] ** 2 / 2
        for L in range(ell + 1, r):
            out += top[ell, L] * a[ell] * a[L]
    return float(out)


@dataclass
class HypothesisReport:
    """Verdicts keyed by hypothesis name; each carries its threshold.

    A verdict is ``"pass"``, ``"fail"`` or ``"inconclusive"``.
    """

    verdicts: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def passed(self):
        names = ("reg", "lin", "conv", "null", "pos")
        return all(self.verdicts.get(n, {}).get("verdict") == "pass" for n in names)

    def verdict(self, name):
        return self.verdicts[name]["verdict"]

    def to_dict(self):
        return {"passed": self.passed, "config": self.config,
                "verdicts": self.verdicts, "warnings": list(self.warnings)}

    def dumps(self, **kw):
        return json.dumps(self.to_dict(), **kw)


ZERO_TOL = 1e-8


def _verdict(ok, inconclusive=False):
    if inconclusive:
        return "inconclusive"
    return "pass" if ok else "fail"


def positivity_verdict(gamma: GammaTable, threshold=None):
    """Definiteness of the top-order form, with the two-channel shortcut.

    The default threshold exceeds ``r`` times the largest tail bound, so a
    margin above it survives any perturbation of the entries within their
    tails; an ill-conditioned entry only makes the verdict inconclusive
    when the margin is missing.
    """
    form = QuadraticForm.from_gamma(gamma)
    p = 2 * gamma.k - 1
    r = gamma.r
    if threshold is None:
        top_tails = [gamma.tails[p, a, b] for a in range(r) for b in range(a, r)]
        threshold = max(ZERO_TOL, (r + 1) * max(top_tails))
    ok = form.is_definite(threshold)
    flagged = not ok and any(gamma.flagged(p, a + 1, b + 1) for a in range(r) for b in range(a, r))
    evidence = {"eigenvalues": form.eigenvalues.tolist(), "Q": form.Q.tolist()}
    if r == 2:
        g1, g2, g12 = gamma.top()[0, 0], gamma.top()[1, 1], gamma.top()[0, 1]
        evidence["two_channel_test"] = {"gamma12_sq": float(g12 ** 2),
                                        "gamma1_gamma2": float(g1 * g2),
                                        "holds": bool(g12 ** 2 < g1 * g2)}
    return {"verdict": _verdict(ok, flagged), "threshold": threshold, "evidence": evidence}


def _regularity(mus):
    kinds = {getattr(mu, "kind", None) for mu in mus}
    smooth = kinds <= {"bumps", "sine"}
    return {"verdict": "pass" if smooth else "inconclusive",
            "threshold": "smooth closed-form family",
            "evidence": {"kinds": sorted(str(k) for k in kinds)}}


def check_hypotheses(mus, config, table=None, gamma: GammaTable | None = None,
                     zero_tol=ZERO_TOL) -> HypothesisReport:
    """Evaluate every hypothesis with its numeric evidence.

    ``gamma`` may be injected to judge a what-if table; the linear and
    convergence checks still use the moments of ``mus``.
    """
    if table is None:
        table = moment_table(mus, config)
    eigen = eigendata(config)
    k, K = config.k, config.K
    report = HypothesisReport(config=config.to_dict())
    report.warnings.extend(_table_warnings(table))
    quad_suspect = table.quad_error > zero_tol
    report.verdicts["reg"] = _regularity(mus)

    lin_vals = np.abs(table.entries[:, 0, K - 1])
    report.verdicts["lin"] = {
        "verdict": _verdict(bool(np.all(lin_vals <= zero_tol)),
                            quad_suspect and bool(np.any(lin_vals > zero_tol / 10))
                            and bool(np.all(lin_vals <= 10 * zero_tol))),
        "threshold": zero_tol,
        "evidence": {"moments_1K": lin_vals.tolist()}}

    c = c_sequence(table, config)
    exps = [[decay_exponent(c.values[a, b]) for b in range(c.r)] for a in range(c.r)]
    worst = min(min(row) for row in exps)
    need = 4 * k + 1
    report.verdicts["conv"] = {
        "verdict": _verdict(worst > need),
        "threshold": need,
        "evidence": {"decay_exponents": exps, "weighted_tails": c.tail_bound.tolist()}}

    if gamma is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            gamma = gamma_table(c, eigen, config)
    report.warnings.extend(gamma.warnings)

    worst_null, bad, flagged = 0.0, [], False
    for p in range(2 * k - 1):
        for a in range(c.r):
            for b in range(a, c.r):
                g, tail = gamma.values[p, a, b], gamma.tails[p, a, b]
                thr = max(zero_tol, 3 * tail)
                worst_null = max(worst_null, abs(g))
                if abs(g) > thr:
                    bad.append({"p": p, "l": a + 1, "L": b + 1, "value": float(g),
                                "threshold": thr})
                flagged |= gamma.flagged(p, a + 1, b + 1)
    report.verdicts["null"] = {
        "verdict": _verdict(not bad, flagged and not bad),
        "threshold": f"max({zero_tol:g}, 3*tail)",
        "evidence": {"max_abs": worst_null, "violations": bad}}

    report.verdicts["pos"] = positivity_verdict(gamma)

    j = np.arange(1, table.J + 1, dtype=float)
    diag = j ** 3 * np.abs(table.entries[:, 0, :]).sum(axis=0)
    report.verdicts["linear_test"] = {
        "verdict": "pass" if diag.min() > zero_tol else "fail",
        "threshold": zero_tol,
        "evidence": {"min_j3_moment": float(diag.min()), "argmin_j": int(np.argmin(diag) + 1),
                     "note": "diagnostic only; fails at j = K whenever lin holds"}}
    report.gamma = gamma
    return report


def _table_warnings(table):
    if table.quad_error > 1e-10:
        return [f"moment quadrature error {table.quad_error:.3g}"]
    return []


# -- rank diagnostic ------------------------------------------------------------

@dataclass(frozen=True)
class IndependenceReport:
    rank: int
    expected: int
    singular_values: np.ndarray
    condition: float
    columns: tuple
    minor_condition: float
    deficient: tuple = ()

    @property
    def full_rank(self):
        return self.rank == self.expected


def independence_rank(table, eigen, config) -> IndependenceReport:
    """Numerical rank of ``{(<mu_l phi_1, phi_j> (-i w_j)^p)_j : p < k, l <= r}``.

    Rows are normalised before the SVD (rank is unchanged).  Pivoted QR on
    the complex family picks ``k r`` indices ``j`` whose square minor is
    well conditioned.
    """
    k, r = config.k, table.r
    J = table.J
    if J < 2 * k * r:
        raise DomainError(f"J={J} < 2kr={2 * k * r}")
    labels, rows = [], []
    for p in range(k):
        for ell in range(r):
            rows.append(table.entries[ell, 0, :] * (-1j * eigen.omega[:J]) ** p)
            labels.append((p, ell + 1))
    Z = np.array(rows)
    norms = np.linalg.norm(Z, axis=1)
    Zn = Z / np.where(norms > 0, norms, 1.0)[:, None]
    R = np.hstack([Zn.real, Zn.imag])
    s = np.linalg.svd(R, compute_uv=False)
    cutoff = 1e-10 * (s.max() if s.size and s.max() > 0 else 1.0)
    rank = int(np.sum(s > cutoff)) if s.max() > 0 else 0
    cond = float(s[0] / s[-1]) if s[-1] > 0 else math.inf
    _, _, piv = qr(Zn, pivoting=True, mode="economic")
    cols = tuple(sorted(int(c) + 1 for c in piv[:k * r]))
    minor = Zn[:, [c - 1 for c in cols]]
    sm = np.linalg.svd(minor, compute_uv=False)
    minor_cond = float(sm[0] / sm[-1]) if sm[-1] > 0 else math.inf
    deficient = ()
    if rank < k * r:
        U, _, _ = np.linalg.svd(R)
        combo = U[:, -1]
        deficient = tuple((labels[i], float(combo[i])) for i in np.argsort(-np.abs(combo))
                          if abs(combo[i]) > 1e-6)
    return IndependenceReport(rank, k * r, s, cond, cols, minor_cond, deficient)
