"""Construction of two-channel dipole sets with a definite quadratic obstruction.

Each ``mu_l`` is a linear combination of fixed smooth bumps.  The unit
interval is cut into ``2r`` equal parts and channel ``l`` owns parts ``l`` and
``l + r``, so the channels never overlap while each one straddles the middle
of the interval.  Because every moment is linear in the amplitudes, the
constraint values are bilinear forms in them; they are evaluated here from
per-bump moment rows with their own series code, independent of the
``brackets`` module that later judges the result.
"""
from __future__ import annotations

import json
import math
from importlib import resources
from dataclasses import dataclass, field

import numpy as np

from .errors import DesignError, DomainError
from .spectral_basis import BumpSum, DipoleSet, ProblemConfig, cosine_transform, eigendata

_GAP = 0.01
_MAX_WEIGHT = 2.0 ** 30
_WIDTHS = (0.7, 1.0)


def bump_layout(r, m, gap=_GAP, widths=_WIDTHS):
    """Bump intervals per channel, ``m`` bumps split over its two parts.

    Within a part the bumps have widths spread over ``widths`` (fractions of
    the part) and are aligned alternately to its left and right ends.  Wide
    bumps keep the moment sequences decaying fast.  Bumps of one channel
    overlap each other; intervals of different channels are disjoint.
    """
    if m < 2 or m % 2:
        raise DomainError("family size m must be an even number >= 2")
    part = 1.0 / (2 * r)
    n = m // 2
    fracs = np.linspace(widths[0], widths[1], n) if n > 1 else np.array([widths[1]])
    layout = []
    for ell in range(r):
        intervals = []
        for start in (ell * part, (ell + r) * part):
            lo, hi = start + gap, start + part - gap
            length = hi - lo
            for i, frac in enumerate(fracs):
                w = frac * length
                left = lo if i % 2 == 0 else hi - w
                intervals.append((float(left), float(left + w)))
        layout.append(intervals)
    return layout


def _check_disjoint(layout):
    spans = [(min(a for a, _ in iv), max(b for _, b in iv), ell)
             for ell, iv in enumerate(layout)]
    for ell, intervals in enumerate(layout):
        for other, ivs in enumerate(layout):
            if other == ell:
                continue
            for a, b in intervals:
                for c, d in ivs:
                    if a < d and c < b:
                        raise AssertionError(f"bumps of channels {ell + 1} and {other + 1} overlap")
    return spans


@dataclass
class DesignProblem:
    """Constraint system for amplitudes ``x`` of shape ``(r * m,)``.

    Rows, in order: the ``(1, K)`` moments of every channel; odd diagonal
    coefficients of order ``<= 2k-3``; cross coefficients of order
    ``<= 2k-1`` (only with ``solve_cross``); then one penalty row per channel
    for the top-order sign.

    With channels on disjoint supports every cross coefficient vanishes
    whatever the amplitudes, so its computed value is series truncation
    noise with a near-zero gradient.  By default those rows are reported by
    ``cross_values`` but left out of the solve.
    """

    config: ProblemConfig
    m: int
    sign: float = 1.0
    floor: float = 1.0
    layout: list = field(default=None)
    solve_cross: bool = False

    def __post_init__(self):
        cfg = self.config
        if cfg.r != 2:
            raise DomainError("the design covers r = 2; other r are not supported")
        if self.layout is None:
            self.layout = bump_layout(cfg.r, self.m)
        _check_disjoint(self.layout)
        if self.m < self.n_equalities + 2:
            raise DomainError(f"family size m={self.m} below the {self.n_equalities} "
                              f"equality constraints + 2")
        eig = eigendata(cfg)
        J, K = cfg.J, cfg.K
        self.nu = np.array(eig.nu)
        self.omega = np.array(eig.omega)
        # per-bump rows <b phi_K, phi_j> and <b phi_1, phi_j>
        j = np.arange(1, J + 1)
        self.rowK = np.zeros((cfg.r, self.m, J))
        self.row1 = np.zeros((cfg.r, self.m, J))
        for ell, intervals in enumerate(self.layout):
            for i, (lo, hi) in enumerate(intervals):
                C, _ = cosine_transform(BumpSum(((1.0, lo, hi),)), J + K, tol=cfg.tol)
                self.rowK[ell, i] = C[np.abs(K - j)] - C[K + j]
                self.row1[ell, i] = C[np.abs(1 - j)] - C[1 + j]
        scale = np.abs(self.rowK).max()
        self.scale = float(scale)

    @property
    def n_equalities(self):
        k, r = self.config.k, self.config.r
        pairs = r * (r - 1) // 2
        return r + r * (k - 1) + pairs * 2 * k

    def _weights(self, p):
        hi, lo = (p + 1) // 2, p // 2
        return self.nu ** hi * self.omega ** lo, self.nu ** lo * self.omega ** hi

    def coefficient(self, x, p, ell, L):
        a = x.reshape(self.config.r, self.m)
        vK = a[:, :, None] * self.rowK
        v1 = a[:, :, None] * self.row1
        mK = vK.sum(axis=1)
        m1 = v1.sum(axis=1)
        w_a, w_b = self._weights(p)
        return float(np.sum(w_a * mK[ell] * m1[L] - w_b * mK[L] * m1[ell]))

    def equalities(self, x):
        cfg = self.config
        k, r, K = cfg.k, cfg.r, cfg.K
        a = x.reshape(r, self.m)
        out = []
        for ell in range(r):
            out.append(float(a[ell] @ self.row1[ell, :, K - 1]))
        for ell in range(r):
            for p in range(1, 2 * k - 2, 2):
                out.append(self.coefficient(x, p, ell, ell))
        if self.solve_cross:
            out.extend(self.cross_values(x))
        return np.array(out)

    def cross_values(self, x):
        r, k = self.config.r, self.config.k
        return np.array([self.coefficient(x, p, ell, L) for ell in range(r)
                         for L in range(ell + 1, r) for p in range(2 * k)])

    def tops(self, x):
        p = 2 * self.config.k - 1
        return np.array([self.coefficient(x, p, ell, ell) for ell in range(self.config.r)])

    def residuals(self, x, weight=1.0):
        eq = self.equalities(x)
        shortfall = np.maximum(0.0, self.floor - self.sign * self.tops(x))
        return np.concatenate([eq, weight * shortfall])

    def dipoles(self, x):
        a = x.reshape(self.config.r, self.m)
        return DipoleSet(tuple(BumpSum(tuple((float(a[ell, i]), lo, hi)
                                             for i, (lo, hi) in enumerate(iv)))
                               for ell, iv in enumerate(self.layout)))


def constraint_residuals(params, problem: DesignProblem, weight=1.0):
    """Stacked constraint vector: equalities, then sign-penalty rows."""
    return problem.residuals(np.asarray(params, dtype=float), weight)


def _jacobian(fun, x, base):
    h_scale = max(1.0, float(np.abs(x).max()))
    h = 1e-6 * h_scale
    Jm = np.empty((base.size, x.size))
    for i in range(x.size):
        xp = x.copy()
        xp[i] += h
        Jm[:, i] = (fun(xp) - base) / h
    return Jm


@dataclass
class DesignResult:
    dipoles: DipoleSet
    report: object
    params: np.ndarray
    residuals: np.ndarray
    tops: np.ndarray
    iterations: int
    provenance: dict


def _solve(problem, x0, max_iter, tol, row_scale):
    weight = 1.0
    x = x0.copy()
    lam = 1e-3

    def fun(z, w):
        return problem.residuals(z, w) / row_scale

    def satisfied(z):
        eq = problem.equalities(z)
        eq = eq / row_scale[:eq.size]
        return np.max(np.abs(eq)) <= tol and np.all(problem.sign * problem.tops(z) >= 0.5 * problem.floor)

    it = 0
    history = []
    while it < max_iter and not satisfied(x):
        f = fun(x, weight)
        cost = float(f @ f)
        Jm = _jacobian(lambda z: fun(z, weight), x, f)
        g = Jm.T @ f
        H = Jm.T @ Jm
        improved = False
        for _ in range(30):
            A = H + lam * (np.diag(np.diag(H)) + 1e-12 * np.trace(H) / H.shape[0] * np.eye(H.shape[0]))
            step = np.linalg.solve(A, -g)
            trial = x + step
            f_new = fun(trial, weight)
            if float(f_new @ f_new) < cost:
                x, improved = trial, True
                lam = max(lam / 3, 1e-12)
                break
            lam *= 4
        it += 1
        history.append(cost)
        if np.any(problem.sign * problem.tops(x) < problem.floor):
            weight = min(2 * weight, _MAX_WEIGHT)
        if not improved:
            break
    return x, it, history


def _diag_form(problem, ell, p):
    # gamma_p^{l,l}(a) = a^T G a on the amplitudes of channel l
    w_a, w_b = problem._weights(p)
    G = (problem.rowK[ell] * (w_a - w_b)) @ problem.row1[ell].T
    return 0.5 * (G + G.T)


def _null_basis(row):
    # orthonormal basis of the amplitudes annihilating one linear constraint
    _, _, vt = np.linalg.svd(row[None, :])
    return vt[1:].T


def structured_start(problem: DesignProblem, rng, n_pairs=200):
    """Amplitudes meeting the linear and the low diagonal constraints exactly.

    Per channel: random vectors in the null space of the ``(1, K)`` moment
    are paired across the sign of ``gamma_1``; along the segment joining a
    pair the quadratic ``gamma_1`` has a root, and the root with the largest
    signed top coefficient is kept.  Cross constraints are left to the
    least-squares polish.  Each channel is normalised to unit length.
    """
    cfg = problem.config
    k, K = cfg.k, cfg.K
    top_p = 2 * k - 1
    x = np.zeros((cfg.r, problem.m))
    for ell in range(cfg.r):
        N = _null_basis(problem.row1[ell, :, K - 1])
        Gt = N.T @ _diag_form(problem, ell, top_p) @ N
        if k == 1:
            w, V = np.linalg.eigh(problem.sign * Gt)
            a = N @ V[:, -1]
        else:
            G1 = N.T @ _diag_form(problem, ell, 1) @ N
            best, best_val = None, -np.inf
            for _ in range(n_pairs):
                u, v = rng.standard_normal((2, N.shape[1]))
                qu, qv, quv = u @ G1 @ u, v @ G1 @ v, u @ G1 @ v
                if qu * qv >= 0:
                    continue
                # (u + t v)^T G1 (u + t v) = qu + 2 t quv + t^2 qv = 0
                disc = quv * quv - qu * qv
                for t in ((-quv + math.sqrt(disc)) / qv, (-quv - math.sqrt(disc)) / qv):
                    z = u + t * v
                    z /= np.linalg.norm(z)
                    val = problem.sign * (z @ Gt @ z)
                    if val > best_val:
                        best, best_val = z, val
            if best is None:
                raise DesignError("no sign change of gamma_1 found in the amplitude space")
            a = N @ best
        x[ell] = a / np.linalg.norm(a)
    return x.ravel()


def design_mu(config: ProblemConfig, seed=0, m=8, floor=None, sign=1.0, initial=None,
              max_iter=200, tol=1e-10, restarts=4) -> DesignResult:
    """Search bump amplitudes meeting every equality and the sign condition.

    Starts come from ``structured_start`` (then plain Gaussian draws as a
    fallback); each is polished by damped Gauss-Newton on the stacked
    residual, the top-order sign entering through a penalty whose weight
    doubles while it is violated.  A start is accepted only when every
    equality, relative to the size of its terms, is below ``tol`` and each ``sign * gamma_{2k-1}^l`` is at
    least half the floor.

    Parameters
    ----------
    config : ProblemConfig
        ``r`` must be 2.
    seed : int
        Seeds every random draw; the result is a deterministic function of
        ``(config, seed, m, sign)``.
    m : int
        Bumps per channel, at least the number of equality constraints + 2.
    floor : float, optional
        Required ``sign * gamma_{2k-1}^l`` per channel; by default a quarter
        of the smallest value at the first start.
    initial : array, optional
        Starting amplitudes, shape ``(2, m)``; no iteration is spent when
        they already solve the system.

    Raises
    ------
    DesignError
        If no start reaches the tolerance with the sign condition, or the
        independent hypothesis check rejects the result.
    """
    from .brackets import check_hypotheses

    problem = DesignProblem(config, m, sign=sign)
    rng = np.random.default_rng(seed)
    starts = []
    if initial is not None:
        starts.append(("initial", np.asarray(initial, dtype=float).ravel()))
    for _ in range(restarts):
        try:
            starts.append(("structured", structured_start(problem, rng)))
        except DesignError:
            break
    starts.extend(("gaussian", rng.standard_normal(config.r * m)) for _ in range(restarts))
    if floor is None:
        first = starts[0][1]
        floor = 0.25 * float(np.min(sign * problem.tops(first)))
        if floor <= 0:
            floor = 0.25 * float(np.max(np.abs(problem.tops(first))))
    problem.floor = floor
    best = None
    for attempt, (origin, x0) in enumerate(starts):
        row_scale = _row_scale(problem, x0)
        x, iters, history = _solve(problem, x0, max_iter, tol, row_scale)
        eq = problem.equalities(x)
        rel = np.max(np.abs(eq) / _row_scale(problem, x)[:eq.size])
        tops = problem.tops(x)
        ok = rel <= tol and np.all(sign * tops >= 0.5 * floor)
        if best is None or rel < best[3]:
            best = (x, eq, tops, rel)
        if not ok:
            continue
        dipoles = problem.dipoles(x)
        report = check_hypotheses(dipoles, config)
        provenance = {"seed": seed, "attempt": attempt, "start": origin, "iterations": iters,
                      "m": m, "floor": floor, "sign": sign, "tol": tol,
                      "max_abs_residual": float(np.max(np.abs(eq))),
                      "max_rel_residual": float(rel),
                      "residuals": eq.tolist(), "tops": tops.tolist(),
                      "cross_values": problem.cross_values(x).tolist(),
                      "config": config.to_dict(), "cost_history": history}
        if not report.passed:
            raise DesignError("designed set failed the independent hypothesis check: "
                              + str({k: v["verdict"] for k, v in report.verdicts.items()}),
                              best=dipoles, residuals=eq)
        return DesignResult(dipoles, report, x.reshape(config.r, m), eq, tops, iters, provenance)
    x, eq, tops, rel = best
    hint = ("sign condition not reached from these seeds; try another seed or the opposite sign"
            if rel <= tol else "residual stagnated above tolerance")
    raise DesignError(f"design failed: {hint} (max relative residual {rel:.3g}, "
                      f"tops {tops})", best=problem.dipoles(x), residuals=eq)


def _row_scale(problem, x0):
    # magnitude of each constraint at the start, so rows enter on equal footing
    x = np.abs(x0) + 1e-3
    rK, r1 = np.abs(problem.rowK), np.abs(problem.row1)
    cfg = problem.config
    k, r, K = cfg.k, cfg.r, cfg.K
    a = x.reshape(r, problem.m)
    mK = (a[:, :, None] * rK).sum(axis=1)
    m1 = (a[:, :, None] * r1).sum(axis=1)

    def size(p, ell, L):
        w_a, w_b = problem._weights(p)
        return float(np.sum(w_a * mK[ell] * m1[L] + w_b * mK[L] * m1[ell]))

    scales = [float(a[ell] @ r1[ell, :, K - 1]) for ell in range(r)]
    scales += [size(p, ell, ell) for ell in range(r) for p in range(1, 2 * k - 2, 2)]
    if problem.solve_cross:
        scales += [size(p, ell, L) for ell in range(r) for L in range(ell + 1, r)
                   for p in range(2 * k)]
    scales += [size(2 * k - 1, ell, ell) for ell in range(r)]
    s = np.array(scales)
    return np.where(s > 0, s, 1.0)


# -- shipped solutions ---------------------------------------------------------

# (k, K) -> design settings; J large enough that the top tails sit far below
# the smallest eigenvalue of the form
GOLDEN = {1: dict(K=2, J=128, m=8, seed=0), 2: dict(K=2, J=600, m=12, seed=0)}


def golden_path(k):
    return resources.files("quadobs") / "data" / f"golden_k{k}_K{GOLDEN[k]['K']}.json"


def golden_config(k) -> ProblemConfig:
    g = GOLDEN[k]
    return ProblemConfig(k=k, K=g["K"], r=2, J=g["J"])


def solve_golden(k) -> DesignResult:
    g = GOLDEN[k]
    return design_mu(golden_config(k), seed=g["seed"], m=g["m"])


def golden_document(result: DesignResult):
    prov = {key: val for key, val in result.provenance.items() if key != "cost_history"}
    return {"schema": 1, "dipoles": result.dipoles.to_dict(), "provenance": prov,
            "params": result.params.tolist(), "report": result.report.to_dict()}


def load_golden(k):
    """Shipped solution for ``k``: ``(DipoleSet, ProblemConfig, document)``."""
    if k not in GOLDEN:
        raise DomainError(f"no shipped design for k={k}")
    doc = json.loads(golden_path(k).read_text())
    return DipoleSet.from_dict(doc["dipoles"]), golden_config(k), doc


def expansion_pairs():
    """Shipped ``(name, DipoleSet, ProblemConfig, ControlGrid, eps)`` fixtures.

    Golden designs have small moments, so their control profiles carry a
    large amplitude to keep both remainders above the rounding floor.
    """
    from .signals import control_from_spec

    doc = json.loads((resources.files("quadobs") / "data" / "expansion_pairs.json").read_text())
    out = []
    for pair in doc["pairs"]:
        if isinstance(pair["mu"], str):
            mus, cfg, _ = load_golden(int(pair["mu"].split(":")[1]))
        else:
            mus = DipoleSet.from_dict(pair["mu"])
            cfg = ProblemConfig(k=1, K=2, r=mus.r)
        cfg = cfg.replace(**doc["config"])
        out.append((pair["name"], mus, cfg, control_from_spec(pair["control"]), doc["eps"]))
    return out
