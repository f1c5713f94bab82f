"""Dirichlet eigenbasis on (0, 1), dipolar moments and their moment matrices.

Mode numbers are 1-based in every public signature (``eval_mode(1, x)`` is
the ground mode).  Arrays indexed by mode are 0-based: entry ``j - 1``
belongs to mode ``j``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, QuadratureError
from .quadrature import adaptive_gauss_legendre

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class ProblemConfig:
    """Integers and tolerances shared by every experiment.

    ``J`` defaults to ``max(8 * K, 64)``.
    """

    k: int = 1
    K: int = 2
    r: int = 2
    J: int | None = None
    T: float = 0.1
    dt: float = 1e-4
    tol: float = 1e-10

    def __post_init__(self):
        if self.J is None:
            object.__setattr__(self, "J", max(8 * self.K, 64))
        for name in ("k", "K", "r", "J"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise DomainError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.J < max(self.K, 2):
            raise DomainError(f"J={self.J} must be >= max(K, 2)={max(self.K, 2)}")
        if not (self.T > 0 and self.dt > 0 and self.tol > 0):
            raise DomainError("T, dt and tol must be positive")
        if self.dt >= self.T:
            raise DomainError(f"dt={self.dt} must be smaller than T={self.T}")

    @property
    def n_steps(self):
        return max(2, int(round(self.T / self.dt)))

    def replace(self, **changes):
        fields = dict(k=self.k, K=self.K, r=self.r, J=self.J, T=self.T,
                      dt=self.dt, tol=self.tol)
        fields.update(changes)
        return ProblemConfig(**fields)

    def to_dict(self):
        return dict(k=self.k, K=self.K, r=self.r, J=self.J, T=self.T,
                    dt=self.dt, tol=self.tol)


@dataclass(frozen=True)
class EigenData:
    lam: np.ndarray
    omega: np.ndarray
    nu: np.ndarray
    K: int

    @property
    def J(self):
        return self.lam.size

    @property
    def omega_K(self):
        return self.omega[self.K - 1]


def eigendata(config: ProblemConfig) -> EigenData:
    """Eigenvalues ``(j pi)^2`` and the gaps measured from modes 1 and K."""
    j = np.arange(1, config.J + 1, dtype=float)
    lam = (j * np.pi) ** 2
    omega = lam - lam[0]
    nu = lam[config.K - 1] - lam
    for arr in (lam, omega, nu):
        arr.flags.writeable = False
    return EigenData(lam=lam, omega=omega, nu=nu, K=config.K)


def eval_mode(j, x):
    """``sqrt(2) sin(j pi x)``; ``x`` may be a scalar or an array in [0, 1]."""
    if int(j) != j or j < 1:
        raise DomainError(f"mode index must be a positive integer, got {j!r}")
    xa = np.asarray(x, dtype=float)
    if np.any((xa < 0) | (xa > 1)) or not np.all(np.isfinite(xa)):
        raise DomainError("x must lie in [0, 1]")
    out = SQRT2 * np.sin(j * np.pi * xa)
    # exact zeros at the walls, sin(j pi) is only ~1e-16 in floating point
    out = np.where((xa == 0) | (xa == 1), 0.0, out)
    return float(out) if np.ndim(x) == 0 else out


# -- dipolar moments --------------------------------------------------------

def unit_bump(x, left, right):
    """``exp(-1 / (s (1 - s)))`` with ``s`` the affine image of ``x`` in [0, 1]."""
    x = np.asarray(x, dtype=float)
    s = (x - left) / (right - left)
    inside = (s > 0) & (s < 1)
    out = np.zeros_like(s)
    si = s[inside]
    out[inside] = np.exp(-1.0 / (si * (1.0 - si)))
    return out


@dataclass(frozen=True)
class SineSeries:
    """``mu(x) = sum_n coeffs[n-1] sin(n pi x)``."""

    coeffs: tuple
    kind: str = field(default="sine", init=False)

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        n = np.arange(1, len(self.coeffs) + 1)
        return np.asarray(self.coeffs) @ np.sin(np.pi * np.multiply.outer(n, x))

    def pieces(self):
        return [(1.0, self, 0.0, 1.0)]

    def params(self):
        return list(self.coeffs)


@dataclass(frozen=True)
class BumpSum:
    """Sum of smooth bumps ``amplitude * exp(-1/(s(1-s)))`` on ``(left, right)``.

    ``bumps`` holds ``(amplitude, left, right)`` triples with
    ``0 < left < right < 1``.
    """

    bumps: tuple
    kind: str = field(default="bumps", init=False)

    def __post_init__(self):
        bumps = tuple((float(a), float(lo), float(hi)) for a, lo, hi in self.bumps)
        for _, lo, hi in bumps:
            if not (0.0 < lo < hi < 1.0):
                raise DomainError(f"bump support ({lo}, {hi}) not strictly inside (0, 1)")
        object.__setattr__(self, "bumps", bumps)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for amp, lo, hi in self.bumps:
            out = out + amp * unit_bump(x, lo, hi)
        return out

    def pieces(self):
        return [(amp, _UnitBump(lo, hi), lo, hi) for amp, lo, hi in self.bumps]

    def params(self):
        return [list(b) for b in self.bumps]

    @property
    def amplitudes(self):
        return np.array([b[0] for b in self.bumps])


@dataclass(frozen=True)
class _UnitBump:
    left: float
    right: float

    def __call__(self, x):
        return unit_bump(x, self.left, self.right)


_KINDS = {"sine": lambda p: SineSeries(tuple(p)),
          "bumps": lambda p: BumpSum(tuple(tuple(b) for b in p))}


@dataclass(frozen=True)
class DipoleSet:
    mus: tuple

    def __post_init__(self):
        object.__setattr__(self, "mus", tuple(self.mus))
        if not self.mus:
            raise DomainError("a DipoleSet needs at least one dipolar moment")

    @property
    def r(self):
        return len(self.mus)

    def __len__(self):
        return len(self.mus)

    def __iter__(self):
        return iter(self.mus)

    def to_dict(self):
        return {"r": self.r,
                "mus": [{"kind": mu.kind, "params": mu.params()} for mu in self.mus]}

    @classmethod
    def from_dict(cls, doc):
        try:
            mus = [_KINDS[m["kind"]](m["params"]) for m in doc["mus"]]
        except KeyError as exc:
            raise DomainError(f"malformed DipoleSet document: missing/unknown {exc}") from None
        if "r" in doc and doc["r"] != len(mus):
            raise DomainError(f"r={doc['r']} but {len(mus)} dipolar moments given")
        return cls(tuple(mus))

    def dumps(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def loads(cls, text):
        return cls.from_dict(json.loads(text))


def load_dipoles(path):
    with open(path) as fh:
        doc = json.load(fh)
    # command outputs wrap a design document; designs wrap the set next to
    # a provenance block
    if "result" in doc:
        doc = doc["result"]
    if "dipoles" in doc:
        doc = doc["dipoles"]
    return DipoleSet.from_dict(doc)


def save_dipoles(dipoles, path, **extra):
    doc = dipoles.to_dict() if not extra else {"dipoles": dipoles.to_dict(), **extra}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)


# -- moments ----------------------------------------------------------------

def _pieces(mu):
    if hasattr(mu, "pieces"):
        return mu.pieces()
    return [(1.0, mu, 0.0, 1.0)]


def _initial_panels(width, max_freq):
    # at most half an oscillation of the fastest component per starting panel
    return max(4, int(math.ceil(width * max_freq / 1.0)))


def moment(mu, j, p, tol=1e-10):
    """``<mu phi_j, phi_p>`` by adaptive Gauss-Legendre quadrature.

    ``mu`` is a dipole function or any vectorized callable on [0, 1].
    """
    for idx in (j, p):
        if int(idx) != idx or idx < 1:
            raise DomainError(f"mode index must be a positive integer, got {idx!r}")
    total = 0.0
    for amp, func, lo, hi in _pieces(mu):
        def integrand(x, func=func):
            return func(x) * 2.0 * np.sin(j * np.pi * x) * np.sin(p * np.pi * x)
        value, _ = adaptive_gauss_legendre(
            integrand, lo, hi, tol=tol,
            initial_panels=_initial_panels(hi - lo, j + p))
        total += amp * float(value)
    return total


def cosine_transform(mu, m_max, tol=1e-10):
    """``C_m = int_0^1 mu(x) cos(m pi x) dx`` for ``m = 0..m_max``.

    Returns ``(C, error_bound)``.
    """
    m = np.arange(m_max + 1, dtype=float)
    total = np.zeros(m_max + 1)
    err = 0.0
    for amp, func, lo, hi in _pieces(mu):
        def integrand(x, func=func):
            return np.cos(np.pi * np.multiply.outer(m, x)) * func(x)
        value, e = adaptive_gauss_legendre(
            integrand, lo, hi, tol=tol,
            initial_panels=_initial_panels(hi - lo, m_max))
        total += amp * value
        err += abs(amp) * e
    return total, err


def moment_matrix_from_cosines(C, J):
    """``B[j-1, p-1] = C_|j-p| - C_(j+p)``, the product-to-sum identity."""
    j = np.arange(1, J + 1)
    return C[np.abs(j[:, None] - j[None, :])] - C[j[:, None] + j[None, :]]


@dataclass(frozen=True)
class MomentTable:
    """``entries[l, j-1, p-1] = <mu_l phi_j, phi_p>``."""

    entries: np.ndarray
    quad_error: float

    @property
    def r(self):
        return self.entries.shape[0]

    @property
    def J(self):
        return self.entries.shape[1]

    def row(self, mode):
        """``<mu_l phi_mode, phi_j>`` for all l and j, shape ``(r, J)``."""
        return self.entries[:, mode - 1, :]


def moment_table(mus: DipoleSet, config: ProblemConfig, tol=None) -> MomentTable:
    tol = config.tol if tol is None else tol
    J = config.J
    if mus.r != config.r:
        raise DomainError(f"config.r={config.r} but DipoleSet has r={mus.r}")
    mats, err = [], 0.0
    for ell, mu in enumerate(mus, start=1):
        try:
            C, e = cosine_transform(mu, 2 * J, tol=tol)
        except QuadratureError as exc:
            raise QuadratureError(f"moment table for mu_{ell}: {exc}",
                                  exc.estimate, exc.error) from exc
        B = moment_matrix_from_cosines(C, J)
        asym = np.max(np.abs(B - B.T))
        if asym > tol:
            raise AssertionError(f"moment matrix {ell} asymmetric by {asym:g}")
        mats.append(B)
        err += 2 * e
    entries = np.array(mats)
    entries.flags.writeable = False
    return MomentTable(entries=entries, quad_error=err)


def sine_moment_exact(coeffs, j, p):
    """Closed-form ``<mu phi_j, phi_p>`` for a finite sine series."""
    total = 0.0
    for n, a in enumerate(coeffs, start=1):
        total += a * (_sin_cos(n, abs(j - p)) - _sin_cos(n, j + p))
    return total


def _sin_cos(n, m):
    # int_0^1 sin(n pi x) cos(m pi x) dx for integers n >= 1, m >= 0
    if (n + m) % 2 == 0:
        return 0.0
    return 2.0 * n / (math.pi * (n * n - m * m))
