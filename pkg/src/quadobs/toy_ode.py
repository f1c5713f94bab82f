"""Finite-dimensional control-affine toy model and exact Lie-bracket algebra.

Vector fields are tuples of sympy polynomials with rational coefficients, so
brackets evaluated at the origin are exact.  Trajectories use classical
fourth-order Runge-Kutta in floating point.

Bracket words follow a small grammar (see the README)::

    word  ::= atom | "[" word "," word "]"
    atom  ::= "X" int | "M(" int "," int ")" | "W(" int "," int "," int ")"
            | "C(" int "," int "," int "," int ")"

``M(l,ell)`` is ``X_ell`` bracketed ``l`` times on the right with ``X_0``;
``W(p,l,ell)`` is ``[M(p-1,ell), M(p,ell)]`` padded by ``l`` drift
brackets; ``C(p,l,ell,L)`` is ``(-1)^p [M(ceil(p/2),ell), M(floor(p/2),L)]``
padded the same way.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import sympy as sp

from .errors import DomainError, IntegrationError
from .signals import ControlGrid, iterated_primitives, l2_norm, random_fourier


# -- polynomial vector fields --------------------------------------------------

def _symbols(d):
    return sp.symbols(f"x1:{d + 1}")


@dataclass(frozen=True)
class PolyVectorField:
    """Polynomial vector field on ``R^d`` with rational coefficients."""

    d: int
    components: tuple

    @classmethod
    def from_exprs(cls, exprs, d=None):
        d = len(exprs) if d is None else d
        if len(exprs) != d:
            raise DomainError(f"{len(exprs)} components for dimension {d}")
        xs = _symbols(d)
        comps = tuple(sp.Poly(sp.nsimplify(e, rational=True), *xs, domain="QQ")
                      for e in exprs)
        return cls(d, comps)

    @classmethod
    def zero(cls, d):
        return cls.from_exprs([0] * d)

    @property
    def gens(self):
        return _symbols(self.d)

    def jacobian(self):
        return [[c.diff(x) for x in self.gens] for c in self.components]

    def apply_jacobian(self, g: "PolyVectorField"):
        """``Df . g`` as a new field."""
        J = self.jacobian()
        return PolyVectorField(self.d, tuple(
            sum((J[i][j] * g.components[j] for j in range(self.d)),
                sp.Poly(0, *self.gens, domain="QQ"))
            for i in range(self.d)))

    def __sub__(self, other):
        return PolyVectorField(self.d, tuple(a - b for a, b in zip(self.components, other.components)))

    def __add__(self, other):
        return PolyVectorField(self.d, tuple(a + b for a, b in zip(self.components, other.components)))

    def scale(self, c):
        c = sp.Rational(c)
        return PolyVectorField(self.d, tuple(p * c for p in self.components))

    def at(self, point):
        """Exact value at a rational point."""
        subs = dict(zip(self.gens, (sp.Rational(v) for v in point)))
        return tuple(sp.Rational(c.as_expr().subs(subs)) for c in self.components)

    def at_zero(self):
        return tuple(sp.Rational(c.coeff_monomial(1)) for c in self.components)

    def numeric(self):
        """Fast float evaluator ``x -> f(x)``."""
        fn = sp.lambdify([self.gens], [c.as_expr() for c in self.components], "numpy")
        return lambda x: np.array(fn(x), dtype=float)

    def is_zero(self):
        return all(c.is_zero for c in self.components)

    def __eq__(self, other):
        return isinstance(other, PolyVectorField) and self.d == other.d and \
            all((a - b).is_zero for a, b in zip(self.components, other.components))

    def __hash__(self):
        return hash((self.d, tuple(str(c.as_expr()) for c in self.components)))


def lie_bracket(f: PolyVectorField, g: PolyVectorField) -> PolyVectorField:
    """``[f, g](x) = Dg(x) f(x) - Df(x) g(x)``, exactly."""
    if f.d != g.d:
        raise DomainError(f"dimension mismatch: {f.d} vs {g.d}")
    return g.apply_jacobian(f) - f.apply_jacobian(g)


# -- bracket words ---------------------------------------------------------------

@dataclass(frozen=True)
class Word:
    """Formal bracket: a generator index or a pair of sub-words."""

    gen: int | None = None
    left: "Word | None" = None
    right: "Word | None" = None
    sign: int = 1

    @classmethod
    def X(cls, i):
        return cls(gen=i)

    def bracket(self, other):
        return Word(left=self, right=other)

    def negate(self):
        return Word(self.gen, self.left, self.right, -self.sign)

    def pad(self, nu):
        """Right-iterated drift brackets ``[..[w, X0], .., X0]``."""
        w = self
        for _ in range(nu):
            w = w.bracket(Word.X(0))
        return w

    def __str__(self):
        core = f"X{self.gen}" if self.gen is not None else f"[{self.left},{self.right}]"
        return core if self.sign > 0 else f"-{core}"


def M_word(l, ell):
    return Word.X(ell).pad(l)


def W_word(p, l, ell):
    if p < 1:
        raise DomainError("W words need p >= 1")
    return M_word(p - 1, ell).bracket(M_word(p, ell)).pad(l)


def C_word(p, l, ell, L):
    if not ell < L:
        raise DomainError("C words need ell < L")
    w = M_word((p + 1) // 2, ell).bracket(M_word(p // 2, L)).pad(l)
    return w.negate() if p % 2 else w


_TOKEN = re.compile(r"\s*(?:(X)(\d+)|([MWC])\(\s*([\d\s,]+)\)|(\[)|(,)|(\]))")
_ARITY = {"M": 2, "W": 3, "C": 4}


def parse_word(text: str) -> Word:
    """Parse the bracket-word grammar; raises ``DomainError`` when malformed."""
    tokens, pos = [], 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise DomainError(f"malformed word at {pos}: {text[pos:pos + 12]!r}")
        tokens.append(m.groups())
        pos = m.end()

    def atom(tok):
        if tok[0]:
            return Word.X(int(tok[1]))
        args = [a for a in tok[3].replace(" ", "").split(",") if a]
        if len(args) != _ARITY[tok[2]]:
            raise DomainError(f"{tok[2]} takes {_ARITY[tok[2]]} indices, got {len(args)}")
        args = [int(a) for a in args]
        return {"M": M_word, "W": W_word, "C": C_word}[tok[2]](*args)

    def parse(i):
        if i >= len(tokens):
            raise DomainError("unexpected end of word")
        tok = tokens[i]
        if tok[4]:
            a, i = parse(i + 1)
            if i >= len(tokens) or not tokens[i][5]:
                raise DomainError("expected ',' inside bracket")
            b, i = parse(i + 1)
            if i >= len(tokens) or not tokens[i][6]:
                raise DomainError("expected ']' closing bracket")
            return a.bracket(b), i + 1
        if tok[0] or tok[2]:
            return atom(tok), i + 1
        raise DomainError(f"unexpected token {tok}")

    w, end = parse(0)
    if end != len(tokens):
        raise DomainError("trailing tokens after word")
    return w


def evaluate_field(word: Word, fields) -> PolyVectorField:
    """Image of a word under the homomorphism sending ``X_i`` to ``fields[i]``."""
    fields = tuple(fields)

    @lru_cache(maxsize=None)
    def ev(w):
        if w.gen is not None:
            if not 0 <= w.gen < len(fields):
                raise DomainError(f"generator X{w.gen} out of range")
            out = fields[w.gen]
        else:
            out = lie_bracket(ev(w.left), ev(w.right))
        return out if w.sign > 0 else out.scale(-1)

    return ev(word)


def evaluate_bracket_word(word, fields):
    """Exact value at the origin of a word (string or ``Word``)."""
    if isinstance(word, str):
        word = parse_word(word)
    return evaluate_field(word, fields).at_zero()


# -- the toy system ---------------------------------------------------------------

def toy_fields():
    """Drift and the two control fields of the four-dimensional example."""
    x1, x2, x3, x4 = _symbols(4)
    R = sp.Rational
    f0 = PolyVectorField.from_exprs([0, x1, 0, x1 ** 2 + R(1, 2) * x1 * x3 + 2 * x3 ** 2 - x2 ** 2])
    f1 = PolyVectorField.from_exprs([1, 0, 0, 0])
    f2 = PolyVectorField.from_exprs([0, 0, 1, -2 * x3 - x1 ** 2])
    return f0, f1, f2


def _toy_rhs(x, u):
    x1, x2, x3, _ = x
    return np.array([u[0], x1, u[1],
                     x1 * x1 + 0.5 * x1 * x3 + 2 * x3 * x3 - 2 * u[1] * x3 - x2 * x2 - u[1] * x1 * x1])


def simulate_toy(u: ControlGrid, T=None, guard=1e6, rhs=None):
    """RK4 from the origin with step ``2 dt``; midpoints use the odd samples.

    Returns the states at the even grid points, shape ``(N/2 + 1, 4)``.
    """
    if u.r != 2:
        raise DomainError("the toy system has two controls")
    if T is not None and abs(T - u.T) > 1e-12 * max(1.0, T):
        raise DomainError(f"control horizon {u.T} differs from T={T}")
    if u.N % 2:
        raise DomainError("RK4 on the control grid needs an even number of intervals")
    rhs = rhs or _toy_rhs
    h = 2 * u.dt
    vals = u.values
    x = np.zeros(4)
    out = [x]
    for n in range(0, u.N, 2):
        u0, um, u1 = vals[:, n], vals[:, n + 1], vals[:, n + 2]
        k1 = rhs(x, u0)
        k2 = rhs(x + 0.5 * h * k1, um)
        k3 = rhs(x + 0.5 * h * k2, um)
        k4 = rhs(x + h * k3, u1)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)) or np.abs(x).max() > guard:
            raise IntegrationError(f"toy state blew up at t={(n + 2) * u.dt:.3g}", step=n + 2)
        out.append(x)
    return np.array(out)


def toy_quadratic_form_check():
    """Exact eigenvalues of the toy form and of its gap to the diagonal bound.

    The toy form ``x^2 + xy/2 + 2 y^2`` dominates ``3/4 x^2 + 7/4 y^2``.
    """
    R = sp.Rational
    Q = sp.Matrix([[1, R(1, 4)], [R(1, 4), 2]])
    bound = sp.diag(R(3, 4), R(7, 4))
    diff = Q - bound
    ev_q = sorted(Q.eigenvals(multiple=True), key=lambda e: float(e))
    ev_d = sorted(diff.eigenvals(multiple=True), key=lambda e: float(e))
    zero = sp.Matrix([0, 0])
    return {"form_eigenvalues": ev_q, "difference_eigenvalues": ev_d,
            "form_definite": all(sp.simplify(e) > 0 for e in ev_q),
            "inequality_holds": all(sp.simplify(e) >= 0 for e in ev_d),
            "zero_vector_equal": (zero.T * Q * zero)[0] == (zero.T * bound * zero)[0],
            "passed": all(sp.simplify(e) > 0 for e in ev_q) and all(sp.simplify(e) >= 0 for e in ev_d)}


@dataclass
class ToyDriftResult:
    x4: np.ndarray
    x3: np.ndarray
    coercive: np.ndarray
    boundary: np.ndarray
    C: float
    tol: float

    @property
    def margins(self):
        return self.x4 - (self.C * self.coercive - self.boundary)

    @property
    def violations(self):
        return int(np.sum(self.margins < -self.tol))

    @property
    def unreachable_violations(self):
        return int(np.sum(self.x4 + self.x3 ** 2 < -self.tol))

    @property
    def passed(self):
        return self.violations == 0 and self.unreachable_violations == 0

    def summary(self):
        return {"n_samples": int(self.x4.size), "C": self.C, "violations": self.violations,
                "unreachable_violations": self.unreachable_violations,
                "min_margin": float(self.margins.min()),
                "min_x4_plus_x3sq": float((self.x4 + self.x3 ** 2).min()),
                "passed": self.passed}


def toy_ensemble(n_samples, T, amplitude, seed=0, N=200, modes=6):
    """Seeded random Fourier controls with ``||u||_inf`` spread up to ``amplitude``."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_samples):
        u = random_fourier(T, N, 2, modes, rng)
        peak = np.abs(u.values).max()
        out.append(u.scaled(amplitude * rng.uniform(0.1, 1.0) / peak))
    return out


def toy_drift_scan(n_samples=500, T=0.05, amplitude=0.05, C=0.5, seed=0, N=200, tol=1e-14):
    """``x_4(T) >= C ||u_1||^2 - x_3(T)^2`` and ``x_4 + x_3^2 >= 0`` over an ensemble."""
    rows = []
    for u in toy_ensemble(n_samples, T, amplitude, seed, N):
        x = simulate_toy(u)[-1]
        u1 = iterated_primitives(u, 1)[1]
        rows.append((x[3], x[2], l2_norm(u1, u.dt) ** 2, u1[1, -1] ** 2))
    x4, x3, a, b = (np.array(c) for c in zip(*rows))
    return ToyDriftResult(x4, x3, a, b, C, tol)


# -- general obstruction checker ---------------------------------------------------

def good_directions(fields, k, l_max=None):
    """Spanning vectors at 0 of the M, W and C families, ``l <= l_max``.

    The families run over infinitely many paddings; ``l_max`` (default
    ``2k + 2``) truncates them.
    """
    r = len(fields) - 1
    l_max = 2 * k + 2 if l_max is None else l_max
    words = [M_word(l, ell) for ell in range(1, r + 1) for l in range(l_max + 1)]
    words += [W_word(p, l, ell) for ell in range(1, r + 1) for p in range(1, k)
              for l in range(l_max + 1)]
    words += [C_word(p, l, ell, L) for ell in range(1, r + 1) for L in range(ell + 1, r + 1)
              for p in range(2 * k - 1) for l in range(l_max + 1)]
    return [evaluate_bracket_word(w, fields) for w in words], words


def obstruction_certificate(fields, k, l_max=None, n_trials=50, seed=0):
    """Search a linear form vanishing on the good directions with a definite top form.

    Returns a dict with the annihilator ``P``, the exact quadratic form
    matrix and its verdict; ``P`` is ``None`` when the good directions span
    the whole space.
    """
    d = fields[0].d
    r = len(fields) - 1
    vecs, _ = good_directions(fields, k, l_max)
    Nmat = sp.Matrix([list(v) for v in vecs]) if vecs else sp.zeros(0, d)
    ann = Nmat.nullspace() if Nmat.rows else [sp.eye(d)[:, i] for i in range(d)]
    span_dim = Nmat.rank() if Nmat.rows else 0
    if not ann:
        return {"span_dim": span_dim, "P": None, "Q": None, "definite": False}
    W = [evaluate_bracket_word(W_word(k, 0, ell), fields) for ell in range(1, r + 1)]
    Cs = {(a, b): evaluate_bracket_word(C_word(2 * k - 1, 0, a, b), fields)
          for a in range(1, r + 1) for b in range(a + 1, r + 1)}

    def form(P):
        Q = sp.zeros(r, r)
        for ell in range(r):
            Q[ell, ell] = (P.T * sp.Matrix(W[ell]))[0] / 2
        for (a, b), v in Cs.items():
            Q[a - 1, b - 1] = Q[b - 1, a - 1] = (P.T * sp.Matrix(v))[0] / 2
        return Q

    def definite(Q):
        ev = [float(e) for e in Q.eigenvals(multiple=True)]
        return all(e > 0 for e in ev) or all(e < 0 for e in ev)

    rng = np.random.default_rng(seed)
    candidates = list(ann) + [sum((int(c) * v for c, v in zip(rng.integers(-3, 4, len(ann)), ann)),
                                  sp.zeros(d, 1)) for _ in range(n_trials if len(ann) > 1 else 0)]
    for P in candidates:
        if P.is_zero_matrix:
            continue
        Q = form(P)
        if definite(Q):
            return {"span_dim": span_dim, "P": list(P), "Q": Q, "definite": True}
    return {"span_dim": span_dim, "P": list(ann[0]), "Q": form(ann[0]), "definite": False}


def random_poly_field(d, degree, rng, terms=4):
    """Random polynomial field with small integer coefficients (property tests)."""
    xs = _symbols(d)
    comps = []
    for _ in range(d):
        expr = 0
        for _ in range(terms):
            powers = rng.integers(0, degree + 1, d)
            while powers.sum() > degree:
                powers[rng.choice(np.flatnonzero(powers))] -= 1
            mono = sp.Mul(*[x ** int(p) for x, p in zip(xs, powers)])
            expr += sp.Rational(int(rng.integers(-5, 6)), int(rng.integers(1, 4))) * mono
        comps.append(expr)
    return PolyVectorField.from_exprs(comps)


__all__ = ["PolyVectorField", "lie_bracket", "Word", "parse_word", "evaluate_bracket_word",
           "evaluate_field", "M_word", "W_word", "C_word", "toy_fields", "simulate_toy",
           "toy_quadratic_form_check", "toy_drift_scan", "good_directions",
           "obstruction_certificate", "random_poly_field"]
