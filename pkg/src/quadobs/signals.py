"""Control signals on a uniform time grid: primitives, norms, file formats."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.integrate import cumulative_simpson, cumulative_trapezoid, simpson

from .errors import DomainError


@dataclass(frozen=True)
class ControlGrid:
    """``r`` real control channels sampled at ``t_i = i T / N``, ``i = 0..N``."""

    T: float
    values: np.ndarray

    def __post_init__(self):
        vals = np.atleast_2d(np.asarray(self.values, dtype=float))
        if vals.shape[1] < 3:
            raise DomainError("a control grid needs N >= 2 steps")
        if not np.all(np.isfinite(vals)):
            raise DomainError("control values must be finite")
        if not self.T > 0:
            raise DomainError("horizon T must be positive")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def r(self):
        return self.values.shape[0]

    @property
    def N(self):
        return self.values.shape[1] - 1

    @property
    def dt(self):
        return self.T / self.N

    @property
    def times(self):
        return np.linspace(0.0, self.T, self.N + 1)

    def midpoints(self):
        """Control at step midpoints, from the piecewise-linear interpolant."""
        return 0.5 * (self.values[:, 1:] + self.values[:, :-1])

    def scaled(self, factor):
        return ControlGrid(self.T, factor * self.values)

    @classmethod
    def zeros(cls, T, N, r):
        return cls(T, np.zeros((r, N + 1)))

    @classmethod
    def from_functions(cls, T, N, funcs):
        t = np.linspace(0.0, T, N + 1)
        return cls(T, np.array([np.broadcast_to(f(t), t.shape) for f in funcs]))


def default_steps(T, lam_max):
    """Step count with ``dt <= min(1e-3 T, 0.1 / lam_max)``, rounded up to even."""
    dt = min(1e-3 * T, 0.1 / lam_max)
    n = int(math.ceil(T / dt))
    return n + (n % 2)


@dataclass(frozen=True)
class PrimitiveStack:
    """``prims[n, l]`` is the n-th iterated primitive of channel l; ``prims[0] = u``."""

    T: float
    prims: np.ndarray
    scheme: str

    @property
    def depth(self):
        return self.prims.shape[0] - 1

    def __getitem__(self, n):
        return self.prims[n]


def _cumulative(y, dx, scheme):
    if scheme == "simpson":
        return cumulative_simpson(y, dx=dx, axis=-1, initial=0.0)
    return cumulative_trapezoid(y, dx=dx, axis=-1, initial=0.0)


def iterated_primitives(u: ControlGrid, depth: int) -> PrimitiveStack:
    """Primitives ``u_1 .. u_depth`` vanishing at ``t = 0``.

    Composite Simpson when the step count is even, trapezoid otherwise; the
    scheme used is recorded on the result.
    """
    if depth < 1:
        raise DomainError("depth must be >= 1")
    scheme = "simpson" if u.N % 2 == 0 else "trapezoid"
    out = [np.asarray(u.values)]
    for _ in range(depth):
        nxt = _cumulative(out[-1], u.dt, scheme)
        nxt[..., 0] = 0.0
        out.append(nxt)
    prims = np.array(out)
    prims.flags.writeable = False
    return PrimitiveStack(T=u.T, prims=prims, scheme=scheme)


def primitives_of(values, dt, depth):
    """Iterated primitives of a raw array (last axis = time)."""
    T = dt * (np.shape(values)[-1] - 1)
    vals = np.atleast_2d(values)
    return iterated_primitives(ControlGrid(T, vals), depth).prims


# -- norms -------------------------------------------------------------------

def _grid(f, dt):
    if isinstance(f, ControlGrid):
        return np.asarray(f.values), f.dt
    if dt is None:
        raise DomainError("dt is required for raw arrays")
    return np.asarray(f), dt


def l2_norm(f, dt=None):
    """L2(0, T) norm by Simpson's rule; channels are combined Euclidean-wise."""
    vals, h = _grid(f, dt)
    return math.sqrt(max(0.0, float(np.sum(simpson(np.abs(vals) ** 2, dx=h, axis=-1)))))


def sup_norm(f):
    vals = f.values if isinstance(f, ControlGrid) else np.asarray(f)
    return float(np.max(np.abs(vals))) if vals.size else 0.0


def _fd_weights(z, x, m):
    """Fornberg's weights for derivatives 0..m at ``z`` on nodes ``x``."""
    n = len(x)
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for s in range(mn, 0, -1):
                    c[i, s] = c1 * (s * c[i - 1, s - 1] - c5 * c[i - 1, s]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for s in range(mn, 0, -1):
                c[j, s] = (c4 * c[j, s] - s * c[j, s - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def _stencil_width(order):
    # fourth-order accurate, centred where the grid allows
    width = order + 4
    return width + 1 - width % 2


def derivative_matrix(n_points, dt, order):
    """Sparse finite-difference matrix for the ``order``-th derivative.

    Centred stencils in the interior, shifted one-sided stencils of the same
    width near the ends (no ghost values).  Fourth-order accurate.
    """
    width = _stencil_width(order)
    if width > n_points:
        raise DomainError(f"stencil of width {width} exceeds grid of {n_points} points")
    half = width // 2
    offsets = np.arange(width)
    interior = _fd_weights(0.0, (offsets - half) * 1.0, order) / dt ** order
    rows, cols, data = [], [], []
    for i in range(n_points):
        start = min(max(i - half, 0), n_points - width)
        if start == i - half:
            w = interior
        else:
            w = _fd_weights(float(i - start), offsets * 1.0, order) / dt ** order
        rows.extend([i] * width)
        cols.extend(range(start, start + width))
        data.extend(w)
    return sparse.csr_matrix((data, (rows, cols)), shape=(n_points, n_points))


def sobolev_norm(u, m, dt=None):
    """``(sum_{i<=m} ||D^i u||^2)^(1/2)`` with finite-difference derivatives."""
    vals, h = _grid(u, dt)
    vals = np.atleast_2d(vals)
    n_points = vals.shape[-1]
    if m < 0:
        raise DomainError("Sobolev order must be >= 0")
    if m > 0 and m * _stencil_width(m) >= n_points - 1:
        raise DomainError(f"H^{m} stencil does not fit on a grid of {n_points} points")
    total = l2_norm(vals, h) ** 2
    for i in range(1, m + 1):
        D = derivative_matrix(n_points, h, i)
        total += l2_norm((D @ vals.T).T, h) ** 2
    return math.sqrt(total)


def wminus1inf_proxy(u: ControlGrid):
    """Sup-norm of the first primitive, max over channels.

    Stand-in for the W^{-1,inf} size of the control: every smallness
    condition downstream is phrased through ``||u_1||_inf``.
    """
    return sup_norm(iterated_primitives(u, 1)[1])


def boundary_values(stack: PrimitiveStack, k: int):
    """``out[p-1, l] = u_p^l(T)`` for ``p = 1..k``."""
    if stack.depth < k:
        raise DomainError(f"primitive stack has depth {stack.depth} < k={k}")
    return np.array(stack.prims[1:k + 1, :, -1])


# -- generators and files ------------------------------------------------------

def random_fourier(T, N, r, modes, rng, amplitude=1.0):
    """Random real Fourier series per channel, coefficients ~ N(0, 1) / n."""
    t = np.linspace(0.0, T, N + 1)
    n = np.arange(1, modes + 1)
    vals = np.zeros((r, N + 1))
    for ell in range(r):
        a = rng.standard_normal(modes) / n
        b = rng.standard_normal(modes) / n
        a0 = rng.standard_normal()
        phase = 2 * np.pi * np.outer(n, t) / T
        vals[ell] = a0 + a @ np.cos(phase) + b @ np.sin(phase)
    return ControlGrid(T, amplitude * vals)


def _channel(spec, t, T):
    kind = spec.get("type")
    if kind == "constant":
        return np.full_like(t, float(spec["value"]))
    if kind == "sinusoid":
        omega = spec.get("omega")
        if omega is None:
            omega = 2 * np.pi * spec.get("cycles", 1) / T
        return spec.get("amplitude", 1.0) * np.cos(omega * t + spec.get("phase", 0.0))
    if kind == "polynomial":
        return np.polynomial.polynomial.polyval(t, spec["coeffs"])
    if kind == "random_fourier":
        rng = np.random.default_rng(spec.get("seed", 0))
        grid = random_fourier(T, t.size - 1, 1, spec.get("modes", 5), rng,
                              spec.get("amplitude", 1.0))
        return grid.values[0]
    raise DomainError(f"unknown control generator type {kind!r}")


def control_from_spec(doc, T=None, N=None):
    """Build a grid from a generator document.

    ``{"T": .., "N": .., "channels": [{"type": "constant"|"sinusoid"|
    "polynomial"|"random_fourier", ...}, ...]}``; explicit ``T``/``N``
    arguments override the document.
    """
    T = float(T if T is not None else doc["T"])
    N = int(N if N is not None else doc["N"])
    t = np.linspace(0.0, T, N + 1)
    return ControlGrid(T, np.array([_channel(c, t, T) for c in doc["channels"]]))


def read_control_csv(path):
    """Columns ``t, u1, .., ur`` on a uniform grid starting at 0."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    if header[0].strip() != "t":
        raise DomainError("first CSV column must be 't'")
    t = body[:, 0]
    steps = np.diff(t)
    if t[0] != 0 or np.max(np.abs(steps - steps.mean())) > 1e-9 * max(1.0, t[-1]):
        raise DomainError("CSV controls must sit on a uniform grid starting at t=0")
    return ControlGrid(float(t[-1]), body[:, 1:].T.copy())


def write_control_csv(u: ControlGrid, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"u{ell}" for ell in range(1, u.r + 1)])
        for i, t in enumerate(u.times):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in u.values[:, i]])


def load_control(path_or_json, T=None, N=None):
    """Read a control from a CSV file, a JSON generator file or inline JSON."""
    text = str(path_or_json)
    if text.lstrip().startswith("{"):
        return control_from_spec(json.loads(text), T, N)
    if text.endswith(".csv"):
        return read_control_csv(text)
    with open(text) as fh:
        return control_from_spec(json.load(fh), T, N)
