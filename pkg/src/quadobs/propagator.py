"""Galerkin-truncated bilinear Schrodinger dynamics and its expansion terms.

In the eigenbasis the state ``c`` obeys ``i c' = Lambda c - (u(t) . B) c``
with ``Lambda = diag(lam_j)`` and ``B_l`` the moment matrices.  One step of
length ``dt`` is the Strang composition

    exp(-i Lambda dt/2) exp(i dt u_mid . B) exp(-i Lambda dt/2),

the middle factor evaluated through the eigendecomposition of the real
symmetric matrix ``u_mid . B``.

The first and second order terms ``Psi`` and ``xi`` of the expansion in the
control size are stepped alongside the state with the same splitting,
so they are the exact first and second derivatives of the discrete flow.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from .errors import ConsistencyError, DomainError, IntegrationError
from .kernel import pair_coefficients, quadratic_coefficient
from .signals import ControlGrid
from .spectral_basis import eigendata, moment_table


@dataclass(frozen=True)
class SpectralState:
    """Coordinates of a wave function in the ``phi_j`` basis."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.ndim != 1:
            raise DomainError("state coefficients must be a 1-D vector")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @property
    def J(self):
        return self.coeffs.size

    @property
    def norm(self):
        return float(np.linalg.norm(self.coeffs))

    def component(self, j):
        return complex(self.coeffs[j - 1])

    @classmethod
    def basis(cls, j, J):
        c = np.zeros(J, dtype=complex)
        c[j - 1] = 1.0
        return cls(c)

    @classmethod
    def ground(cls, J):
        return cls.basis(1, J)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n_times, J) complex
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise DomainError("trajectory times must be strictly increasing")

    @property
    def final(self):
        return SpectralState(self.states[-1])

    def norms(self):
        return np.linalg.norm(self.states, axis=1)

    def to_csv(self, path, j_export=None):
        j_export = self.states.shape[1] if j_export is None else min(j_export, self.states.shape[1])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            head = ["t"]
            for j in range(1, j_export + 1):
                head += [f"re_c{j}", f"im_c{j}"]
            w.writerow(head)
            for t, c in zip(self.times, self.states):
                row = [repr(float(t))]
                for z in c[:j_export]:
                    row += [repr(float(z.real)), repr(float(z.imag))]
                w.writerow(row)

    def summary(self):
        norms = self.norms()
        c = self.states[-1]
        return {
            "T": float(self.times[-1]),
            "n_steps": int(self.meta.get("n_steps", len(self.times) - 1)),
            "final_coeffs": [[float(z.real), float(z.imag)] for z in c],
            "final_norm": float(norms[-1]),
            "max_norm_drift": float(np.max(np.abs(norms - norms[0]))),
            "scheme": self.meta.get("scheme", "strang"),
            **{k: v for k, v in self.meta.items() if k not in ("scheme", "n_steps")},
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)


# -- stepping ----------------------------------------------------------------

class _Stepper:
    """Strang splitting factors for a fixed moment table and step size."""

    def __init__(self, entries, lam, dt):
        self.B = np.asarray(entries)
        self.dt = dt
        self.half = np.exp(-0.5j * lam * dt)
        self._key = None
        self._eig = None

    def coupling(self, v):
        # cached: piecewise-constant controls reuse one decomposition
        key = v.tobytes()
        if key != self._key:
            M = np.tensordot(v, self.B, axes=1)
            w, V = np.linalg.eigh(M)
            self._eig = (V, np.exp(1j * self.dt * w), w)
            self._key = key
        return self._eig

    def kick(self, v, x):
        V, ph, _ = self.coupling(v)
        return V @ (ph * (V.T @ x))

    def apply_V(self, v, x):
        return np.tensordot(v, self.B, axes=1) @ x


def _setup(mus, u, config, table):
    if table is None:
        table = moment_table(mus, config)
    if u.r != table.r:
        raise DomainError(f"control has {u.r} channels, dipole set has {table.r}")
    lam = eigendata(config).lam
    return table, lam


def _check_finite(x, step):
    if not np.all(np.isfinite(x)):
        raise IntegrationError(f"non-finite state at step {step}", step=step)


def solve_nonlinear(mus, u: ControlGrid, config, psi0=None, table=None,
                    store=True) -> Trajectory:
    """Integrate the truncated system on the control's time grid.

    Parameters
    ----------
    mus : DipoleSet
        Used only when ``table`` is not supplied.
    u : ControlGrid
        Steps follow this grid; the coupling uses the midpoint average of
        adjacent samples.
    psi0 : SpectralState, optional
        Unit initial state, ground state by default.
    store : bool
        Keep every intermediate state; otherwise only the endpoints.
    """
    table, lam = _setup(mus, u, config, table)
    J = table.J
    psi0 = SpectralState.ground(J) if psi0 is None else psi0
    if psi0.J != J:
        raise DomainError(f"initial state has length {psi0.J}, expected J={J}")
    if abs(psi0.norm - 1.0) > 1e-10:
        raise DomainError(f"initial state must have unit norm, got {psi0.norm!r}")
    step = _Stepper(table.entries, lam, u.dt)
    mids = u.midpoints()
    x = np.array(psi0.coeffs)
    out = [x.copy()] if store else None
    for n in range(u.N):
        x = step.half * step.kick(mids[:, n], step.half * x)
        _check_finite(x, n)
        if store:
            out.append(x.copy())
    states = np.array(out) if store else np.array([psi0.coeffs, x])
    times = u.times if store else np.array([0.0, u.T])
    return Trajectory(times, states, {"scheme": "strang", "n_steps": u.N,
                                      "dt": u.dt, "J": J})


@dataclass(frozen=True)
class ExpansionTerms:
    """Full state and expansion terms at the final time, ``phi_j`` coordinates."""

    psi: SpectralState
    free: SpectralState
    Psi: SpectralState
    xi: SpectralState


def expansion_terms(mus, u: ControlGrid, config, table=None) -> ExpansionTerms:
    """Step the state, the free solution, ``Psi`` and ``xi`` from the ground state.

    With ``D = exp(-i Lambda dt/2)`` and ``V = u_mid . B`` one step reads

        Psi <- D (D Psi + i dt V D psi_free)
        xi  <- D (D xi + i dt V D Psi - dt^2/2 V^2 D psi_free)

    which are the first and second derivatives in ``epsilon`` of the Strang
    step for ``epsilon u``.  ``xi`` therefore solves the second-order system
    driven by ``Psi`` with the same splitting as the state itself.
    """
    table, lam = _setup(mus, u, config, table)
    J = table.J
    step = _Stepper(table.entries, lam, u.dt)
    dt = u.dt
    mids = u.midpoints()
    psi = np.zeros(J, dtype=complex)
    psi[0] = 1.0
    free = psi.copy()
    Psi = np.zeros(J, dtype=complex)
    xi = np.zeros(J, dtype=complex)
    D = step.half
    for n in range(u.N):
        v = mids[:, n]
        f_mid = D * free
        P_mid = D * Psi
        Vf = step.apply_V(v, f_mid)
        xi = D * (D * xi + 1j * dt * step.apply_V(v, P_mid) - 0.5 * dt * dt * step.apply_V(v, Vf))
        Psi = D * (P_mid + 1j * dt * Vf)
        free = D * f_mid
        psi = D * step.kick(v, D * psi)
        _check_finite(psi, n)
    return ExpansionTerms(*(SpectralState(x) for x in (psi, free, Psi, xi)))


def solve_linearized(mus, u: ControlGrid, config, table=None) -> SpectralState:
    """First-order term at ``T`` from its explicit oscillatory-integral formula.

    ``Psi_j(T) = i sum_l <mu_l phi_1, phi_j> int_0^T u^l e^{i w_j t} dt
    e^{-i lam_j T}``, integrals by Simpson's rule on the control grid.
    Returned in ``phi_j`` coordinates, so the ``e^{-i lam_j T}`` phase of
    the free modes is included.
    """
    table, lam = _setup(mus, u, config, table)
    omega = lam - lam[0]
    t = u.times
    phase = np.exp(1j * np.outer(omega, t))
    integrals = simpson(np.asarray(u.values)[:, None, :] * phase[None], dx=u.dt, axis=-1)
    first_row = table.row(1)
    coeff = 1j * np.sum(first_row * integrals, axis=0) * np.exp(-1j * lam * u.T)
    return SpectralState(coeff)


@dataclass(frozen=True)
class QuadraticPaths:
    kernel: complex
    stepped: complex
    tolerance: float

    @property
    def difference(self):
        return abs(self.kernel - self.stepped)


def quadratic_coeff_paths(mus, u: ControlGrid, config, table=None) -> QuadraticPaths:
    """``<xi(T), phi_K e^{-i lam_1 T}>`` by the kernel functional and by stepping."""
    table, lam = _setup(mus, u, config, table)
    eigen = eigendata(config)
    c = pair_coefficients(table, config.K)
    via_kernel = quadratic_coefficient(u, c, eigen)
    xi = expansion_terms(mus, u, config, table).xi
    via_steps = xi.component(config.K) * np.exp(1j * lam[0] * u.T)
    tol = max(1e-7, 10 * u.dt ** 2)
    return QuadraticPaths(complex(via_kernel), complex(via_steps), tol)


def solve_quadratic_coeff(mus, u: ControlGrid, config, table=None) -> complex:
    """Quadratic coefficient of the lost direction, cross-checked by two routes.

    Raises
    ------
    ConsistencyError
        If the kernel functional and the stepped second-order term differ
        by more than ``max(1e-7, 10 dt^2)``.
    """
    paths = quadratic_coeff_paths(mus, u, config, table)
    if not paths.difference <= paths.tolerance:
        raise ConsistencyError(
            f"quadratic coefficient paths disagree: kernel {paths.kernel:.12g}, "
            f"stepped {paths.stepped:.12g} (|diff| {paths.difference:.3g} > "
            f"{paths.tolerance:.3g})", values=(paths.kernel, paths.stepped))
    return paths.kernel


# -- remainder orders -------------------------------------------------------

_FLOOR = 100 * np.finfo(float).eps


@dataclass(frozen=True)
class ExpansionScan:
    eps: np.ndarray
    linear_remainder: np.ndarray
    quadratic_remainder: np.ndarray
    linear_slope: float
    quadratic_slope: float
    degenerate: bool
    warnings: tuple = ()

    def to_dict(self):
        return {"eps": self.eps.tolist(),
                "linear_remainder": self.linear_remainder.tolist(),
                "quadratic_remainder": self.quadratic_remainder.tolist(),
                "linear_slope": self.linear_slope,
                "quadratic_slope": self.quadratic_slope,
                "degenerate": self.degenerate,
                "warnings": list(self.warnings)}


def _loglog_slope(eps, rem, label, notes):
    keep = rem > _FLOOR
    for e in eps[~keep]:
        notes.append(f"{label} remainder at eps={e:g} below precision floor; excluded")
    if keep.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(eps[keep]), np.log(rem[keep]), 1)[0])


def expansion_order_scan(mus, u_profile: ControlGrid, config, eps_list,
                         table=None) -> ExpansionScan:
    """Fit the decay orders of the first- and second-order remainders.

    For each ``eps`` the control ``eps * u_profile`` is applied and the norms
    of ``psi - psi_free - Psi`` and ``psi - psi_free - Psi - xi`` at ``T``
    are recorded; slopes come from a least-squares line in log-log scale.
    """
    eps = np.asarray(sorted(eps_list, reverse=True), dtype=float)
    if eps.size < 4:
        raise DomainError("need at least 4 eps values")
    ratios = eps[1:] / eps[:-1]
    if np.any(eps <= 0) or np.ptp(ratios) > 1e-9 * ratios.mean():
        raise DomainError("eps values must form a positive geometric sequence")
    if not np.any(u_profile.values):
        zeros = np.zeros_like(eps)
        return ExpansionScan(eps, zeros, zeros.copy(), math.nan, math.nan, True,
                             ("zero control profile: remainders vanish identically",))
    table, _ = _setup(mus, u_profile, config, table)
    r1, r2 = [], []
    for e in eps:
        terms = expansion_terms(mus, u_profile.scaled(e), config, table)
        rem = terms.psi.coeffs - terms.free.coeffs - terms.Psi.coeffs
        r1.append(np.linalg.norm(rem))
        r2.append(np.linalg.norm(rem - terms.xi.coeffs))
    r1, r2 = np.array(r1), np.array(r2)
    notes: list[str] = []
    s1 = _loglog_slope(eps, r1, "linear", notes)
    s2 = _loglog_slope(eps, r2, "quadratic", notes)
    for note in notes:
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    return ExpansionScan(eps, r1, r2, s1, s2, False, tuple(notes))


def refine_steps(mus, make_control, config, table=None, n_start=None,
                 max_steps=2 ** 20):
    """Double the step count until the ``K``-th coefficient settles.

    ``make_control(N)`` must return the control sampled with ``N`` steps.
    Returns ``(trajectory, history)`` where ``history`` lists
    ``(N, <psi(T), phi_K>)`` pairs.
    """
    n = n_start or config.n_steps
    history = []
    prev = None
    while True:
        u = make_control(n)
        traj = solve_nonlinear(mus, u, config, table=table, store=False)
        value = traj.final.component(config.K)
        history.append((n, value))
        if prev is not None and abs(value - prev) < config.tol:
            return traj, history
        if 2 * n > max_steps:
            warnings.warn(f"step refinement stopped at the cap of {max_steps} steps",
                          RuntimeWarning, stacklevel=2)
            return traj, history
        prev = value
        n *= 2
