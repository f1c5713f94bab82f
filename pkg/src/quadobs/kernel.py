"""Oscillatory kernels ``H_{l,L}`` and the bilinear functionals built on them.

The quadratic coefficient of the lost direction (mode ``K`` seen in the
ground-state frame) is a sum of triangle integrals of the controls against

    H_{l,L}(t, s) = -exp(-i w_K T) sum_j c_j^{l,L} exp(i (nu_j t + w_j s)).

The inner integral is separable in ``j``, so every functional reduces to one
cumulative integral per mode followed by an outer Simpson sum.
"""
from __future__ import annotations

import numpy as np
from scipy.integrate import cumulative_simpson, cumulative_trapezoid, simpson

from .errors import DomainError


def _coeffs(c):
    return np.asarray(getattr(c, "values", c))


def kernel_eval(ell, L, t, s, c, eigen, T):
    """``H_{l,L}(t, s)`` truncated at ``J`` modes (channels are 1-based).

    The tail beyond ``J`` is bounded by ``sum_{j>J} |c_j|``; see
    ``CSequence.tail_bound``.
    """
    if not (0 <= s <= t <= T):
        raise DomainError(f"kernel needs 0 <= s <= t <= T, got s={s}, t={t}, T={T}")
    cj = _coeffs(c)[ell - 1, L - 1]
    J = cj.size
    phase = eigen.nu[:J] * t + eigen.omega[:J] * s - eigen.omega_K * T
    return complex(-np.sum(cj * np.exp(1j * phase)))


def complex_cumulative(y, dt, scheme="simpson"):
    """Cumulative integral along the last axis, real and imaginary parts apart.

    scipy's ``cumulative_simpson`` drops imaginary parts of complex input.
    """
    rule = cumulative_simpson if scheme == "simpson" else cumulative_trapezoid
    return (rule(y.real, dx=dt, axis=-1, initial=0.0)
            + 1j * rule(y.imag, dx=dt, axis=-1, initial=0.0))


def _mode_integrals(g, dt, omega, scheme):
    # G_j(t_i) = int_0^{t_i} g(tau) exp(i w_j tau) d tau, one row per mode
    t = dt * np.arange(g.size)
    integrand = np.exp(1j * np.outer(omega, t)) * g
    return complex_cumulative(integrand, dt, scheme)


def _outer(f, G, dt, nu, scheme):
    t = dt * np.arange(f.size)
    integrand = f * np.exp(1j * np.outer(nu, t)) * G
    if scheme == "simpson":
        return simpson(integrand, dx=dt, axis=-1)
    return np.trapezoid(integrand, dx=dt, axis=-1)


def quadratic_functional(ell, L, f, g, c, eigen, T):
    """``F_T^{l,L}(f, g) = int_0^T f(t) int_0^t H_{l,L}(t, tau) g(tau) dtau dt``.

    ``f`` and ``g`` are samples on the uniform grid ``t_i = i T / N``.
    Iterated Simpson quadrature (trapezoid when ``N`` is odd).
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != g.shape or f.ndim != 1 or f.size < 3:
        raise DomainError("f and g must be 1-D samples on the same grid (N >= 2)")
    cj = _coeffs(c)[ell - 1, L - 1]
    active = np.flatnonzero(cj)
    if active.size == 0 or not g.any() or not f.any():
        return 0j
    dt = T / (f.size - 1)
    scheme = "simpson" if (f.size - 1) % 2 == 0 else "trapezoid"
    G = _mode_integrals(g, dt, eigen.omega[active], scheme)
    per_mode = _outer(f, G, dt, eigen.nu[active], scheme)
    return complex(-np.exp(-1j * eigen.omega_K * T) * np.dot(cj[active], per_mode))


def quadratic_coefficient(u, c, eigen):
    """``sum_{l, L} F_T^{l,L}(u^l, u^L)`` over all ordered channel pairs.

    This is the ``K``-th coefficient of the second-order expansion term at
    time ``T``, measured against ``phi_K exp(-i lam_1 T)``.
    """
    vals = np.asarray(u.values)
    total = 0j
    for ell in range(1, u.r + 1):
        for L in range(1, u.r + 1):
            total += quadratic_functional(ell, L, vals[ell - 1], vals[L - 1],
                                          c, eigen, u.T)
    return total


def pair_coefficients(table, K):
    """``c[l, L, j-1] = <mu_l phi_K, phi_j> <mu_L phi_1, phi_j>``."""
    return table.row(K)[:, None, :] * table.row(1)[None, :, :]
