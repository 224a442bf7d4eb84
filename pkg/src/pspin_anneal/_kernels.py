"""Compiled inner loops of the eigenbasis Lindblad generator.

These kernels implement the structured (two-pair Bohr bin) form of the
rotating-wave dissipator.  The reference implementation built on
:class:`pspin_anneal.spectral.BohrSpectrum` lives in :mod:`pspin_anneal.lindblad`
and the tests check the two against each other.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# status codes of structured_frame
OK = 0
NEEDS_GENERAL = 1
OUT_OF_TABLE = 2


@njit(cache=True)
def _spline(x, c, w):
    """Evaluate a scipy-style piecewise cubic (breakpoints x, coefficients c) at w."""
    i = np.searchsorted(x, w, side="right") - 1
    if i < 0:
        i = 0
    elif i > x.size - 2:
        i = x.size - 2
    dx = w - x[i]
    return ((c[0, i] * dx + c[1, i]) * dx + c[2, i]) * dx + c[3, i]


@njit(cache=True)
def _rate(w, beta, eta, omega_c):
    if w == 0.0:
        return 2.0 * math.pi * eta / beta
    aw = abs(w)
    x = beta * aw
    g = 2.0 * math.pi * eta * aw * math.exp(-aw / omega_c) / -math.expm1(-x)
    if w < 0.0:
        g *= math.exp(-x)
    return g


@njit(cache=True)
def gauged_eigh(H, gauge):
    """Eigensystem of symmetric H; with ``gauge`` the largest-|entry| of each column is made positive."""
    e, V = np.linalg.eigh(H)
    ok = np.all(np.isfinite(e)) and np.all(np.isfinite(V))
    if gauge:
        n = V.shape[0]
        for j in range(V.shape[1]):
            best = 0
            for i in range(1, n):
                if abs(V[i, j]) > abs(V[best, j]):
                    best = i
            if V[best, j] < 0.0:
                for i in range(n):
                    V[i, j] = -V[i, j]
    return ok, e, V


@njit(cache=True)
def eigenbasis_coupling(V, alpha):
    """V^T diag(alpha) V."""
    return np.ascontiguousarray(V.T) * alpha @ V


@njit(cache=True)
def structured_frame(e, A, beta, eta, omega_c, tol, use_ls, tx, tc, width):
    """Assemble the structured generator at one s.

    Args:
        e: ascending energies.
        A: coupling operator in the eigenbasis.
        beta, eta, omega_c: bath parameters.
        tol: Bohr binning tolerance.
        use_ls: include the Lamb shift, using the spline (tx, tc) of S(w)
            at unit coupling, valid on |w| <= width.

    Returns:
        (status, phases, decay, W, cross_out, cross_in, cross_coef).  Unless
        status is OK the other entries are placeholders.
    """
    n = e.size
    nn = n * n
    phases = e.copy()
    decay = np.zeros((n, n))
    W = np.zeros((n, n))
    empty_i = np.zeros(0, dtype=np.int64)
    empty_f = np.zeros(0)
    for k in range(n - 1):
        if e[k + 1] - e[k] <= tol:
            return NEEDS_GENERAL, phases, decay, W, empty_i, empty_i, empty_f

    flat = np.empty(nn)
    for a in range(n):
        for b in range(n):
            flat[a * n + b] = e[b] - e[a]
    order = np.argsort(flat, kind="mergesort")

    # groups in sorted order; the zero bin is exactly the diagonal here
    cross_out = np.empty(nn, dtype=np.int64)
    cross_in = np.empty(nn, dtype=np.int64)
    cross_coef = np.empty(nn)
    ncross = 0
    start = 0
    while start < nn:
        stop = start + 1
        while stop < nn and flat[order[stop]] - flat[order[stop - 1]] <= tol:
            stop += 1
        size = stop - start
        if abs(flat[order[start]]) <= tol:
            if size != n:
                return NEEDS_GENERAL, phases, decay, W, empty_i, empty_i, empty_f
        elif size > 2:
            return NEEDS_GENERAL, phases, decay, W, empty_i, empty_i, empty_f
        elif size == 2:
            P = order[start]
            Q = order[start + 1]
            a, b = P // n, P % n
            c, d = Q // n, Q % n
            coef = _rate(flat[P], beta, eta, omega_c) * A[a, b] * A[c, d]
            cross_out[ncross] = a * n + c
            cross_in[ncross] = b * n + d
            cross_coef[ncross] = coef
            cross_out[ncross + 1] = c * n + a
            cross_in[ncross + 1] = d * n + b
            cross_coef[ncross + 1] = coef
            ncross += 2
        start = stop

    K = np.zeros(n)
    g0 = _rate(0.0, beta, eta, omega_c)
    for a in range(n):
        for b in range(n):
            w = flat[a * n + b]
            a2 = A[a, b] * A[a, b]
            g = g0 if a == b else _rate(w, beta, eta, omega_c)
            K[b] += g * a2
            if a != b:
                W[a, b] = g * a2
            if use_ls:
                if abs(w) > width:
                    return OUT_OF_TABLE, phases, decay, W, empty_i, empty_i, empty_f
                phases[b] += eta * _spline(tx, tc, w) * a2
    for a in range(n):
        for c in range(n):
            decay[a, c] = g0 * A[a, a] * A[c, c] - 0.5 * (K[a] + K[c])
    return OK, phases, decay, W, cross_out[:ncross], cross_in[:ncross], cross_coef[:ncross]


@njit(cache=True)
def structured_incoherent(r, decay, W, cross_out, cross_in, cross_coef):
    """Dissipator of the structured frame applied to r (eigenbasis)."""
    n = r.shape[0]
    out = np.empty_like(r)
    for a in range(n):
        for c in range(n):
            out[a, c] = decay[a, c] * r[a, c]
    for a in range(n):
        acc = 0.0j
        for b in range(n):
            acc += W[a, b] * r[b, b]
        out[a, a] += acc
    for k in range(cross_out.size):
        i, j = cross_out[k] // n, cross_out[k] % n
        p, q = cross_in[k] // n, cross_in[k] % n
        out[i, j] += cross_coef[k] * r[p, q]
    return out


@njit(cache=True)
def _coherent(x, phases):
    n = x.shape[0]
    out = np.empty_like(x)
    for a in range(n):
        for b in range(n):
            out[a, b] = 1j * x[a, b] * (phases[b] - phases[a])
    return out


@njit(cache=True)
def _rhs(x, frame, open_system):
    out = _coherent(x, frame[1])
    if open_system:
        out += structured_incoherent(x, frame[2], frame[3], frame[4], frame[5], frame[6])
    return out


@njit(cache=True)
def _congruence(Lm, X, Rm):
    """Lm @ X @ Rm for real Lm, Rm and complex X, as real products."""
    re = Lm @ np.ascontiguousarray(X.real) @ Rm
    im = Lm @ np.ascontiguousarray(X.imag) @ Rm
    return re + 1j * im


@njit(cache=True)
def _remainder(r, R, Rt, frame, ref_phases, open_system):
    y = _rhs(_congruence(Rt, r, R), frame, open_system)
    return _congruence(R, y, Rt) - _coherent(r, ref_phases)


@njit(cache=True)
def ip_step(y, h, start, mid, end, open_system):
    """One Lawson RK4 step in the eigenbasis of the midpoint frame.

    Frames are tuples (V, phases, decay, W, cross_out, cross_in, cross_coef)
    from the structured builder.  Mirrors ``lindblad._rk4_ip_step``.
    """
    n = y.shape[0]
    V = mid[0]
    Vt = np.ascontiguousarray(V.T)
    ph = mid[1]
    E = np.empty((n, n), dtype=np.complex128)
    for a in range(n):
        for b in range(n):
            E[a, b] = np.exp(-0.5j * h * (ph[a] - ph[b]))
    R_start = Vt @ start[0]
    R_end = Vt @ end[0]

    r = _congruence(Vt, y, V)
    k1 = _remainder(r, R_start, np.ascontiguousarray(R_start.T), start, ph, open_system)
    r_half = E * r
    k1h = E * k1
    if open_system:
        k2 = structured_incoherent(r_half + 0.5 * h * k1h, mid[2], mid[3], mid[4], mid[5], mid[6])
        k3 = structured_incoherent(r_half + 0.5 * h * k2, mid[2], mid[3], mid[4], mid[5], mid[6])
    else:
        k2 = np.zeros_like(r)
        k3 = k2
    k4 = _remainder(E * (r_half + h * k3), R_end, np.ascontiguousarray(R_end.T), end, ph, open_system)
    r_new = E * (r_half + (h / 6.0) * (k1h + 2.0 * k2 + 2.0 * k3)) + (h / 6.0) * k4
    return _congruence(V, r_new, Vt)


@njit(cache=True)
def hermitize(rho):
    """Return ((rho + rho^+)/2, |Tr rho - 1|, its min eigenvalue, max |rho - rho^+|/2)."""
    n = rho.shape[0]
    out = np.empty_like(rho)
    drift = 0.0
    for a in range(n):
        for b in range(n):
            diff = rho[a, b] - np.conj(rho[b, a])
            drift = max(drift, 0.5 * abs(diff))
            out[a, b] = 0.5 * (rho[a, b] + np.conj(rho[b, a]))
    tr = 0.0
    for a in range(n):
        tr += rho[a, a].real
    lam = np.linalg.eigvalsh(out)[0]
    return out, abs(tr - 1.0), lam, drift
