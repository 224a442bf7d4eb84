"""Instantaneous spectrum of H(s): eigensystems, gap scans and Bohr frequencies."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import optimize
from scipy.linalg import lapack

from .dicke import ModelParams, Schedule, annealing_hamiltonian

DEFAULT_TOL_OMEGA = 1e-9
GAUGE = "max-abs-positive"


class SpectralError(RuntimeError):
    """Raised when the eigensolver fails or returns non-finite output."""


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigensystem of a real symmetric matrix.

    ``vectors[:, k]`` is the eigenvector for ``energies[k]``; energies ascend.
    Each column is sign-fixed so that its largest-magnitude entry is positive.
    """

    s: float
    energies: np.ndarray
    vectors: np.ndarray
    gauge: str = GAUGE

    @property
    def dim(self) -> int:
        return len(self.energies)

    def to_eigenbasis(self, op: np.ndarray) -> np.ndarray:
        return self.vectors.T @ op @ self.vectors

    def from_eigenbasis(self, op: np.ndarray) -> np.ndarray:
        return self.vectors @ op @ self.vectors.T


def fix_gauge(vectors: np.ndarray) -> np.ndarray:
    """Flip column signs so the largest-|entry| of each column is positive.

    The pivot is chosen from magnitudes only, so the result does not depend
    on the signs of the input columns.
    """
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def eigendecompose(H: np.ndarray, s: float = float("nan"), check: bool = True) -> SpectralDecomposition:
    """Gauge-fixed eigensystem of a real symmetric ``H``.

    ``check=False`` skips the shape and symmetry checks, for hot loops that
    assemble ``H`` from symmetric parts.
    """
    H = np.asarray(H)
    if check:
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {H.shape}")
        scale = max(np.abs(H).max(), 1.0)
        if np.abs(H - H.T).max() > 1e-12 * scale:
            raise ValueError("matrix is not symmetric")
    energies, vectors, info = lapack.dsyevd(H, compute_v=1)
    if info != 0:
        raise SpectralError(f"eigensolver failed at s={s} (info={info})")
    if not (np.all(np.isfinite(energies)) and np.all(np.isfinite(vectors))):
        raise SpectralError(f"eigensolver returned non-finite values at s={s}")
    return SpectralDecomposition(float(s), energies, fix_gauge(vectors))


def spectral_gap(d: SpectralDecomposition) -> float:
    if d.dim < 2:
        raise ValueError("gap needs at least two levels")
    return float(d.energies[1] - d.energies[0])


def instantaneous_spectrum(params: ModelParams, schedule: Schedule, s: float) -> SpectralDecomposition:
    return eigendecompose(annealing_hamiltonian(params, schedule, s), s)


@dataclass(frozen=True, eq=False)
class GapScan:
    grid: np.ndarray
    gap: np.ndarray
    e0: np.ndarray
    e1: np.ndarray
    min_gap: float
    s_min: float


def scan_minimal_gap(params: ModelParams, schedule: Schedule, grid_resolution: int = 201) -> GapScan:
    """Coarse uniform scan of the gap, then bounded Brent refinement.

    The refinement brackets the coarse minimum by its two grid neighbours
    and stops once the s-interval is below 1e-7.
    """
    if grid_resolution < 3:
        raise ValueError("grid_resolution must be >= 3")
    grid = np.linspace(0.0, 1.0, grid_resolution)
    levels = np.array([np.linalg.eigvalsh(annealing_hamiltonian(params, schedule, s))[:2] for s in grid])
    e0, e1 = levels[:, 0], levels[:, 1]
    gap = e1 - e0
    i = int(np.argmin(gap))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid_resolution - 1)]

    def f(s):
        ev = np.linalg.eigvalsh(annealing_hamiltonian(params, schedule, float(s)))
        return ev[1] - ev[0]

    res = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-7})
    if res.fun <= gap[i]:
        min_gap, s_min = float(res.fun), float(res.x)
    else:
        min_gap, s_min = float(gap[i]), float(grid[i])
    return GapScan(grid, gap, e0, e1, min_gap, s_min)


@dataclass(frozen=True, eq=False)
class BohrSpectrum:
    """Bohr frequencies of a decomposition and the jump maps of a coupling.

    ``labels[a, b]`` indexes into ``frequencies`` the bin of e_b - e_a, and
    ``coupling`` is the coupling operator in the eigenbasis, so the jump map of
    bin k is ``coupling`` restricted to the entries with label k.
    """

    frequencies: np.ndarray
    labels: np.ndarray
    coupling: np.ndarray
    tol_omega: float

    @property
    def dim(self) -> int:
        return self.coupling.shape[0]

    @property
    def jump_maps(self) -> list[np.ndarray]:
        return [np.where(self.labels == k, self.coupling, 0.0) for k in range(len(self.frequencies))]

    @cached_property
    def pair_omegas(self) -> np.ndarray:
        """Binned frequency of every ordered pair (a, b), shape (n, n)."""
        return self.frequencies[self.labels]

    @cached_property
    def secular_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """All ordered pairs of matrix elements sharing a Bohr bin.

        Returns flat indices ``(P, Q)`` into the n*n pair array: every entry
        (a, b), (c, d) with labels[a, b] == labels[c, d] appears once.
        """
        flat = self.labels.ravel()
        order = np.argsort(flat, kind="stable")
        _, starts, sizes = np.unique(flat[order], return_index=True, return_counts=True)
        sq = sizes * sizes
        group = np.repeat(np.arange(len(sizes)), sq)
        offset = np.arange(sq.sum()) - np.repeat(np.cumsum(sq) - sq, sq)
        k = sizes[group]
        P = order[starts[group] + offset // k]
        Q = order[starts[group] + offset % k]
        return P, Q


def bohr_spectrum(d: SpectralDecomposition, A: np.ndarray, tol_omega: float = DEFAULT_TOL_OMEGA) -> BohrSpectrum:
    """Bin the Bohr frequencies e_b - e_a of ``d`` and express ``A`` in its eigenbasis.

    Sorted frequencies split into a new bin wherever consecutive values differ
    by more than ``tol_omega``.  Each bin is represented by the mean of its
    members, except the bin holding the diagonal pairs, which is pinned to 0.
    """
    if tol_omega <= 0:
        raise ValueError("tol_omega must be positive")
    n = d.dim
    omega = (d.energies[None, :] - d.energies[:, None]).ravel()
    order = np.argsort(omega, kind="stable")
    w = omega[order]
    breaks = np.diff(w) > tol_omega
    bin_sorted = np.concatenate(([0], np.cumsum(breaks)))
    labels = np.empty(n * n, dtype=np.intp)
    labels[order] = bin_sorted
    nbins = int(bin_sorted[-1]) + 1
    freqs = np.bincount(labels, weights=omega, minlength=nbins) / np.bincount(labels, minlength=nbins)
    freqs[labels[0]] = 0.0
    return BohrSpectrum(freqs, labels.reshape(n, n), d.to_eigenbasis(A), float(tol_omega))
