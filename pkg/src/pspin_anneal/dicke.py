"""Collective-spin (Dicke) representation of the p-spin annealing problem.

Every operator lives in the maximum-spin sector S = N/2, spanned by |S, m>
with m = N/2, N/2 - 1, ..., -N/2.  Row 0 is the fully aligned state m = N/2,
which is the ferromagnetic ground state of the target Hamiltonian.

Energies are expressed in units of ``E`` and times in units of ``1/E``.
"""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np


class DegenerateGroundStateWarning(UserWarning):
    """Even p: the target Hamiltonian has a two-fold degenerate ground state."""


@dataclass(frozen=True)
class ModelParams:
    """A p-spin problem instance.

    Attributes:
        N: number of qubits.
        p: interaction order.
        E: interaction energy scale (the global energy unit).
        Gamma: transverse-field strength.
    """

    N: int = 16
    p: int = 3
    E: float = 1.0
    Gamma: float = 1.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be an integer >= 1, got {self.N!r}")
        if int(self.p) != self.p or self.p < 2:
            raise ValueError(f"p must be an integer >= 2, got {self.p!r}")
        if not self.E > 0:
            raise ValueError(f"E must be positive, got {self.E!r}")
        if not self.Gamma >= 0:
            raise ValueError(f"Gamma must be non-negative, got {self.Gamma!r}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "E", float(self.E))
        object.__setattr__(self, "Gamma", float(self.Gamma))
        if self.p % 2 == 0:
            warnings.warn(
                f"p={self.p} is even: the ferromagnetic ground state is two-fold degenerate",
                DegenerateGroundStateWarning,
                stacklevel=3,
            )

    @property
    def dim(self) -> int:
        return self.N + 1

    @property
    def degenerate_ground(self) -> bool:
        return self.p % 2 == 0


def _linear_a(s):
    return 1.0 - s


def _linear_b(s):
    return s


@dataclass(frozen=True)
class Schedule:
    """Annealing schedule H(s) = A(s) H0 + B(s) H1.

    ``A`` should decrease from 1 to 0 and ``B`` increase from 0 to 1; use
    :meth:`validate` to check this on a grid.
    """

    A: Callable[[float], float]
    B: Callable[[float], float]
    tag: str = "custom"

    def validate(self, resolution: int = 1001) -> None:
        """Raise ``ValueError`` if endpoint or monotonicity contracts fail."""
        if (self.A(0.0), self.A(1.0), self.B(0.0), self.B(1.0)) != (1.0, 0.0, 0.0, 1.0):
            raise ValueError(f"schedule {self.tag!r} violates A(0)=B(1)=1, A(1)=B(0)=0")
        grid = np.linspace(0.0, 1.0, resolution)
        a = np.array([self.A(s) for s in grid])
        b = np.array([self.B(s) for s in grid])
        if np.any(np.diff(a) > 0) or np.any(np.diff(b) < 0):
            raise ValueError(f"schedule {self.tag!r} is not monotone")
        if a.min() < 0 or a.max() > 1 or b.min() < 0 or b.max() > 1:
            raise ValueError(f"schedule {self.tag!r} leaves [0, 1]")


LINEAR = Schedule(_linear_a, _linear_b, tag="linear")

SCHEDULES = {"linear": LINEAR}


def get_schedule(tag: str) -> Schedule:
    try:
        return SCHEDULES[tag]
    except KeyError:
        raise ValueError(f"unknown schedule {tag!r}; known: {sorted(SCHEDULES)}") from None


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _check_n(N):
    if int(N) != N or N < 1:
        raise ValueError(f"N must be an integer >= 1, got {N!r}")
    return int(N)


def magnetizations(N: int) -> np.ndarray:
    """Values of m in basis order: N/2, N/2 - 1, ..., -N/2."""
    N = _check_n(N)
    return N / 2.0 - np.arange(N + 1, dtype=float)


@functools.lru_cache(maxsize=None)
def collective_sz(N: int) -> np.ndarray:
    return _readonly(np.diag(magnetizations(N)))


@functools.lru_cache(maxsize=None)
def collective_sx(N: int) -> np.ndarray:
    """S_x with <m-1|S_x|m> = sqrt(S(S+1) - m(m-1)) / 2."""
    m = magnetizations(N)
    S = N / 2.0
    off = 0.5 * np.sqrt(S * (S + 1) - m[:-1] * (m[:-1] - 1))
    return _readonly(np.diag(off, 1) + np.diag(off, -1))


@functools.lru_cache(maxsize=None)
def target_hamiltonian(params: ModelParams) -> np.ndarray:
    """H1 = -E N (sum_i sigma^z_i / N)^p, diagonal in the Dicke basis."""
    m = magnetizations(params.N)
    return _readonly(np.diag(-params.E * params.N * (2.0 * m / params.N) ** params.p))


@functools.lru_cache(maxsize=None)
def driver_hamiltonian(params: ModelParams) -> np.ndarray:
    """H0 = -Gamma sum_i sigma^x_i = -2 Gamma S_x."""
    return _readonly(-2.0 * params.Gamma * collective_sx(params.N))


@functools.lru_cache(maxsize=None)
def coupling_operator(N: int) -> np.ndarray:
    """System side of the bath coupling, sum_i sigma^z_i = 2 S_z."""
    return _readonly(2.0 * collective_sz(N))


def annealing_hamiltonian(params: ModelParams, schedule: Schedule, s: float) -> np.ndarray:
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"s must lie in [0, 1], got {s!r}")
    return schedule.A(s) * driver_hamiltonian(params) + schedule.B(s) * target_hamiltonian(params)
