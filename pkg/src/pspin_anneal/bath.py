"""Ohmic bosonic environment: spectral density, KMS rates and Lamb-shift coefficients."""

from __future__ import annotations

import dataclasses
import functools
import hashlib
import json
import logging
import os
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

log = logging.getLogger(__name__)

# bump when the node layout or quadrature changes, to invalidate disk caches
TABLE_FORMAT = 1


class QuadratureError(RuntimeError):
    """The principal-value integral for the Lamb shift did not converge."""


@dataclass(frozen=True)
class BathParams:
    """Ohmic bath with exponential cutoff.

    Attributes:
        eta: dimensionless system-bath coupling.
        beta: inverse temperature, in units of 1/E.
        omega_c: high-frequency cutoff, in units of E.
    """

    eta: float = 0.0
    beta: float = 10.0
    omega_c: float = 50.0

    def __post_init__(self):
        if not self.eta >= 0:
            raise ValueError(f"eta must be non-negative, got {self.eta!r}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta!r}")
        if not self.omega_c > 0:
            raise ValueError(f"omega_c must be positive, got {self.omega_c!r}")
        for name in ("eta", "beta", "omega_c"):
            object.__setattr__(self, name, float(getattr(self, name)))


@dataclass(frozen=True)
class QuadratureConfig:
    epsabs: float = 1e-12
    epsrel: float = 1e-10
    limit: int = 500
    # integration window is |omega'| <= cutoff_multiple * omega_c
    cutoff_multiple: float = 40.0


def spectral_density(omega, bath: BathParams):
    """J(omega) = eta * omega * exp(-omega / omega_c) for omega >= 0."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0):
        raise ValueError("spectral density is defined for omega >= 0 only")
    out = bath.eta * omega * np.exp(-omega / bath.omega_c)
    return out if out.ndim else float(out)


def _thermal_factor(omega, bath: BathParams):
    """2 pi eta omega / (1 - exp(-beta omega)), the rate without its cutoff."""
    w = np.asarray(omega, dtype=float)
    x = bath.beta * w
    ax = np.abs(x)
    small = ax < 1e-6
    # |x| / (1 - e^-|x|), series near 0; absorption picks up the KMS factor e^x
    safe = np.where(small, 1.0, ax)
    bose = np.where(small, 1.0 + ax / 2.0 + ax * ax / 12.0, safe / -np.expm1(-safe))
    bose = np.where(x < 0, bose * np.exp(np.minimum(x, 0.0)), bose)
    return (2.0 * np.pi * bath.eta / bath.beta) * bose


def rate(omega, bath: BathParams):
    """Transition rate gamma(omega) = 2 pi J(|omega|) [n_B(|omega|) + theta(omega)].

    Positive ``omega`` is emission (energy given to the bath).  Written as the
    single expression 2 pi eta omega exp(-|omega|/omega_c) / (1 - exp(-beta omega)),
    with the continuous limit 2 pi eta / beta at omega = 0.
    """
    w = np.asarray(omega, dtype=float)
    out = _thermal_factor(w, bath) * np.exp(-np.abs(w) / bath.omega_c)
    return out if out.ndim else float(out)


def _octaves(L):
    # the absorption side decays like exp(-beta |w|); without breakpoints a
    # single panel out to -L can step over it entirely
    k = 2.0 ** np.arange(0, int(np.log2(L)) + 1)
    return {*k, *(-k)}


def lamb_shift_rate(omega: float, bath: BathParams, quadrature: QuadratureConfig = QuadratureConfig()) -> float:
    """S(omega) = (1 / 2 pi) PV int gamma(w') / (omega - w') dw'.

    The pole panel is integrated with quad's Cauchy-weight rule, all other
    panels with plain adaptive quadrature.  ``gamma`` has a derivative kink at
    0 from exp(-|w'|/omega_c).  When |omega| >= 1 the pole panel stays clear of
    it.  Otherwise the pole panel is [-1, 1] and gamma is split into an
    analytic piece (cutoff continued as exp(-s w'/omega_c), s the side of the
    pole) that carries the pole, plus a kinked remainder supported on the far
    side, which needs no principal value.

    Raises:
        QuadratureError: if any panel reports an error estimate above tolerance
            or scipy flags the integration as unreliable.
    """
    omega = float(omega)
    if bath.eta == 0.0:
        return 0.0
    L = quadrature.cutoff_multiple * bath.omega_c
    if abs(omega) >= L:
        raise ValueError(f"|omega|={omega} outside the integration window {L}")
    kw = dict(epsabs=quadrature.epsabs, epsrel=quadrature.epsrel, limit=quadrature.limit)
    wc = bath.omega_c

    # (integrand, lo, hi, cauchy?) with cauchy panels integrating f(x) / (x - omega)
    panels = []
    if abs(omega) < 1.0:
        side = 1.0 if omega >= 0.0 else -1.0
        panels.append((lambda x: _thermal_factor(x, bath) * np.exp(-side * x / wc), -1.0, 1.0, True))
        far = (-1.0, 0.0) if side > 0 else (0.0, 1.0)
        panels.append((
            lambda x: _thermal_factor(x, bath) * (np.exp(-abs(x) / wc) - np.exp(-side * x / wc)) / (omega - x),
            *far, False,
        ))
        edges = sorted({-L, L, *_octaves(L)} - {0.0})
        for lo, hi in zip(edges[:-1], edges[1:]):
            if hi <= -1.0 or lo >= 1.0:
                panels.append((lambda x: rate(x, bath) / (omega - x), lo, hi, False))
    else:
        half = min(1.0, 0.5 * abs(omega))
        edges = {-L, 0.0, L, omega - half, omega + half}
        edges |= {e for e in _octaves(L) if abs(e - omega) > half}
        edges = sorted(edges)
        for lo, hi in zip(edges[:-1], edges[1:]):
            if lo < omega < hi:
                panels.append((functools.partial(rate, bath=bath), lo, hi, True))
            else:
                panels.append((lambda x: rate(x, bath) / (omega - x), lo, hi, False))

    total = 0.0
    total_err = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        for f, lo, hi, cauchy in panels:
            try:
                if cauchy:
                    val, err = integrate.quad(f, lo, hi, weight="cauchy", wvar=omega, **kw)
                    val = -val
                else:
                    val, err = integrate.quad(f, lo, hi, **kw)
            except integrate.IntegrationWarning as exc:
                raise QuadratureError(f"Lamb shift quadrature failed at omega={omega}: {exc}") from exc
            total += val
            total_err += err
    if total_err > max(1e3 * quadrature.epsabs, 1e2 * quadrature.epsrel * abs(total)):
        raise QuadratureError(f"Lamb shift error estimate {total_err:.3e} too large at omega={omega}")
    return total / (2.0 * np.pi)


class LambShiftTable:
    """Cubic-spline interpolant of S(omega) on [-width, width].

    Nodes follow omega = a sinh(u) on a uniform u grid, so they crowd around
    omega = 0 where the thermal structure of ``gamma`` lives (scale 1/beta).
    """

    def __init__(self, bath: BathParams, width: float, nodes: int = 1201,
                 quadrature: QuadratureConfig = QuadratureConfig(), values=None):
        self.bath = bath
        self.width = float(width)
        self.quadrature = quadrature
        a = min(0.5 / bath.beta, self.width)
        u = np.linspace(-np.arcsinh(self.width / a), np.arcsinh(self.width / a), nodes)
        self.nodes = a * np.sinh(u)
        if values is None:
            values = np.array([lamb_shift_rate(w, bath, quadrature) for w in self.nodes])
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != self.nodes.shape:
            raise ValueError("values do not match the node grid")
        self._spline = CubicSpline(self.nodes, self.values)

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        if np.any(np.abs(omega) > self.width):
            raise ValueError("frequency outside the tabulated Lamb-shift range")
        return self._spline(omega)


def cache_dir() -> Optional[Path]:
    """Directory for persisted Lamb-shift tables.

    ``PSPIN_ANNEAL_CACHE`` overrides the default ``$XDG_CACHE_HOME/pspin_anneal``
    (``~/.cache/pspin_anneal``); set it to an empty string to disable the disk cache.
    """
    override = os.environ.get("PSPIN_ANNEAL_CACHE")
    if override is not None:
        return Path(override) if override else None
    base = os.environ.get("XDG_CACHE_HOME") or os.path.join(os.path.expanduser("~"), ".cache")
    return Path(base) / "pspin_anneal"


def _table_key(bath, width, nodes, quadrature):
    blob = json.dumps([TABLE_FORMAT, dataclasses.asdict(bath), float(width), int(nodes),
                       dataclasses.asdict(quadrature)], sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:24]


@functools.lru_cache(maxsize=32)
def lamb_shift_table(bath: BathParams, width: float, nodes: int = 1201,
                     quadrature: QuadratureConfig = QuadratureConfig()) -> LambShiftTable:
    """Build a :class:`LambShiftTable`, reusing a copy persisted on disk when present.

    Building costs ~1e3 quadratures, so tables are saved under :func:`cache_dir`
    keyed by every input.  An unreadable or unwritable cache is ignored.
    """
    root = cache_dir()
    path = None if root is None else root / f"lamb-{_table_key(bath, width, nodes, quadrature)}.npy"
    if path is not None and path.exists():
        try:
            return LambShiftTable(bath, width, nodes, quadrature, values=np.load(path))
        except (OSError, ValueError) as exc:
            log.warning("ignoring unreadable Lamb-shift cache %s: %s", path, exc)
    table = LambShiftTable(bath, width, nodes, quadrature)
    if path is not None:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".npy")
            with os.fdopen(fd, "wb") as fh:
                np.save(fh, table.values)
            os.replace(tmp, path)
        except OSError as exc:
            log.warning("could not persist Lamb-shift table to %s: %s", path, exc)
    return table
