"""Time-dependent Lindblad evolution of the collective-spin density matrix.

The generator is built in the instantaneous eigenbasis of H(s):

    drho/dt = i [rho, H(s) + H_LS(s)] + sum_w gamma(w) (L_w rho L_w^+ - 1/2 {L_w^+ L_w, rho})

with jump maps L_w from :func:`pspin_anneal.spectral.bohr_spectrum` applied to
the collective coupling 2 S_z.  States are stored in the fixed Dicke basis.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from collections import OrderedDict
from typing import Optional

import numpy as np
from scipy.linalg import lapack

from . import _kernels
from .bath import BathParams, lamb_shift_rate, lamb_shift_table, rate
from .dicke import (
    ModelParams,
    Schedule,
    coupling_operator,
    driver_hamiltonian,
    target_hamiltonian,
)
from .spectral import (
    DEFAULT_TOL_OMEGA,
    BohrSpectrum,
    SpectralDecomposition,
    SpectralError,
    bohr_spectrum,
    eigendecompose,
)

log = logging.getLogger(__name__)

# hard bounds; crossing them means the step control is too loose
MAX_TRACE_ERROR = 1e-6
MIN_EIGENVALUE = -1e-4

METHODS = ("rk4-ip", "rk4", "dp54")

# default-step cap with H_LS on: h * (largest spread of effective level
# energies) stays below this; calibrated by step halving at N=16
LAMB_PHASE_STEP = 1.2


class EvolutionError(RuntimeError):
    """The integrated state left the physical manifold beyond the hard bounds."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class EvolutionConfig:
    """Integration settings for one annealing run.

    Attributes:
        t_f: annealing time, in units of 1/E.
        step: fixed step in t.  ``None`` picks min(0.05, t_f / 2000), further
            capped at ``LAMB_PHASE_STEP / phase_spread`` when H_LS is active
            (see :func:`default_step`).
        method: ``"rk4-ip"`` (RK4 in the interaction picture of the step's
            midpoint Hamiltonian, the default), ``"rk4"`` (plain RK4) or
            ``"dp54"`` (adaptive Dormand-Prince 5(4)).
        rel_tol, abs_tol: per-entry error control of the adaptive stepper.
        lamb_shift: include H_LS in the coherent part.
        tol_omega: Bohr-frequency binning tolerance.
        record_stride: sample the trajectory every this many steps (``None``: off).
    """

    t_f: float
    step: Optional[float] = None
    method: str = "rk4-ip"
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    lamb_shift: bool = True
    tol_omega: float = DEFAULT_TOL_OMEGA
    record_stride: Optional[int] = None

    def __post_init__(self):
        if not self.t_f >= 0:
            raise ValueError(f"t_f must be non-negative, got {self.t_f!r}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.step is not None and not self.step > 0:
            raise ValueError("step must be positive")
        if not (self.rel_tol > 0 and self.abs_tol > 0 and self.tol_omega > 0):
            raise ValueError("tolerances must be positive")
        if self.record_stride is not None and self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")

    @property
    def time_step(self) -> float:
        """The explicit step, or the base default min(0.05, t_f / 2000)."""
        if self.step is not None:
            return float(self.step)
        return min(0.05, self.t_f / 2000.0)


@dataclass
class Trajectory:
    """Sampled diagnostics along s; ``epsilon`` is E + Tr[rho H1] / N."""

    s: list = field(default_factory=list)
    epsilon: list = field(default_factory=list)
    ground_population: list = field(default_factory=list)
    trace_error: list = field(default_factory=list)
    min_eigenvalue: list = field(default_factory=list)

    def append(self, s, epsilon, ground_population, trace_error, min_eigenvalue):
        self.s.append(s)
        self.epsilon.append(epsilon)
        self.ground_population.append(ground_population)
        self.trace_error.append(trace_error)
        self.min_eigenvalue.append(min_eigenvalue)

    def as_array(self) -> np.ndarray:
        return np.column_stack([self.s, self.epsilon, self.ground_population, self.trace_error, self.min_eigenvalue])


@dataclass
class RunResult:
    rho_final: np.ndarray
    residual_energy: float
    ground_population: float
    max_trace_error: float
    min_eigenvalue: float
    max_hermiticity_drift: float
    steps: int
    step: float
    wall_time: float
    trajectory: Optional[Trajectory] = None


def density_diagnostics(rho: np.ndarray) -> tuple[float, float, float]:
    """Return (|Tr rho - 1|, min eigenvalue of the Hermitian part, Hermiticity defect)."""
    herm = 0.5 * float(np.abs(rho - rho.conj().T).max())
    w, _, info = lapack.zheevd(0.5 * (rho + rho.conj().T), compute_v=0)
    if info != 0:
        raise np.linalg.LinAlgError(f"eigenvalue diagnostic failed (info={info})")
    return abs(np.trace(rho).real - 1.0), float(w[0]), herm


def initial_state(params: ModelParams, schedule: Schedule) -> np.ndarray:
    """Projector on the gauge-fixed ground state of H(0)."""
    H = schedule.A(0.0) * driver_hamiltonian(params) + schedule.B(0.0) * target_hamiltonian(params)
    d = eigendecompose(H, 0.0)
    scale = max(np.abs(d.energies).max(), 1.0)
    if d.dim > 1 and d.energies[1] - d.energies[0] < 1e-9 * scale:
        raise ValueError("ground level of H(0) is degenerate; the initial state is ill-defined")
    g = d.vectors[:, 0]
    return np.outer(g, g).astype(complex)


def residual_energy(rho: np.ndarray, params: ModelParams) -> float:
    """epsilon = E + Tr[rho H1] / N."""
    h1 = np.diag(target_hamiltonian(params))
    return float(params.E + np.real(np.diag(rho) @ h1) / params.N)


def ground_state_population(rho: np.ndarray, d: SpectralDecomposition) -> float:
    g = d.vectors[:, 0]
    return float(np.real(g @ rho @ g))


# -- generator pieces in the eigenbasis -------------------------------------------------


def _pair_rates(spec: BohrSpectrum, bath: BathParams) -> np.ndarray:
    return np.asarray(rate(spec.frequencies, bath))[spec.labels]


def _bin_sum(index, weights, size):
    if np.iscomplexobj(weights):
        return np.bincount(index, weights.real, size) + 1j * np.bincount(index, weights.imag, size)
    return np.bincount(index, weights, size)


def _jump_sum_matrix(spec: BohrSpectrum, pair_coeff: np.ndarray) -> np.ndarray:
    """sum_w c(w) L_w^+ L_w for per-pair coefficients c (constant within a bin)."""
    n = spec.dim
    P, Q = spec.secular_pairs
    a, b = np.divmod(P, n)
    c, d = np.divmod(Q, n)
    keep = a == c
    A = spec.coupling.ravel()
    w = pair_coeff.ravel()[P[keep]] * np.conj(A[P[keep]]) * A[Q[keep]]
    return _bin_sum(b[keep] * n + d[keep], w, n * n).reshape(n, n)


def dissipator(rho: np.ndarray, spec: BohrSpectrum, bath: BathParams) -> np.ndarray:
    """D[rho] for ``rho`` given in the eigenbasis of ``spec``."""
    n = spec.dim
    if bath.eta == 0.0:
        return np.zeros((n, n), dtype=complex)
    gam = _pair_rates(spec, bath)
    P, Q = spec.secular_pairs
    A = spec.coupling.ravel()
    a, b = np.divmod(P, n)
    c, d = np.divmod(Q, n)
    coef = gam.ravel()[P] * A[P] * np.conj(A[Q])
    jump = _bin_sum(a * n + c, coef * rho[b, d], n * n).reshape(n, n)
    K = _jump_sum_matrix(spec, gam)
    return jump - 0.5 * (K @ rho + rho @ K)


def lamb_shift_hamiltonian(spec: BohrSpectrum, bath: BathParams, table=None) -> np.ndarray:
    """H_LS = sum_w S(w) L_w^+ L_w in the eigenbasis.

    ``table`` is an optional callable S(w) (e.g. a scaled
    :class:`~pspin_anneal.bath.LambShiftTable`); by default each bin is
    integrated directly.
    """
    n = spec.dim
    if bath.eta == 0.0:
        return np.zeros((n, n))
    if table is None:
        shifts = np.array([lamb_shift_rate(w, bath) for w in spec.frequencies])
    else:
        shifts = np.asarray(table(spec.frequencies))
    return _jump_sum_matrix(spec, shifts[spec.labels])


def lamb_shift_width(params: ModelParams) -> float:
    """Frequency range the Lamb-shift table must cover: every Bohr frequency of H(s)."""
    H0, H1 = driver_hamiltonian(params), target_hamiltonian(params)
    return float(1.01 * (np.ptp(np.linalg.eigvalsh(H0)) + np.ptp(np.diag(H1))))


_NO_TABLE = (np.zeros(2), np.zeros((4, 1)), 0.0)


def _closed_placeholders(n):
    z = np.zeros((n, n))
    return z, z, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0)


class _ScaledTable:
    """S(w; eta) = eta * S(w; 1)."""

    def __init__(self, bath: BathParams, width: float):
        self._unit = lamb_shift_table(BathParams(1.0, bath.beta, bath.omega_c), width)
        self._eta = bath.eta
        self.width = self._unit.width
        # unit-coupling piecewise cubic, for the compiled frame builder
        self.breakpoints = self._unit._spline.x
        self.coefficients = np.ascontiguousarray(self._unit._spline.c)

    def __call__(self, omega):
        return self._eta * self._unit(omega)


class _Frame:
    """Generator data at one value of s, in the eigenbasis of H(s).

    Structured path: when the levels are non-degenerate and no nonzero Bohr
    bin holds more than two pairs, L^+ L and H_LS are diagonal and the
    rotating-wave dissipator is exactly

        D[r] = diag(W p) + decay * r + cross terms,   p = diag(r),

    with W the Pauli rate matrix, ``decay`` an elementwise damping matrix and
    one cross term per ordered member of each two-pair bin.  For odd p every
    Bohr frequency of H(s) has such a partner: (a, b) and (n-1-b, n-1-a) are
    degenerate because the spectrum is symmetric.  Anything else falls back
    to the binned pair lists of :func:`pspin_anneal.spectral.bohr_spectrum`.
    """

    def __init__(self, gen: "LindbladGenerator", d: SpectralDecomposition):
        self.s = d.s
        self.decomposition = d
        self.vectors = d.vectors
        n = d.dim
        self.n = n
        e = d.energies
        self._phase_cache = {}
        self.H_eff = None
        self.structured = True
        if not gen.open:
            self.phases = e.copy()
            self.packed = (d.vectors, self.phases, *_closed_placeholders(n))
            return
        bath = gen.bath
        A = _kernels.eigenbasis_coupling(d.vectors, gen.a_diag)
        table = gen.table
        if table is None:
            tx, tc, width = _NO_TABLE
        else:
            tx, tc, width = table.breakpoints, table.coefficients, table.width
        status, phases, decay, W, co, ci, cc = _kernels.structured_frame(
            e, A, bath.beta, bath.eta, bath.omega_c, gen.config.tol_omega,
            table is not None, tx, tc, width,
        )
        if status == _kernels.OUT_OF_TABLE:
            raise ValueError("Bohr frequency outside the tabulated Lamb-shift range")
        if status != _kernels.OK:
            self._build_general(gen, d)
            return
        self.phases, self.decay, self.W = phases, decay, W
        self.cross_out, self.cross_in, self.cross_coef = co, ci, cc
        # argument tuple of the compiled stepper
        self.packed = (d.vectors, phases, decay, W, co, ci, cc)

    def _build_general(self, gen, d):
        self.structured = False
        self.packed = None
        n = d.dim
        spec = bohr_spectrum(d, gen.A, gen.config.tol_omega)
        gam = _pair_rates(spec, gen.bath)
        P, Q = spec.secular_pairs
        Af = spec.coupling.ravel()
        a, b = np.divmod(P, n)
        c, dd = np.divmod(Q, n)
        self.jump_out = a * n + c
        self.jump_in = b * n + dd
        self.jump_coef = gam.ravel()[P] * Af[P] * np.conj(Af[Q])
        self.K = _jump_sum_matrix(spec, gam)
        H_eff = np.diag(d.energies)
        if gen.table is not None:
            H_eff = H_eff + lamb_shift_hamiltonian(spec, gen.bath, gen.table)
        self.phases = np.diag(H_eff).copy()
        self.H_eff = H_eff - np.diag(self.phases)  # off-diagonal part only

    def phase_factors(self, tau):
        """exp(-i tau (phi_a - phi_b)): the frozen coherent propagator, elementwise."""
        f = self._phase_cache.get(tau)
        if f is None:
            f = np.exp(-1j * tau * (self.phases[:, None] - self.phases[None, :]))
            self._phase_cache = {tau: f}
        return f

    def coherent(self, r):
        """i[r, diag(phases)]."""
        return 1j * r * (self.phases[None, :] - self.phases[:, None])

    def incoherent(self, r, open_system):
        """Everything but i[r, diag(phases)]: dissipator plus any off-diagonal H_LS."""
        if not open_system:
            return np.zeros_like(r)
        if self.structured:
            return _kernels.structured_incoherent(r, self.decay, self.W, self.cross_out,
                                                  self.cross_in, self.cross_coef)
        n2 = self.n * self.n
        rf = r.ravel()[self.jump_in]
        w = self.jump_coef
        jump = (np.bincount(self.jump_out, w * rf.real, n2)
                + 1j * np.bincount(self.jump_out, w * rf.imag, n2)).reshape(self.n, self.n)
        out = jump - 0.5 * (self.K @ r + r @ self.K)
        out += 1j * (r @ self.H_eff - self.H_eff @ r)
        return out

    def rhs(self, r, open_system):
        return self.coherent(r) + self.incoherent(r, open_system)


class LindbladGenerator:
    """dρ/dt at dimensionless time s for a fixed problem, bath and configuration.

    Spectral data are cached per s value so repeated stage evaluations at the
    same s (RK4's midpoint, shared step endpoints) reuse one eigensolve.
    """

    def __init__(self, params: ModelParams, schedule: Schedule, bath: BathParams,
                 config: EvolutionConfig, _vector_hook=None):
        self.params = params
        self.schedule = schedule
        self.bath = bath
        self.config = config
        self.H0 = driver_hamiltonian(params)
        self.H1 = target_hamiltonian(params)
        self.A = coupling_operator(params.N)
        self.a_diag = np.diag(self.A).copy()
        self.n = params.dim
        self._cache: OrderedDict[float, _Frame] = OrderedDict()
        self._vector_hook = _vector_hook
        self.open = bath.eta > 0.0
        self.table = None
        if self.open and config.lamb_shift:
            self.table = _ScaledTable(bath, lamb_shift_width(params))

    def hamiltonian(self, s: float) -> np.ndarray:
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"s must lie in [0, 1], got {s!r}")
        return self.schedule.A(s) * self.H0 + self.schedule.B(s) * self.H1

    def decomposition(self, s: float) -> SpectralDecomposition:
        return self.frame(s).decomposition

    def frame(self, s: float) -> _Frame:
        fr = self._cache.get(s)
        if fr is not None:
            return fr
        H = self.hamiltonian(s)
        if self._vector_hook is None:
            ok, energies, vectors = _kernels.gauged_eigh(H, True)
            if not ok:
                raise SpectralError(f"eigensolver returned non-finite values at s={s}")
            d = SpectralDecomposition(s, energies, vectors)
        else:
            energies, vectors = np.linalg.eigh(H)
            # test hook: vectors used as returned, without gauge fixing
            d = SpectralDecomposition(s, energies, np.ascontiguousarray(self._vector_hook(vectors)))
        fr = _Frame(self, d)
        self._cache[s] = fr
        if len(self._cache) > 4:
            self._cache.popitem(last=False)
        return fr

    def phase_spread(self, samples: int = 41) -> float:
        """Largest spread of the effective level energies over an s grid."""
        return max(float(np.ptp(self.frame(float(s)).phases)) for s in np.linspace(0.0, 1.0, samples))

    def __call__(self, rho: np.ndarray, s: float) -> np.ndarray:
        if not self.open:
            H = self.hamiltonian(s)
            return 1j * (rho @ H - H @ rho)
        fr = self.frame(s)
        V = fr.vectors
        return V @ fr.rhs(V.T @ rho @ V, True) @ V.T

    def remainder(self, r: np.ndarray, s: float, ref: _Frame) -> np.ndarray:
        """dρ/dt minus i[ρ, diag(phases of ref)], both in the eigenbasis of ``ref``."""
        if s == ref.s:
            return ref.incoherent(r, self.open)
        fr = self.frame(s)
        R = ref.vectors.T @ fr.vectors
        out = R @ fr.rhs(R.T @ r @ R, self.open) @ R.T
        return out - ref.coherent(r)


def lindblad_rhs(rho: np.ndarray, s: float, generator: LindbladGenerator) -> np.ndarray:
    """dρ/dt (with respect to t, not s) in the Dicke basis."""
    return generator(rho, s)


# -- integrators ------------------------------------------------------------------------

# Dormand-Prince 5(4) tableau
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_DP_E = _DP_B5 - _DP_B4


def _rk4_step(f, y, s, ds, s_end):
    k1 = f(y, s)
    k2 = f(y + 0.5 * ds * k1, s + 0.5 * ds)
    k3 = f(y + 0.5 * ds * k2, s + 0.5 * ds)
    k4 = f(y + ds * k3, s_end)
    return y + (ds / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _dp54_step(f, y, s, ds, k1):
    ks = [k1]
    for i in range(1, 7):
        yi = y + ds * sum(a * k for a, k in zip(_DP_A[i], ks) if a != 0.0)
        ks.append(f(yi, min(s + _DP_C[i] * ds, 1.0)))
    y_new = y + ds * sum(b * k for b, k in zip(_DP_B5, ks) if b != 0.0)
    err = ds * sum(e * k for e, k in zip(_DP_E, ks) if e != 0.0)
    return y_new, err, ks[-1]


def _rk4_ip_step(gen: LindbladGenerator, t_f, y, s, ds, s_end):
    """Classical RK4 on the interaction-picture state (Lawson RK4).

    The coherent part frozen at the step midpoint is propagated exactly, so
    the stepper only resolves the slow remainder and the dissipator instead
    of the O(N) Bohr frequencies.  Stages are carried in the midpoint
    eigenbasis.
    """
    s_mid = s + 0.5 * ds
    h = t_f * ds
    start, ref, end = gen.frame(s), gen.frame(s_mid), gen.frame(s_end)
    if start.packed is not None and ref.packed is not None and end.packed is not None:
        return _kernels.ip_step(y, h, start.packed, ref.packed, end.packed, gen.open)
    V = ref.vectors
    E = ref.phase_factors(0.5 * h)

    r = V.T @ y @ V
    k1 = gen.remainder(r, s, ref)
    r_half = E * r
    k1h = E * k1
    k2 = gen.remainder(r_half + 0.5 * h * k1h, s_mid, ref)
    k3 = gen.remainder(r_half + 0.5 * h * k2, s_mid, ref)
    k4 = gen.remainder(E * (r_half + h * k3), s_end, ref)
    r_new = E * (r_half + (h / 6.0) * (k1h + 2.0 * k2 + 2.0 * k3)) + (h / 6.0) * k4
    return V @ r_new @ V.T


class _Monitor:
    def __init__(self, generator: LindbladGenerator, config: EvolutionConfig, params: ModelParams):
        self.gen = generator
        self.params = params
        self.stride = config.record_stride
        self.trajectory = Trajectory() if self.stride else None
        self.max_trace_error = 0.0
        self.min_eigenvalue = np.inf
        self.max_drift = 0.0

    def check(self, rho, s, step):
        rho, trace_err, lam, drift = _kernels.hermitize(rho)
        self.max_drift = max(self.max_drift, drift)
        self.max_trace_error = max(self.max_trace_error, trace_err)
        self.min_eigenvalue = min(self.min_eigenvalue, lam)
        if trace_err > MAX_TRACE_ERROR or lam < MIN_EIGENVALUE:
            raise EvolutionError(
                f"state left the physical manifold at s={s:.6g} (trace error {trace_err:.3e}, "
                f"min eigenvalue {lam:.3e}); tighten the step control",
                {"s": s, "step": step, "trace_error": trace_err, "min_eigenvalue": lam},
            )
        if self.trajectory is not None and (step % self.stride == 0 or s >= 1.0):
            self.record(rho, s, trace_err, lam)
        return rho

    def record(self, rho, s, trace_err, lam):
        d = self.gen.decomposition(s)
        self.trajectory.append(
            s, residual_energy(rho, self.params), ground_state_population(rho, d), trace_err, lam
        )


def default_step(generator: LindbladGenerator) -> float:
    """Fixed step used when the configuration leaves ``step`` unset.

    Matches the base rule min(0.05, t_f / 2000) unless H_LS is active.  The
    Lamb shift widens the effective spectrum and, near the anticrossing,
    separates the two lowest levels by far more than the bare gap, which the
    interaction-picture stepper has to resolve.
    """
    config = generator.config
    h = config.time_step
    if config.step is None and generator.table is not None:
        h = min(h, LAMB_PHASE_STEP / generator.phase_spread())
    return h


def evolve(params: ModelParams, schedule: Schedule, bath: BathParams, config: EvolutionConfig,
           _vector_hook=None) -> RunResult:
    """Integrate the master equation from s = 0 to s = 1 over annealing time ``t_f``.

    The state is Hermitized after every step; the trace is never renormalized,
    its drift is reported in the result.

    Raises:
        EvolutionError: if the trace error exceeds 1e-6 or an eigenvalue drops
            below -1e-4 at any step.
    """
    t0 = time.perf_counter()
    gen = LindbladGenerator(params, schedule, bath, config, _vector_hook=_vector_hook)
    rho = initial_state(params, schedule)
    mon = _Monitor(gen, config, params)
    rho = mon.check(rho, 0.0, 0)
    t_f = config.t_f
    steps = 0

    def f(y, s):
        return t_f * gen(y, s)

    h = default_step(gen) if t_f > 0 else 0.0
    if t_f > 0 and config.method != "dp54":
        nsteps = max(1, math.ceil(t_f / h - 1e-9))
        ds = 1.0 / nsteps
        h = t_f * ds
        for k in range(nsteps):
            s = k * ds
            # exact endpoint so the last frame is the s = 1 spectrum
            s_new = 1.0 if k == nsteps - 1 else (k + 1) * ds
            if config.method == "rk4-ip":
                rho = _rk4_ip_step(gen, t_f, rho, s, ds, s_new)
            else:
                rho = _rk4_step(f, rho, s, ds, s_new)
            steps += 1
            rho = mon.check(rho, s_new, steps)
    elif t_f > 0:
        rho, steps = _integrate_adaptive(f, rho, config, mon)
        h = t_f / max(steps, 1)

    d_final = gen.decomposition(1.0)
    return RunResult(
        rho_final=rho,
        residual_energy=residual_energy(rho, params),
        ground_population=ground_state_population(rho, d_final),
        max_trace_error=mon.max_trace_error,
        min_eigenvalue=mon.min_eigenvalue,
        max_hermiticity_drift=mon.max_drift,
        steps=steps,
        step=h,
        wall_time=time.perf_counter() - t0,
        trajectory=mon.trajectory,
    )


def _integrate_adaptive(f, rho, config: EvolutionConfig, mon: _Monitor):
    s = 0.0
    ds = min(config.time_step / config.t_f, 1e-3) if config.t_f else 1e-3
    k1 = f(rho, s)
    steps = 0
    rejected = 0
    while s < 1.0:
        ds = min(ds, 1.0 - s)
        y_new, err, k_last = _dp54_step(f, rho, s, ds, k1)
        scale = config.abs_tol + config.rel_tol * np.maximum(np.abs(rho), np.abs(y_new))
        ratio = float(np.max(np.abs(err) / scale))
        if ratio <= 1.0 or ds < 1e-14:
            s = 1.0 if ds >= 1.0 - s else s + ds
            steps += 1
            rho = mon.check(y_new, s, steps)
            # FSAL; Hermitization moves the state by round-off only
            k1 = k_last
        else:
            rejected += 1
        factor = 0.9 * ratio ** -0.2 if ratio > 0 else 5.0
        ds *= min(5.0, max(0.2, factor))
    log.debug("adaptive run: %d steps, %d rejected", steps, rejected)
    return rho, steps
