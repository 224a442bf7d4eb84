from math import comb

import numpy as np
import pytest
from scipy.linalg import expm

from oracles import dense_lindblad_rhs, gibbs_state, superoperator, trace_distance
from pspin_anneal import _kernels
from pspin_anneal.bath import BathParams, lamb_shift_rate, rate
from pspin_anneal.dicke import LINEAR, ModelParams, annealing_hamiltonian, coupling_operator
from pspin_anneal.lindblad import (
    LAMB_PHASE_STEP,
    EvolutionConfig,
    EvolutionError,
    LindbladGenerator,
    default_step,
    density_diagnostics,
    dissipator,
    evolve,
    ground_state_population,
    initial_state,
    lamb_shift_hamiltonian,
    lindblad_rhs,
    residual_energy,
)
from pspin_anneal.spectral import bohr_spectrum, instantaneous_spectrum

BETA, OMEGA_C = 10.0, 50.0


def _random_density(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = X @ X.conj().T
    return rho / np.trace(rho).real


def _generator(N, eta, lamb_shift=True, p=3):
    return LindbladGenerator(ModelParams(N=N, p=p), LINEAR, BathParams(eta, BETA, OMEGA_C),
                             EvolutionConfig(t_f=1.0, lamb_shift=lamb_shift))


def test_two_level_generator_by_hand():
    # N=1 at s=0: H = -Gamma sigma^x, levels -1 (g) and +1 (e), A = sigma^z swaps them
    gen = _generator(1, 1e-2, lamb_shift=False)
    bath = gen.bath
    g = np.array([1.0, 1.0]) / np.sqrt(2)
    e = np.array([1.0, -1.0]) / np.sqrt(2)
    H = -np.array([[0.0, 1.0], [1.0, 0.0]])
    down, up = np.outer(g, e), np.outer(e, g)
    rho = _random_density(2, 0)

    def lind(L, gamma):
        LdL = L.T @ L
        return gamma * (L @ rho @ L.T - 0.5 * (LdL @ rho + rho @ LdL))

    expected = 1j * (rho @ H - H @ rho) + lind(down, rate(2.0, bath)) + lind(up, rate(-2.0, bath))
    np.testing.assert_allclose(gen(rho, 0.0), expected, atol=1e-12, rtol=0)


def test_two_level_lamb_shift_by_hand():
    bath = BathParams(1e-2, BETA, OMEGA_C)
    d = instantaneous_spectrum(ModelParams(N=1), LINEAR, 0.0)
    spec = bohr_spectrum(d, coupling_operator(1))
    H_ls = lamb_shift_hamiltonian(spec, bath)
    # |<g|A|e>|^2 = 1: emission bin shifts the excited level, absorption the ground level
    np.testing.assert_allclose(H_ls, np.diag([lamb_shift_rate(-2.0, bath), lamb_shift_rate(2.0, bath)]),
                               atol=1e-12, rtol=0)
    assert np.all(lamb_shift_hamiltonian(spec, BathParams(0.0)) == 0.0)


@pytest.mark.filterwarnings("ignore::pspin_anneal.dicke.DegenerateGroundStateWarning")
@pytest.mark.parametrize("N,p,s", [(1, 3, 0.4), (4, 3, 0.3), (5, 3, 0.0), (5, 3, 1.0), (6, 3, 0.55),
                                   (4, 2, 0.5), (16, 3, 0.42)])
@pytest.mark.parametrize("lamb_shift", [False, True])
def test_generator_matches_explicit_jump_operators(N, p, s, lamb_shift):
    gen = _generator(N, 1e-2, lamb_shift, p=p)
    H = annealing_hamiltonian(gen.params, LINEAR, s)
    rho = _random_density(N + 1, N)
    shift = gen.table if lamb_shift else None
    expected = dense_lindblad_rhs(rho, H, gen.A, lambda w: rate(w, gen.bath), shift)
    got = lindblad_rhs(rho, s, gen)
    scale = max(1.0, np.abs(expected).max())
    np.testing.assert_allclose(got, expected, atol=1e-12 * scale, rtol=0)


@pytest.mark.parametrize("s", [0.0, 0.3, 1.0])
def test_reference_dissipator_matches_structured_kernel(s):
    gen = _generator(7, 1e-3)
    fr = gen.frame(s)
    d = fr.decomposition
    spec = bohr_spectrum(d, gen.A)
    r = d.to_eigenbasis(_random_density(8, 3))
    ref = dissipator(r, spec, gen.bath)
    ref += 1j * (r @ lamb_shift_hamiltonian(spec, gen.bath, gen.table) - lamb_shift_hamiltonian(spec, gen.bath, gen.table) @ r)
    got = fr.incoherent(r, True) + fr.coherent(r) - 1j * (r * d.energies[None, :] - d.energies[:, None] * r)
    np.testing.assert_allclose(got, ref, atol=1e-13 * max(1.0, np.abs(ref).max()), rtol=0)


def test_odd_p_interior_frames_are_structured():
    gen = _generator(16, 1e-2)
    assert gen.frame(0.5).structured
    assert not gen.frame(0.0).structured  # equally spaced driver spectrum


def test_closed_generator_is_von_neumann():
    gen = _generator(6, 0.0)
    rho = _random_density(7, 1)
    H = annealing_hamiltonian(gen.params, LINEAR, 0.7)
    np.testing.assert_allclose(gen(rho, 0.7), 1j * (rho @ H - H @ rho), atol=1e-13)
    np.testing.assert_allclose(gen(np.eye(7) / 7, 0.7), 0.0, atol=1e-15)


def test_open_generator_preserves_trace_and_hermiticity():
    gen = _generator(8, 1e-2)
    rho = _random_density(9, 2)
    out = gen(rho, 0.6)
    assert abs(np.trace(out)) < 1e-12
    np.testing.assert_allclose(out, out.conj().T, atol=1e-12)


@pytest.mark.parametrize("lamb_shift", [False, True])
def test_gibbs_state_is_fixed_point(lamb_shift):
    gen = _generator(4, 1e-3, lamb_shift)
    rho_g = gibbs_state(annealing_hamiltonian(gen.params, LINEAR, 0.5), BETA).astype(complex)
    assert np.abs(gen(rho_g, 0.5)).max() <= 1e-10


def test_fixed_hamiltonian_thermalizes():
    gen = _generator(4, 1e-3)
    n = gen.n
    L = superoperator(lambda r: gen(r, 0.5), n)
    rho_g = gibbs_state(annealing_hamiltonian(gen.params, LINEAR, 0.5), BETA)
    rho0 = initial_state(gen.params, LINEAR)
    dist = []
    for t in [1e2, 1e3, 1e4]:
        rho_t = (expm(L * t) @ rho0.ravel()).reshape(n, n)
        dist.append(trace_distance(rho_t, rho_g))
    assert dist[0] > dist[1] > dist[2]
    assert dist[-1] < 1e-3


def test_initial_state_is_binomial():
    params = ModelParams(N=10)
    rho = initial_state(params, LINEAR)
    pops = np.diag(rho).real
    np.testing.assert_allclose(pops, [comb(10, k) / 2 ** 10 for k in range(11)], atol=1e-14)
    np.testing.assert_allclose(rho @ rho, rho, atol=1e-14)


def test_residual_energy_examples():
    params = ModelParams(N=16, p=3)
    n = params.dim
    up = np.zeros((n, n))
    up[0, 0] = 1
    down = np.zeros((n, n))
    down[-1, -1] = 1
    assert residual_energy(up, params) == pytest.approx(0.0, abs=1e-14)
    assert residual_energy(down, params) == pytest.approx(2.0, abs=1e-14)
    assert residual_energy(initial_state(params, LINEAR), params) == pytest.approx(1.0, abs=1e-13)


def test_ground_state_population_examples():
    params = ModelParams(N=6)
    d0 = instantaneous_spectrum(params, LINEAR, 0.0)
    assert ground_state_population(initial_state(params, LINEAR), d0) == pytest.approx(1.0, abs=1e-13)
    assert ground_state_population(np.eye(7) / 7, d0) == pytest.approx(1 / 7, abs=1e-14)


def test_density_diagnostics():
    rho = _random_density(5, 7)
    tr, lam, herm = density_diagnostics(rho)
    assert tr < 1e-14 and lam > 0 and herm < 1e-15
    bad = rho.copy()
    bad[0, 1] += 1e-3
    assert density_diagnostics(bad)[2] == pytest.approx(5e-4)
    herm, tr_k, lam_k, drift = _kernels.hermitize(bad)
    np.testing.assert_allclose(herm, herm.conj().T)
    assert drift == pytest.approx(5e-4)


@pytest.mark.parametrize("eta", [0.0, 1e-4, 1e-2])
def test_quench_returns_initial_energy(eta):
    res = evolve(ModelParams(), LINEAR, BathParams(eta), EvolutionConfig(t_f=0.0))
    assert res.residual_energy == pytest.approx(1.0, abs=1e-12)
    assert res.steps == 0


def test_closed_run_matches_pure_state():
    from pspin_anneal.schrodinger import schrodinger_anneal

    params = ModelParams(N=6)
    res = evolve(params, LINEAR, BathParams(0.0), EvolutionConfig(t_f=10.0, record_stride=50))
    s, h1 = schrodinger_anneal(params, LINEAR, 10.0, s_eval=res.trajectory.s)
    np.testing.assert_allclose(1.0 + h1 / params.N, res.trajectory.epsilon, atol=1e-9)


def test_steppers_agree():
    params = ModelParams(N=6)
    bath = BathParams(1e-2, BETA, OMEGA_C)
    # plain RK4 must resolve the Lamb-shifted phases, so it gets a finer step
    eps = [evolve(params, LINEAR, bath, EvolutionConfig(t_f=8.0, method=m, step=h)).residual_energy
           for m, h in (("rk4-ip", 0.005), ("rk4", 0.001))]
    eps.append(evolve(params, LINEAR, bath, EvolutionConfig(t_f=8.0, method="dp54", rel_tol=1e-10,
                                                            abs_tol=1e-12)).residual_energy)
    assert max(eps) - min(eps) < 1e-9


def test_run_is_gauge_invariant():
    params = ModelParams(N=6)
    bath = BathParams(1e-2, BETA, OMEGA_C)
    config = EvolutionConfig(t_f=6.0)
    ref = evolve(params, LINEAR, bath, config).residual_energy
    rng = np.random.default_rng(5)

    def flip(V):
        return V * rng.choice([-1.0, 1.0], size=V.shape[1])

    flipped = evolve(params, LINEAR, bath, config, _vector_hook=flip).residual_energy
    assert flipped == pytest.approx(ref, abs=1e-10)


def test_loose_step_aborts():
    params = ModelParams(N=4)
    with pytest.raises(EvolutionError) as info:
        evolve(params, LINEAR, BathParams(2.0, BETA, OMEGA_C), EvolutionConfig(t_f=40.0, step=2.0, method="rk4"))
    assert "min eigenvalue" in str(info.value)
    assert info.value.diagnostics["step"] >= 1


def test_trajectory_recording():
    res = evolve(ModelParams(N=4), LINEAR, BathParams(1e-3), EvolutionConfig(t_f=2.0, record_stride=100))
    traj = res.trajectory.as_array()
    assert traj.shape == (res.steps // 100 + 1, 5)
    assert traj[0, 0] == 0.0 and traj[-1, 0] == 1.0
    assert traj[0, 1] == pytest.approx(1.0, abs=1e-13)
    assert traj[-1, 1] == pytest.approx(res.residual_energy, abs=1e-15)


def test_step_policy():
    assert EvolutionConfig(t_f=10.0).time_step == pytest.approx(0.005)
    assert EvolutionConfig(t_f=1e4).time_step == 0.05
    assert EvolutionConfig(t_f=1e4, step=0.1).time_step == 0.1
    gen = LindbladGenerator(ModelParams(), LINEAR, BathParams(1e-2), EvolutionConfig(t_f=1e3))
    assert default_step(gen) == pytest.approx(LAMB_PHASE_STEP / gen.phase_spread())
    no_ls = LindbladGenerator(ModelParams(), LINEAR, BathParams(1e-2), EvolutionConfig(t_f=1e3, lamb_shift=False))
    assert default_step(no_ls) == 0.05
    res = evolve(ModelParams(N=3), LINEAR, BathParams(0.0), EvolutionConfig(t_f=0.1, step=0.03))
    assert res.steps == 4 and res.step == pytest.approx(0.025)


@pytest.mark.parametrize("kwargs", [{"t_f": -1.0}, {"t_f": 1.0, "method": "euler"}, {"t_f": 1.0, "step": 0.0},
                                    {"t_f": 1.0, "rel_tol": 0.0}, {"t_f": 1.0, "record_stride": 0}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        EvolutionConfig(**kwargs)


def test_hamiltonian_range_check():
    with pytest.raises(ValueError):
        _generator(3, 0.0).hamiltonian(-0.1)
