import warnings

import numpy as np
import pytest

from oracles import brute_force_operators
from pspin_anneal.dicke import (
    LINEAR,
    DegenerateGroundStateWarning,
    ModelParams,
    Schedule,
    annealing_hamiltonian,
    collective_sx,
    collective_sz,
    coupling_operator,
    driver_hamiltonian,
    get_schedule,
    magnetizations,
    target_hamiltonian,
)


def _params(N, p):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateGroundStateWarning)
        return ModelParams(N=N, p=p)


@pytest.mark.parametrize("N", range(1, 7))
@pytest.mark.parametrize("p", [2, 3, 5])
def test_operators_match_tensor_product_projection(N, p):
    ref = brute_force_operators(N, p)
    params = _params(N, p)
    np.testing.assert_allclose(collective_sz(N), ref["Sz"], atol=1e-12)
    np.testing.assert_allclose(collective_sx(N), ref["Sx"], atol=1e-12)
    np.testing.assert_allclose(driver_hamiltonian(params), ref["H0"], atol=1e-12)
    np.testing.assert_allclose(target_hamiltonian(params), ref["H1"], atol=1e-12)
    np.testing.assert_allclose(coupling_operator(N), ref["A"], atol=1e-12)


def test_basis_order_and_total_spin():
    np.testing.assert_array_equal(magnetizations(4), [2, 1, 0, -1, -2])
    N = 7
    S = N / 2
    Sx, Sz = collective_sx(N), collective_sz(N)
    # Sy is imaginary antisymmetric; Sx^2 + Sy^2 = (S+S- + S-S+)/2
    Sp = np.diag(np.diag(Sx, 1) * 2, 1)
    S2 = Sz @ Sz + 0.5 * (Sp @ Sp.T + Sp.T @ Sp)
    np.testing.assert_allclose(S2, S * (S + 1) * np.eye(N + 1), atol=1e-12)


def test_n16_p3_endpoint_values():
    params = ModelParams(N=16, p=3)
    h1 = np.diag(target_hamiltonian(params))
    assert h1[0] == pytest.approx(-16.0, abs=1e-12)
    assert h1[-1] == pytest.approx(16.0, abs=1e-12)
    # first excited level: m = 7, 1 - (7/8)^3 scaled by 16
    assert h1[1] - h1[0] == pytest.approx(5.28125, abs=1e-12)
    e0 = np.linalg.eigvalsh(driver_hamiltonian(params))
    np.testing.assert_allclose(e0, np.arange(-16, 17, 2), atol=1e-12)


def test_operators_are_cached_and_read_only():
    assert collective_sz(5) is collective_sz(5)
    with pytest.raises(ValueError):
        collective_sx(5)[0, 0] = 1.0


def test_annealing_hamiltonian_interpolates():
    params = ModelParams(N=6, p=3)
    H0, H1 = driver_hamiltonian(params), target_hamiltonian(params)
    np.testing.assert_array_equal(annealing_hamiltonian(params, LINEAR, 0.0), H0)
    np.testing.assert_array_equal(annealing_hamiltonian(params, LINEAR, 1.0), H1)
    np.testing.assert_allclose(annealing_hamiltonian(params, LINEAR, 0.25), 0.75 * H0 + 0.25 * H1)
    with pytest.raises(ValueError):
        annealing_hamiltonian(params, LINEAR, 1.5)


@pytest.mark.parametrize("kwargs", [{"N": 0}, {"p": 1}, {"E": 0.0}, {"Gamma": -1.0}, {"N": 2.5}])
def test_model_params_validation(kwargs):
    with pytest.raises(ValueError):
        ModelParams(**kwargs)


def test_even_p_warns():
    with pytest.warns(DegenerateGroundStateWarning):
        params = ModelParams(N=4, p=2)
    assert params.degenerate_ground


def test_schedules():
    LINEAR.validate()
    assert get_schedule("linear") is LINEAR
    with pytest.raises(ValueError):
        get_schedule("cubic")
    with pytest.raises(ValueError):
        Schedule(lambda s: 1 - s, lambda s: s ** 2 - 0.1).validate()
    with pytest.raises(ValueError):
        Schedule(lambda s: (1 - s) * (1 + np.sin(9 * s)), lambda s: s).validate()
