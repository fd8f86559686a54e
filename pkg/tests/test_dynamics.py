import numpy as np
from hypothesis import given, strategies as st
from scipy.linalg import expm

from rabistark import hilbert
from rabistark.dynamics import (SolverConfig, initial_state, least_time_search, m_independence_check,
                                propagate, run_w_generation, w_mode_vector, w_target)
from rabistark.hilbert import SpaceSpec
from rabistark.models import ModelParams, hamiltonian_rabi_stark
from rabistark.schedule import Schedule, standard_trajectory


def test_vacuum_rabi_oracle():
    # {|u,0>, |d,1>} is closed under H with total cutoff 1; on resonance
    # P(d,1) = sin^2(g t) exactly
    g = 0.01
    p = ModelParams([0.5], [1.0], [[g]])
    spec = SpaceSpec(1, 1, 1, "total")
    t_end = np.pi / g
    res = propagate(Schedule.constant(p, t_end), spec, hilbert.basis_state(spec, "u", (0,)),
                    SolverConfig(n_samples=41), observables={"d1": hilbert.basis_state(spec, "d", (1,))})
    assert np.max(np.abs(res.populations["d1"] - np.sin(g * res.times) ** 2)) < 1e-8


def test_constant_hamiltonian_matches_expm():
    p = ModelParams.symmetric((0.7, 0.3), (0.4, 0.6), 1.0, (0.2, 0.1))
    spec = SpaceSpec(2, 2, 3, "total")
    psi0 = initial_state(spec)
    res = propagate(Schedule.constant(p, 7.0), spec, psi0)
    exact = expm(-1j * 7.0 * hamiltonian_rabi_stark(spec, p)) @ psi0
    assert np.linalg.norm(res.final_state - exact) < 1e-8


def test_ramp_matches_midpoint_product():
    s = standard_trajectory("fig2_stark", periods=0.5)
    spec = SpaceSpec(2, 2, 3, "total")
    psi = initial_state(spec)
    res = propagate(s, spec, psi)
    n = 4000
    dt = s.duration / n
    for k in range(n):
        psi = expm(-1j * dt * hamiltonian_rabi_stark(spec, s.params_at((k + 0.5) * dt))) @ psi
    # second-order midpoint rule: error ~ dt^2
    assert np.linalg.norm(res.final_state - psi) < 1e-5


@given(st.integers(0, 2**32 - 1))
def test_norm_conserved(seed):
    rng = np.random.default_rng(seed)
    a = ModelParams(rng.uniform(0, 1, 2), [1.0], rng.uniform(-1, 1, (1, 2)), rng.uniform(-.5, .5, (1, 2)))
    b = a.replace(g=rng.uniform(-1, 1, (1, 2)))
    spec = SpaceSpec(2, 1, 4)
    res = propagate(Schedule.linear(a, b, 10.0), spec, initial_state(spec), SolverConfig(n_samples=11))
    assert res.norm_drift < 1e-8


def test_step_halving_converges():
    s = standard_trajectory("fig3_stark_asym", n_modes=1)
    spec = SpaceSpec(2, 1, 4, "total")
    psi0 = initial_state(spec)
    ref = propagate(s, spec, psi0, SolverConfig(rtol=1e-12, atol=1e-14)).final_state
    errs = []
    for h in (0.4, 0.2, 0.1):
        out = propagate(s, spec, psi0, SolverConfig(rtol=1e-3, atol=1e-3, max_step=h)).final_state
        errs.append(np.linalg.norm(out - ref))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-6


def test_deterministic():
    s = standard_trajectory("fig2_stark")
    spec = SpaceSpec(2, 2, 3, "total")
    a = propagate(s, spec, initial_state(spec)).states
    b = propagate(s, spec, initial_state(spec)).states
    assert np.array_equal(a, b)


def test_w_targets():
    v = w_mode_vector((1.0, 2.0, 3.0))
    assert np.allclose(v[v != 0] * np.sqrt(14), (3, 2, 1)) or np.allclose(v[v != 0] * np.sqrt(14), (1, 2, 3))
    spec = SpaceSpec(2, 2, 2, "total")
    w = w_target((1.0, 1.0), spec)
    assert np.isclose(np.linalg.norm(w), 1.0)
    amp = w[hilbert.build_space(spec).index("du", (1, 0))]
    assert np.isclose(abs(amp), 0.5)


def test_generation_reports_cutoff_check():
    res = run_w_generation(standard_trajectory("figS2a"), cutoff=4)
    assert res.meta["converged"] and res.meta["cutoff_delta"] < 1e-3
    assert abs(res.final_fidelity - 0.9995) < 1e-3
    assert np.isclose(res.populations["W_psiB"][-1], res.final_fidelity)


def test_too_fast_passage_drops_fidelity():
    fast = run_w_generation(standard_trajectory("fig2_stark", periods=0.25 * 1.86), cutoff=4)
    assert fast.final_fidelity < 0.9


def test_unreachable_threshold_is_marked():
    res = least_time_search(0.5, threshold=0.99, g_range=(0.3, 0.3), t_range=(0.5, 0.7), t_step=0.1)
    assert not res.found and len(res.scanned) == 3


def test_m_independence():
    rep = m_independence_check("figS2a", [1, 2, 3], cutoff=4)
    assert rep.max_fidelity_spread < 1e-6
    assert rep.max_reduced_distance < 1e-6
