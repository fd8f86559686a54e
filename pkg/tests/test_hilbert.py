import numpy as np
import pytest
from hypothesis import given, strategies as st

from rabistark import hilbert
from rabistark.hilbert import CapacityError, SpaceSpec

specs = st.builds(SpaceSpec, st.integers(1, 3), st.integers(1, 3), st.integers(1, 4),
                  st.sampled_from(["box", "total"]))


def test_dimensions():
    assert SpaceSpec(2, 2, 3).dim == 4 * 16
    # sum n_i <= 3 over two modes: 10 configurations
    assert SpaceSpec(2, 2, 3, "total").dim == 4 * 10
    assert hilbert.build_space(SpaceSpec(1, 3, 2, "total")).dim == 2 * 10


def test_capacity_error():
    with pytest.raises(CapacityError):
        hilbert.build_space(SpaceSpec(10, 6, 10, max_dim=1000))


def test_basis_order_qubits_first():
    spec = SpaceSpec(2, 1, 2)
    # index = qubit configuration (0 = up) major, photons minor
    assert np.argmax(hilbert.basis_state(spec, "uu", (0,))) == 0
    assert np.argmax(hilbert.basis_state(spec, "uu", (1,))) == 1
    assert np.argmax(hilbert.basis_state(spec, "ud", (0,))) == 3
    assert hilbert.sigma_z_diag(spec, 1)[0] == 1.0


@given(specs)
def test_ladder_algebra(spec):
    table = hilbert.build_space(spec)
    for i in range(1, spec.n_modes + 1):
        a = hilbert.annihilator(spec, i)
        n = np.diag(hilbert.number_diag(spec, i))
        assert np.allclose(a.conj().T @ a, n)
        # [a, a^+] = 1 on states that stay inside the truncation after a^+
        comm = a @ a.conj().T - a.conj().T @ a
        inner = table.total_photons < spec.cutoff if spec.truncation == "total" else \
            table.photons[:, i - 1] < spec.cutoff
        assert np.allclose(np.diag(comm)[inner], 1.0)


@given(specs)
def test_pauli_algebra_and_parity(spec):
    p = hilbert.parity_operator(spec)
    for j in range(1, spec.n_qubits + 1):
        x, y, z = (hilbert.pauli(spec, j, ax) for ax in "xyz")
        assert np.allclose(x @ y, 1j * z)
        assert np.allclose(x @ x, np.eye(spec.dim))
        # sigma_x flips one qubit: anticommutes with parity
        assert np.allclose(p @ x, -x @ p)
        s = hilbert.lowering(spec, j)
        assert np.allclose(s + s.conj().T, x)
    for i in range(1, spec.n_modes + 1):
        a = hilbert.annihilator(spec, i)
        assert np.allclose(p @ a, -a @ p)
    even, odd = hilbert.sector_indices(spec, 1), hilbert.sector_indices(spec, -1)
    assert len(even) + len(odd) == spec.dim


def test_embed_roundtrip():
    small, big = SpaceSpec(2, 2, 1, "total"), SpaceSpec(2, 2, 3, "box")
    psi = hilbert.normalize(np.arange(small.dim, dtype=complex) + 1)
    out = hilbert.embed(psi, small, big)
    assert np.isclose(np.linalg.norm(out), 1.0)
    back = hilbert.embed(out, big, small)
    assert np.allclose(back, psi)


def test_one_based_indices():
    spec = SpaceSpec(2, 2, 2)
    with pytest.raises((IndexError, ValueError)):
        hilbert.annihilator(spec, 0)
    with pytest.raises((IndexError, ValueError)):
        hilbert.pauli(spec, 3, "x")
