"""Composite qubit (x) boson Hilbert space and elementary operators.

Basis ordering: qubit factors first, then mode factors, ascending index
within each group, row-major.  Qubit label 0 is spin up (sigma_z = +1),
label 1 is spin down.

Two truncations are supported:

``"box"``
    every mode holds 0..cutoff photons, dim = 2**N * (cutoff+1)**M.
``"total"``
    the total photon number is at most ``cutoff``.  This keeps the
    Bogoliubov mode rotations an exact symmetry of the truncated space.

Operators are returned as dense ``numpy`` arrays.  Assembly goes through
``scipy.sparse`` so that building a large diagonal or ladder operator
does not require Kronecker products of dense identities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product

import numpy as np
import scipy.sparse as sp

DEFAULT_MAX_DIM = 2**20
UP, DOWN = 0, 1


class CapacityError(ValueError):
    """Requested space exceeds the configured dimension limit."""


@dataclass(frozen=True)
class SpaceSpec:
    n_qubits: int
    n_modes: int
    cutoff: int
    truncation: str = "box"
    max_dim: int = field(default=DEFAULT_MAX_DIM, compare=False)

    def __post_init__(self):
        if self.n_qubits < 1 or self.n_modes < 1:
            raise ValueError("need at least one qubit and one mode")
        if self.cutoff < 1:
            raise ValueError(f"cutoff must be >= 1, got {self.cutoff}")
        if self.truncation not in ("box", "total"):
            raise ValueError(f"unknown truncation {self.truncation!r}")

    @property
    def qubit_dim(self) -> int:
        return 2**self.n_qubits

    @property
    def mode_dim(self) -> int:
        if self.truncation == "box":
            return (self.cutoff + 1) ** self.n_modes
        return _n_total_configs(self.n_modes, self.cutoff)

    @property
    def dim(self) -> int:
        return self.qubit_dim * self.mode_dim

    def with_cutoff(self, cutoff: int) -> "SpaceSpec":
        return SpaceSpec(self.n_qubits, self.n_modes, cutoff, self.truncation, self.max_dim)


def _n_total_configs(n_modes: int, cutoff: int) -> int:
    from math import comb

    return comb(cutoff + n_modes, n_modes)


@dataclass(frozen=True)
class BasisTable:
    """Bijective map between basis indices and (qubit bits, occupations)."""

    spec: SpaceSpec
    qubits: np.ndarray  # (dim, N) of 0 (up) / 1 (down)
    photons: np.ndarray  # (dim, M) occupations

    @property
    def dim(self) -> int:
        return self.qubits.shape[0]

    @cached_property
    def _lookup(self) -> dict:
        return {
            (tuple(q), tuple(n)): k
            for k, (q, n) in enumerate(zip(self.qubits.tolist(), self.photons.tolist()))
        }

    def index(self, qubits, photons) -> int:
        """Basis index of a product state.

        ``qubits`` may be given as a string of ``u``/``d`` (or arrows) or as
        a sequence of 0/1 labels.
        """
        q = _parse_qubits(qubits, self.spec.n_qubits)
        n = tuple(int(x) for x in photons)
        if len(n) != self.spec.n_modes:
            raise ValueError(f"expected {self.spec.n_modes} occupations, got {len(n)}")
        try:
            return self._lookup[(q, n)]
        except KeyError:
            raise ValueError(f"state {qubits!r} {n} is outside the truncated space") from None

    def label(self, k: int) -> str:
        q = "".join("↑" if b == UP else "↓" for b in self.qubits[k])
        n = ",".join(str(x) for x in self.photons[k])
        return f"|{n};{q}>"

    @cached_property
    def total_photons(self) -> np.ndarray:
        return self.photons.sum(axis=1)


def _parse_qubits(qubits, n: int) -> tuple:
    if isinstance(qubits, str):
        table = {"u": UP, "U": UP, "↑": UP, "+": UP, "d": DOWN, "D": DOWN, "↓": DOWN, "-": DOWN}
        try:
            out = tuple(table[c] for c in qubits)
        except KeyError as exc:
            raise ValueError(f"bad qubit label {qubits!r}") from exc
    else:
        out = tuple(int(b) for b in qubits)
    if len(out) != n:
        raise ValueError(f"expected {n} qubit labels, got {len(out)}")
    return out


_TABLE_CACHE: dict = {}


def build_space(spec: SpaceSpec) -> BasisTable:
    """Enumerate the basis of ``spec`` in the fixed ordering."""
    if spec.dim > spec.max_dim:
        raise CapacityError(f"dimension {spec.dim} exceeds limit {spec.max_dim}")
    key = (spec.n_qubits, spec.n_modes, spec.cutoff, spec.truncation)
    cached = _TABLE_CACHE.get(key)
    if cached is not None:
        return cached
    modes = np.array(list(product(range(spec.cutoff + 1), repeat=spec.n_modes)), dtype=np.int64)
    if spec.truncation == "total":
        modes = modes[modes.sum(axis=1) <= spec.cutoff]
    bits = np.array(list(product((UP, DOWN), repeat=spec.n_qubits)), dtype=np.int64)
    qubits = np.repeat(bits, len(modes), axis=0)
    photons = np.tile(modes, (len(bits), 1))
    table = BasisTable(spec, qubits, photons)
    _TABLE_CACHE[key] = table
    return table


def _check_mode(spec: SpaceSpec, i: int):
    if not 1 <= i <= spec.n_modes:
        raise IndexError(f"mode index {i} out of range 1..{spec.n_modes}")


def _check_qubit(spec: SpaceSpec, j: int):
    if not 1 <= j <= spec.n_qubits:
        raise IndexError(f"qubit index {j} out of range 1..{spec.n_qubits}")


def annihilator_sparse(spec: SpaceSpec, i: int) -> sp.csr_matrix:
    _check_mode(spec, i)
    table = build_space(spec)
    n = table.photons[:, i - 1]
    cols = np.nonzero(n > 0)[0]
    target = table.photons[cols].copy()
    target[:, i - 1] -= 1
    rows = np.array([table._lookup[(tuple(q), tuple(t))] for q, t in zip(table.qubits[cols].tolist(), target.tolist())],
                    dtype=np.int64)
    vals = np.sqrt(n[cols].astype(float))
    return sp.csr_matrix((vals, (rows, cols)), shape=(table.dim, table.dim))


def annihilator(spec: SpaceSpec, i: int) -> np.ndarray:
    """Photon annihilation operator of mode ``i`` (1-based)."""
    return annihilator_sparse(spec, i).toarray()


def number_diag(spec: SpaceSpec, i: int) -> np.ndarray:
    _check_mode(spec, i)
    return build_space(spec).photons[:, i - 1].astype(float)


def sigma_z_diag(spec: SpaceSpec, j: int) -> np.ndarray:
    _check_qubit(spec, j)
    return 1.0 - 2.0 * build_space(spec).qubits[:, j - 1]


def _flip_index(spec: SpaceSpec, j: int) -> np.ndarray:
    """Index permutation that flips qubit ``j``."""
    # qubit j is bit (N-j) of the qubit block index; blocks have size mode_dim
    stride = 2 ** (spec.n_qubits - j) * spec.mode_dim
    k = np.arange(spec.dim)
    bit = (k // stride) % 2
    return k + np.where(bit == 0, stride, -stride)


def pauli_sparse(spec: SpaceSpec, j: int, axis: str) -> sp.csr_matrix:
    _check_qubit(spec, j)
    dim = spec.dim
    if axis == "z":
        return sp.diags(sigma_z_diag(spec, j)).tocsr().astype(complex)
    flip = _flip_index(spec, j)
    cols = np.arange(dim)
    if axis == "x":
        vals = np.ones(dim, dtype=complex)
    elif axis == "y":
        # sigma_y |up> = i|down>, sigma_y |down> = -i|up>
        vals = np.where(build_space(spec).qubits[:, j - 1] == UP, 1j, -1j)
    else:
        raise ValueError(f"axis must be x, y or z, got {axis!r}")
    return sp.csr_matrix((vals, (flip, cols)), shape=(dim, dim))


def pauli(spec: SpaceSpec, j: int, axis: str) -> np.ndarray:
    """Pauli matrix on qubit ``j`` (1-based), identity on all other factors."""
    return pauli_sparse(spec, j, axis).toarray()


def lowering_sparse(spec: SpaceSpec, j: int) -> sp.csr_matrix:
    """Qubit lowering operator |down><up| on qubit ``j``."""
    _check_qubit(spec, j)
    flip = _flip_index(spec, j)
    cols = np.nonzero(build_space(spec).qubits[:, j - 1] == UP)[0]
    return sp.csr_matrix((np.ones(len(cols)), (flip[cols], cols)), shape=(spec.dim, spec.dim))


def lowering(spec: SpaceSpec, j: int) -> np.ndarray:
    return lowering_sparse(spec, j).toarray()


def parity_diag(spec: SpaceSpec) -> np.ndarray:
    table = build_space(spec)
    photon_sign = 1 - 2 * (table.total_photons % 2)
    spin_sign = np.prod(1 - 2 * table.qubits, axis=1)
    return (photon_sign * spin_sign).astype(float)


def parity_operator(spec: SpaceSpec) -> np.ndarray:
    """exp(i pi sum_i n_i) prod_j sigma_jz, diagonal with entries +-1."""
    return np.diag(parity_diag(spec))


def sector_indices(spec: SpaceSpec, parity: int) -> np.ndarray:
    """Basis indices with the given parity eigenvalue (+1 or -1)."""
    if parity not in (1, -1):
        raise ValueError("parity must be +1 or -1")
    return np.nonzero(parity_diag(spec) == parity)[0]


def basis_state(spec: SpaceSpec, qubits, photons) -> np.ndarray:
    psi = np.zeros(spec.dim, dtype=complex)
    psi[build_space(spec).index(qubits, photons)] = 1.0
    return psi


def normalize(psi: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise ValueError("cannot normalize the zero vector")
    return psi / norm


def is_hermitian(a, tol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(a - a.conj().T), initial=0.0) < tol)


def embed(psi: np.ndarray, source: SpaceSpec, target: SpaceSpec) -> np.ndarray:
    """Copy amplitudes of ``psi`` into a larger (or smaller) truncation.

    Amplitudes on basis states missing from ``target`` are dropped.
    """
    if (source.n_qubits, source.n_modes) != (target.n_qubits, target.n_modes):
        raise ValueError("embedding requires matching qubit and mode counts")
    src, dst = build_space(source), build_space(target)
    out = np.zeros(target.dim, dtype=complex)
    for k in np.nonzero(np.abs(psi) > 0)[0]:
        key = (tuple(src.qubits[k].tolist()), tuple(src.photons[k].tolist()))
        idx = dst._lookup.get(key)
        if idx is not None:
            out[idx] = psi[k]
    return out
