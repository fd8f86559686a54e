"""Multiqubit multimode Rabi and Rabi-Stark Hamiltonians.

All energies are in units of a reference frequency (omega_ref = 1).
Hamiltonians are real symmetric and returned as ``float64`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import hilbert
from .hilbert import SpaceSpec


class ConditionError(ValueError):
    """Model parameters violate the precondition of an operation."""


@dataclass(frozen=True)
class ModelParams:
    delta: np.ndarray  # (N,)
    omega: np.ndarray  # (M,)
    g: np.ndarray  # (M, N)
    u: np.ndarray = None  # (M, N), zeros for the plain Rabi model

    def __post_init__(self):
        delta = np.atleast_1d(np.asarray(self.delta, dtype=float))
        omega = np.atleast_1d(np.asarray(self.omega, dtype=float))
        g = np.atleast_2d(np.asarray(self.g, dtype=float))
        u = np.zeros_like(g) if self.u is None else np.atleast_2d(np.asarray(self.u, dtype=float))
        for name, arr in (("delta", delta), ("omega", omega), ("g", g), ("u", u)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(omega <= 0):
            raise ValueError("mode frequencies must be positive")
        if g.shape != (len(omega), len(delta)) or u.shape != g.shape:
            raise ValueError(
                f"g and u must have shape (n_modes, n_qubits) = {(len(omega), len(delta))}, "
                f"got {g.shape} and {u.shape}"
            )

    @property
    def n_qubits(self) -> int:
        return len(self.delta)

    @property
    def n_modes(self) -> int:
        return len(self.omega)

    @classmethod
    def symmetric(cls, delta, g_modes, omega=1.0, u_qubits=None):
        """Each mode couples identically to every qubit.

        ``g_modes`` has one entry per mode; ``u_qubits`` one per qubit
        (the same Stark shift on every mode).
        """
        delta = np.atleast_1d(np.asarray(delta, dtype=float))
        g_modes = np.atleast_1d(np.asarray(g_modes, dtype=float))
        n, m = len(delta), len(g_modes)
        g = np.repeat(g_modes[:, None], n, axis=1)
        u = None if u_qubits is None else np.tile(np.asarray(u_qubits, dtype=float), (m, 1))
        return cls(delta, np.full(m, float(omega)), g, u)

    def replace(self, **changes) -> "ModelParams":
        fields = dict(delta=self.delta, omega=self.omega, g=self.g, u=self.u)
        fields.update(changes)
        return ModelParams(**fields)

    def check_space(self, spec: SpaceSpec):
        if (spec.n_qubits, spec.n_modes) != (self.n_qubits, self.n_modes):
            raise ValueError(
                f"params describe {self.n_qubits} qubits x {self.n_modes} modes, "
                f"space has {spec.n_qubits} x {spec.n_modes}"
            )

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("delta", "omega", "g", "u")}


def hamiltonian_terms(spec: SpaceSpec) -> dict:
    """Sparse operator multiplying each scalar parameter.

    Keys are ``("delta", j)``, ``("omega", i)``, ``("g", i, j)`` and
    ``("u", i, j)`` with 0-based indices, so that
    ``H = sum(params[key] * terms[key])``.
    """
    cache_key = (spec.n_qubits, spec.n_modes, spec.cutoff, spec.truncation)
    if cache_key in _TERM_CACHE:
        return _TERM_CACHE[cache_key]
    terms = {}
    sz = [hilbert.sigma_z_diag(spec, j + 1) for j in range(spec.n_qubits)]
    sx = [hilbert.pauli_sparse(spec, j + 1, "x").real for j in range(spec.n_qubits)]
    nums = [hilbert.number_diag(spec, i + 1) for i in range(spec.n_modes)]
    for j in range(spec.n_qubits):
        terms[("delta", j)] = sp.diags(sz[j]).tocsr()
    for i in range(spec.n_modes):
        a = hilbert.annihilator_sparse(spec, i + 1)
        x = (a + a.T).tocsr()
        terms[("omega", i)] = sp.diags(nums[i]).tocsr()
        for j in range(spec.n_qubits):
            terms[("g", i, j)] = (sx[j] @ x).tocsr()
            terms[("u", i, j)] = sp.diags(sz[j] * nums[i]).tocsr()
    _TERM_CACHE[cache_key] = terms
    return terms


_TERM_CACHE: dict = {}


def param_value(params: ModelParams, key) -> float:
    name, *idx = key
    return float(getattr(params, name)[tuple(idx)])


def hamiltonian_sparse(spec: SpaceSpec, params: ModelParams) -> sp.csr_matrix:
    params.check_space(spec)
    h = sp.csr_matrix((spec.dim, spec.dim))
    for key, op in hamiltonian_terms(spec).items():
        c = param_value(params, key)
        if c != 0.0:
            h = h + c * op
    return h.tocsr()


def hamiltonian_rabi_stark(spec: SpaceSpec, params: ModelParams) -> np.ndarray:
    """sum_j D_j s_jz + sum_i (w_i + sum_j U_ij s_jz) n_i + sum_ij g_ij s_jx (a_i + a_i^+)."""
    return hamiltonian_sparse(spec, params).toarray()


def hamiltonian_mqrm(spec: SpaceSpec, params: ModelParams) -> np.ndarray:
    """Multiqubit multimode quantum Rabi Hamiltonian (Stark shifts must vanish)."""
    if np.any(params.u != 0):
        raise ConditionError("hamiltonian_mqrm requires u == 0; use hamiltonian_rabi_stark")
    return hamiltonian_rabi_stark(spec, params)


@dataclass(frozen=True)
class BogoliubovFrame:
    coeffs: np.ndarray  # row j: b_j = sum_i coeffs[j, i] a_i
    g_norm: float


def bogoliubov_frame(g_column) -> BogoliubovFrame:
    """Orthogonal mode rotation whose first row is g / |g|.

    Rows j >= 2 follow the nested combination
    (sum_{i<j} g_i g_j a_i - sum_{i<j} g_i^2 a_j) / sqrt(S_j S_{j-1})
    with partial sums S_j = sum_{i<=j} g_i^2; where a partial sum vanishes
    the remaining rows come from Gram-Schmidt on the canonical basis.
    """
    g = np.atleast_1d(np.asarray(g_column, dtype=float))
    norm = float(np.sqrt(np.sum(g**2)))
    if norm == 0.0:
        raise ConditionError("coupling vector is identically zero")
    m = len(g)
    rows = [g / norm]
    partial = np.cumsum(g**2)
    if m == 1 or partial[0] > 0:
        for j in range(1, m):
            row = np.zeros(m)
            row[:j] = g[:j] * g[j]
            row[j] = -partial[j - 1]
            rows.append(row / np.sqrt(partial[j] * partial[j - 1]))
    else:
        for e in np.eye(m):
            v = e - sum(np.dot(r, e) * r for r in rows)
            nv = np.linalg.norm(v)
            if nv > 1e-8:
                rows.append(v / nv)
            if len(rows) == m:
                break
    return BogoliubovFrame(np.array(rows), norm)


def b_operator_sparse(spec: SpaceSpec, frame: BogoliubovFrame, j: int) -> sp.csr_matrix:
    if not 1 <= j <= spec.n_modes or frame.coeffs.shape[0] != spec.n_modes:
        raise IndexError(f"Bogoliubov mode {j} out of range for {spec.n_modes} modes")
    out = sp.csr_matrix((spec.dim, spec.dim))
    for i, c in enumerate(frame.coeffs[j - 1]):
        if c != 0.0:
            out = out + c * hilbert.annihilator_sparse(spec, i + 1)
    return out.tocsr()


def b_operator(spec: SpaceSpec, frame: BogoliubovFrame, j: int) -> np.ndarray:
    return b_operator_sparse(spec, frame, j).toarray()


def b_number_operator(spec: SpaceSpec, frame: BogoliubovFrame, j: int) -> np.ndarray:
    """b_j^+ b_j for a free Bogoliubov mode (j >= 2)."""
    if not 2 <= j <= spec.n_modes:
        raise IndexError(f"free Bogoliubov modes are 2..{spec.n_modes}, got {j}")
    b = b_operator_sparse(spec, frame, j)
    return (b.T @ b).toarray()


def coupling_column(params: ModelParams, rtol: float = 1e-10) -> np.ndarray:
    """Mode profile shared by all qubits, normalised to unit length.

    Raises ``ConditionError`` if g_ij / g_i'j depends on j.
    """
    g = params.g
    ref = g[:, np.argmax(np.linalg.norm(g, axis=0))]
    ref_norm = np.linalg.norm(ref)
    if ref_norm == 0:
        raise ConditionError("all couplings vanish")
    prof = ref / ref_norm
    for j in range(params.n_qubits):
        col = g[:, j]
        resid = col - np.dot(col, prof) * prof
        if np.linalg.norm(resid) > rtol * max(1.0, np.linalg.norm(col)):
            raise ConditionError(f"coupling column of qubit {j + 1} is not proportional to the others")
    return prof


def effective_single_mode(params: ModelParams) -> ModelParams:
    """Single-mode model seen by the bright mode b_1.

    Requires equal mode frequencies, column-proportional couplings and
    mode-independent Stark shifts.
    """
    om = params.omega
    if np.ptp(om) > 1e-12:
        raise ConditionError("mode frequencies differ")
    if np.any(np.ptp(params.u, axis=0) > 1e-12):
        raise ConditionError("Stark shifts depend on the mode index")
    prof = coupling_column(params)
    g_eff = prof @ params.g
    return ModelParams(params.delta, om[:1], g_eff[None, :], params.u[:1])


@dataclass
class EquivalenceReport:
    max_discrepancy: float
    matched: list = field(default_factory=list)  # (single-mode energy, M-mode energy)
    extra: list = field(default_factory=list)  # dicts: energy, K, partner, offset_error

    @property
    def max_extra_offset_error(self) -> float:
        errs = [e["offset_error"] for e in self.extra if e["offset_error"] is not None]
        return max(errs, default=0.0)


def _sector_spectra(h: np.ndarray, k_op: np.ndarray) -> dict:
    """Eigenvalues of ``h`` grouped by the integer eigenvalue of ``k_op``."""
    kv, kvec = np.linalg.eigh(k_op)
    labels = np.rint(kv).astype(int)
    if np.max(np.abs(kv - labels), initial=0) > 1e-8:
        raise ValueError("occupation operator has non-integer spectrum")
    out = {}
    for k in np.unique(labels):
        basis = kvec[:, labels == k]
        block = basis.conj().T @ h @ basis
        out[int(k)] = np.linalg.eigvalsh((block + block.conj().T) / 2)
    return out


def spectrum_equivalence_report(spec_m: SpaceSpec, params_m: ModelParams,
                                spec_1: SpaceSpec, params_1: ModelParams) -> EquivalenceReport:
    """Compare an M-mode model with its single-mode reduction.

    The M-mode spectrum is split by K = sum_{j>=2} n_{b_j}.  The K = 0 sector
    is matched level by level against the single-mode spectrum; every K >= 1
    level is paired with the single-mode model (at cutoff - K) shifted by
    K*omega when the Stark shifts vanish.
    """
    if spec_1.n_modes != 1:
        raise ValueError("reference model must have a single mode")
    if spec_m.n_modes > 1 and spec_m.truncation != "total":
        raise ValueError("multimode comparison needs truncation='total' (exact Bogoliubov symmetry)")
    if spec_m.cutoff != spec_1.cutoff:
        raise ValueError("both models must share the photon cutoff")
    reduced = effective_single_mode(params_m)
    if not np.allclose(reduced.delta, params_1.delta, atol=1e-12):
        raise ConditionError("qubit splittings differ")
    if abs(reduced.omega[0] - params_1.omega[0]) > 1e-12:
        raise ConditionError("mode frequencies differ")
    if not np.allclose(np.abs(reduced.g), np.abs(params_1.g), atol=1e-10):
        raise ConditionError(
            f"sum_i g_ij^2 differs: {np.sum(params_m.g**2, axis=0)} vs {np.sum(params_1.g**2, axis=0)}"
        )
    if not np.allclose(reduced.u, params_1.u, atol=1e-12):
        raise ConditionError("Stark shifts differ")

    e1 = np.linalg.eigvalsh(hamiltonian_rabi_stark(spec_1, params_1))
    hm = hamiltonian_rabi_stark(spec_m, params_m)
    if spec_m.n_modes == 1:
        sectors = {0: np.linalg.eigvalsh(hm)}
    else:
        frame = bogoliubov_frame(coupling_column(params_m))
        k_op = sum(b_number_operator(spec_m, frame, j) for j in range(2, spec_m.n_modes + 1))
        sectors = _sector_spectra(hm, k_op)
    matched_m = sectors.get(0, np.array([]))
    if len(matched_m) != len(e1):
        raise ValueError(f"K=0 sector has {len(matched_m)} levels, single-mode model {len(e1)}")
    report = EquivalenceReport(float(np.max(np.abs(matched_m - e1), initial=0.0)),
                               list(zip(e1.tolist(), matched_m.tolist())))
    stark = np.any(params_m.u != 0)
    omega = float(params_1.omega[0])
    for k in sorted(sectors):
        if k == 0:
            continue
        partners = None
        if not stark and spec_1.cutoff - k >= 1:
            partners = np.linalg.eigvalsh(
                hamiltonian_rabi_stark(spec_1.with_cutoff(spec_1.cutoff - k), params_1)) + k * omega
        for e in sectors[k]:
            if partners is None:
                report.extra.append(dict(energy=float(e), K=k, partner=None, offset_error=None))
                continue
            p = partners[np.argmin(np.abs(partners - e))]
            report.extra.append(dict(energy=float(e), K=k, partner=float(p - k * omega),
                                     offset_error=float(abs(e - p))))
    return report
