"""Closed-form photon-number-bounded eigenstates and their certificates.

Every constructor checks its parameter conditions, builds the state in a
truncated space and certifies it against the full sparse Hamiltonian:
``residual = ||(H - E) psi||``.  The global phase is fixed so that the
largest-magnitude amplitude is real and positive.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np

from . import hilbert
from .hilbert import SpaceSpec
from .models import (ConditionError, ModelParams, b_operator_sparse, bogoliubov_frame,
                     coupling_column, effective_single_mode, hamiltonian_sparse)

TOL = 1e-10
AMP_TOL = 1e-10


class SingularConfigurationError(ConditionError):
    """A W'-coefficient denominator vanishes."""


@dataclass
class Certificate:
    family: str
    spec: SpaceSpec
    params: ModelParams
    state: np.ndarray
    energy: float
    residual: float
    parity: int
    photon_bound: tuple
    extra: dict = field(default_factory=dict)

    def recompute_residual(self) -> float:
        h = hamiltonian_sparse(self.spec, self.params)
        return float(np.linalg.norm(h @ self.state - self.energy * self.state))

    def to_record(self) -> str:
        """Plain-text record: ``key=value`` lines, then one amplitude per line."""
        table = hilbert.build_space(self.spec)
        lines = [
            f"family={self.family}",
            f"n_qubits={self.spec.n_qubits}",
            f"n_modes={self.spec.n_modes}",
            f"cutoff={self.spec.cutoff}",
            f"truncation={self.spec.truncation}",
            f"energy={self.energy:.15g}",
            f"residual={self.residual:.6e}",
            f"parity={self.parity:+d}",
            f"photon_bound={self.photon_bound[0]},{self.photon_bound[1]}",
        ]
        for key, val in sorted(self.extra.items()):
            lines.append(f"{key}={val}")
        lines.append("# index,label,re,im")
        for k in np.nonzero(np.abs(self.state) > AMP_TOL)[0]:
            a = self.state[k]
            lines.append(f"{k},{table.label(k).replace(',', ' ')},{a.real:.15g},{a.imag:.15g}")
        return "\n".join(lines) + "\n"


def fix_phase(psi: np.ndarray) -> np.ndarray:
    mags = np.abs(psi)
    k = int(np.nonzero(mags >= mags.max() * (1 - 1e-9))[0][0])
    return psi * (abs(psi[k]) / psi[k])


def certify(family: str, spec: SpaceSpec, params: ModelParams, psi: np.ndarray,
            energy: float | None = None, **extra) -> Certificate:
    psi = fix_phase(hilbert.normalize(np.asarray(psi, dtype=complex)))
    h = hamiltonian_sparse(spec, params)
    hpsi = h @ psi
    if energy is None:
        energy = float(np.vdot(psi, hpsi).real)
    residual = float(np.linalg.norm(hpsi - energy * psi))
    pd = hilbert.parity_diag(spec)
    p = float(np.vdot(psi, pd * psi).real)
    parity = int(np.sign(p)) if np.linalg.norm(pd * psi - np.sign(p) * psi) < TOL else 0
    support = np.abs(psi) > AMP_TOL
    n = hilbert.build_space(spec).total_photons[support]
    return Certificate(family, spec, params, psi, float(energy), residual, parity,
                       (int(n.min()), int(n.max())), dict(extra))


# -- condition checks -------------------------------------------------------

def _require(ok: bool, what: str):
    if not ok:
        raise ConditionError(f"condition violated: {what}")


def _close(a, b) -> bool:
    return bool(np.all(np.abs(np.asarray(a) - np.asarray(b)) < TOL))


def _check_shape(params: ModelParams, n_qubits: int, n_modes: int | None = None):
    _require(params.n_qubits == n_qubits, f"N == {n_qubits} (got {params.n_qubits})")
    if n_modes is not None:
        _require(params.n_modes == n_modes, f"M == {n_modes} (got {params.n_modes})")


def _equal_omega(params: ModelParams) -> float:
    _require(_close(params.omega, params.omega[0]), "all mode frequencies equal")
    return float(params.omega[0])


def _default_spec(params: ModelParams, cutoff: int, truncation: str = "box") -> SpaceSpec:
    return SpaceSpec(params.n_qubits, params.n_modes, cutoff, truncation)


def _state(spec: SpaceSpec, terms) -> np.ndarray:
    """Sum of ``coeff * |qubits; photons>`` over ``terms``."""
    psi = np.zeros(spec.dim, dtype=complex)
    table = hilbert.build_space(spec)
    for coeff, qubits, photons in terms:
        if coeff != 0:
            psi[table.index(qubits, photons)] += coeff
    if not np.any(psi):
        raise ConditionError("state vanishes identically for these parameters")
    return psi


def _one_photon(m: int, i: int) -> tuple:
    return tuple(1 if k == i else 0 for k in range(m))


def _w_prime(params: ModelParams, denominators: np.ndarray, g: np.ndarray):
    """(zero-photon coefficient, one-photon coefficients) of c0|0> + sum_i w_i|1_i>.

    With a common denominator d the state is rescaled by d so that d = 0
    remains regular.
    """
    active = g != 0
    if not np.any(active):
        return 1.0, g.copy()
    if np.ptp(denominators[active]) < TOL:
        return float(denominators[active][0]), g.copy()
    if np.any(np.abs(denominators[active]) < TOL):
        raise SingularConfigurationError(
            f"W' denominator vanishes for mode(s) {np.nonzero(active & (np.abs(denominators) < TOL))[0] + 1}")
    return 1.0, np.where(active, g / np.where(active, denominators, 1.0), 0.0)


# -- two-qubit even-parity family -------------------------------------------

def _two_qubit_even(params: ModelParams, family: str, cutoff: int, stark: bool) -> Certificate:
    _check_shape(params, 2)
    omega = _equal_omega(params)
    d1, d2 = params.delta
    _require(abs(d1 + d2 - omega) < TOL, f"Delta_1 + Delta_2 == omega ({d1 + d2:.12g} vs {omega:.12g})")
    _require(_close(params.g[:, 0], params.g[:, 1]), "g_i1 == g_i2 for every mode")
    if not stark:
        _require(_close(params.u, 0.0), "U_ij == 0")
    g = params.g[:, 0]
    den = d1 - d2 + params.u[:, 0] - params.u[:, 1]
    c0, w = _w_prime(params, den, g)
    spec = _default_spec(params, cutoff)
    m = params.n_modes
    terms = [(c0, "uu", (0,) * m)]
    for i in range(m):
        terms += [(w[i], "du", _one_photon(m, i)), (-w[i], "ud", _one_photon(m, i))]
    return certify(family, spec, params, _state(spec, terms))


def psi_d(params: ModelParams, cutoff: int = 2) -> Certificate:
    """One-photon dark state of the two-qubit single-mode Rabi model, E = omega."""
    _check_shape(params, 2, 1)
    return _two_qubit_even(params, "psi_d", cutoff, stark=False)


def psi_2plus(params: ModelParams, cutoff: int = 2) -> Certificate:
    """(D1 - D2)|0_M uu> + sum_i g_i |1_i>(du - ud), E = omega."""
    return _two_qubit_even(params, "psi_2plus", cutoff, stark=False)


def psi_2splus(params: ModelParams, cutoff: int = 2) -> Certificate:
    """Rabi-Stark even-parity dark state |0_M uu> + |W'_M>(du - ud), E = omega."""
    return _two_qubit_even(params, "psi_2splus", cutoff, stark=True)


def psi_ds(params: ModelParams, cutoff: int = 2) -> Certificate:
    """(D1 - D2 + U1 - U2)|0 uu> + g|1>(du - ud) for the single-mode Rabi-Stark model."""
    _check_shape(params, 2, 1)
    return _two_qubit_even(params, "psi_ds", cutoff, stark=True)


def psi_odd_parity(params: ModelParams, variant: str, cutoff: int = 2) -> Certificate:
    """Odd-parity one-photon dark states.

    variant ``a``: |0_M ud> + |W'_M>(dd - uu) with omega = D1 - D2;
    variant ``b``: |0_M du> + |W'_M>(dd - uu) with omega = D2 - D1.
    W' coefficients are g_i / (D1 + D2 + U_i1 + U_i2).
    """
    _check_shape(params, 2)
    if variant not in ("a", "b"):
        raise ValueError("variant must be 'a' or 'b'")
    omega = _equal_omega(params)
    d1, d2 = params.delta
    target = d1 - d2 if variant == "a" else d2 - d1
    _require(abs(omega - target) < TOL,
             f"omega == {'D1 - D2' if variant == 'a' else 'D2 - D1'} ({target:.12g} vs {omega:.12g})")
    _require(_close(params.g[:, 0], params.g[:, 1]), "g_i1 == g_i2 for every mode")
    g = params.g[:, 0]
    den = d1 + d2 + params.u[:, 0] + params.u[:, 1]
    c0, w = _w_prime(params, den, g)
    spec = _default_spec(params, cutoff)
    m = params.n_modes
    terms = [(c0, "ud" if variant == "a" else "du", (0,) * m)]
    for i in range(m):
        terms += [(w[i], "dd", _one_photon(m, i)), (-w[i], "uu", _one_photon(m, i))]
    return certify(f"psi_2s_odd_{variant}", spec, params, _state(spec, terms))


def psi_3s_minus(params: ModelParams, cutoff: int = 2) -> Certificate:
    """Three-qubit odd-parity one-photon dark state with E = omega."""
    _check_shape(params, 3)
    omega = _equal_omega(params)
    _require(_close(params.delta, omega), "Delta_j == omega for all qubits")
    g = params.g
    _require(_close(g[:, 0], g[:, 1] + g[:, 2]), "g_i1 == g_i2 + g_i3")
    g11, g12, g13 = g[0]
    if abs(g12) < TOL or abs(g13) < TOL:
        raise SingularConfigurationError("g_12 and g_13 must be nonzero")
    _require(_close(g[:, 1] * g13, g[:, 2] * g12), "g_i2 / g_i3 == g_12 / g_13")
    _require(_close(params.u, params.u[0]), "U_ij == U_1j")
    u11, u12, u13 = params.u[0]
    spec = _default_spec(params, cutoff)
    m = params.n_modes
    zero = (0,) * m
    terms = [
        ((omega * g13 - g12 * u11 + g11 * u12) / g12, "uud", zero),
        ((omega * g12 - g13 * u11 + g11 * u13) / g13, "udu", zero),
        (-g11 * (omega * g11 + g13 * u12 + g12 * u13) / (g12 * g13), "duu", zero),
    ]
    for i in range(m):
        one = _one_photon(m, i)
        terms += [(g[i, 0], "udd", one), (-g[i, 0], "dud", one),
                  (-g[i, 0], "ddu", one), (g[i, 0], "uuu", one)]
    cert = certify("psi_3s_minus", spec, params, _state(spec, terms))
    if cert.residual > TOL:
        cert.extra["flag"] = "residual above tolerance"
    return cert


SINGLET = np.array([0, 1, -1, 0], dtype=complex) / np.sqrt(2)  # (du - ud)/sqrt2 in (uu, ud, du, dd)


def psi_N_composite(params: ModelParams, n_bell: int, core: str = "psi_2splus",
                    cutoff: int = 2) -> Certificate:
    """Core dark state on the first 2 (or 3) qubits times ``n_bell`` singlets."""
    core_fn = {"psi_2splus": psi_2splus, "psi_2plus": psi_2plus, "psi_3s_minus": psi_3s_minus}
    if core not in core_fn:
        raise ValueError(f"unknown core family {core!r}")
    k = 3 if core == "psi_3s_minus" else 2
    _require(params.n_qubits == k + 2 * n_bell, f"N == {k} + 2 * n_bell")
    for p in range(n_bell):
        a, b = k + 2 * p, k + 2 * p + 1
        _require(abs(params.delta[a] - params.delta[b]) < TOL, f"Delta_{a + 1} == Delta_{b + 1}")
        _require(_close(params.g[:, a], params.g[:, b]), f"g_i{a + 1} == g_i{b + 1}")
        _require(_close(params.u[:, a], params.u[:, b]), f"U_i{a + 1} == U_i{b + 1}")
    sub = ModelParams(params.delta[:k], params.omega, params.g[:, :k], params.u[:, :k])
    core_cert = core_fn[core](sub, cutoff=cutoff)
    spec = _default_spec(params, cutoff)
    mode_dim = spec.mode_dim
    singlets = np.ones(1, dtype=complex)
    for _ in range(n_bell):
        singlets = np.kron(singlets, SINGLET)
    full = np.einsum("qm,s->qsm", core_cert.state.reshape(2**k, mode_dim), singlets)
    return certify("psi_N_composite", spec, params, full.reshape(-1),
                   core=core, core_energy=core_cert.energy, core_parity=core_cert.parity)


# -- multimode lifted states -------------------------------------------------

def phi_K_state(params: ModelParams, single_mode_eigvec, occupations, cutoff: int | None = None,
                certify_tol: float = 1e-8) -> Certificate:
    """Lift a single-mode eigenvector into the M-mode space with free-mode occupations.

    The single-mode state (basis of the single-mode model of the bright mode
    b_1) is mapped via (a^+)^n -> (b_1^+)^n and multiplied by
    prod_j (b_j^+)^{n_j} / sqrt(n_j!) for the free modes j >= 2.  The result
    lives in the total-photon truncation with cutoff >= single cutoff + K.
    """
    if np.any(params.u != 0):
        raise ConditionError("free-mode lifting requires vanishing Stark shifts")
    occ = [int(x) for x in occupations]
    _require(len(occ) == params.n_modes - 1, f"{params.n_modes - 1} free-mode occupations")
    _require(min(occ, default=0) >= 0, "occupations >= 0")
    k_total = sum(occ)
    _require(k_total >= 1, "K = sum of occupations >= 1")
    single = effective_single_mode(params)
    omega = float(params.omega[0])
    n_q = params.n_qubits
    v = np.asarray(single_mode_eigvec, dtype=complex)
    c1, rem = divmod(len(v), 2**n_q)
    if rem or c1 < 2:
        raise ValueError("eigenvector length does not match a single-mode space")
    spec1 = SpaceSpec(n_q, 1, c1 - 1)
    h1 = hamiltonian_sparse(spec1, single)
    v = hilbert.normalize(v)
    e_single = float(np.vdot(v, h1 @ v).real)
    if np.linalg.norm(h1 @ v - e_single * v) > certify_tol:
        raise ConditionError("single-mode vector is not an eigenvector to the requested tolerance")
    needed = spec1.cutoff + k_total
    if cutoff is None:
        cutoff = needed
    if cutoff < needed:
        raise hilbert.CapacityError(f"cutoff {cutoff} below required {needed} (single cutoff + K)")
    spec = SpaceSpec(n_q, params.n_modes, cutoff, "total")
    frame = bogoliubov_frame(coupling_column(params))
    b1dag = b_operator_sparse(spec, frame, 1).T
    bdag = [b_operator_sparse(spec, frame, j).T for j in range(2, params.n_modes + 1)]

    base = np.zeros(spec.dim, dtype=complex)
    vac = (0,) * params.n_modes
    table = hilbert.build_space(spec)
    for q in range(2**n_q):
        bits = [(q >> (n_q - 1 - b)) & 1 for b in range(n_q)]
        vec = np.zeros(spec.dim, dtype=complex)
        vec[table.index(bits, vac)] = 1.0
        for n in range(spec1.cutoff + 1):
            amp = v[q * (spec1.cutoff + 1) + n]
            if amp != 0:
                base += amp * vec / np.sqrt(factorial(n))
            vec = b1dag @ vec
    psi = base
    for op, n in zip(bdag, occ):
        for _ in range(n):
            psi = op @ psi
        psi = psi / np.sqrt(factorial(n))
    cert = certify("phi_K_lifted", spec, params, psi, K=k_total, single_energy=e_single)
    cert.extra["energy_offset_error"] = abs(cert.energy - (e_single + k_total * omega))
    return cert


def squeezed_amplitudes(cutoff: int, xi: float = np.inf) -> np.ndarray:
    """Normalised squeezed-vacuum amplitudes on |2n>, 2n <= cutoff.

    Unnormalised pattern (-tanh xi)^n sqrt((2n)!) / (2^n n!); ``xi = inf``
    gives the x = 0 eigenvector limit.
    """
    t = 1.0 if np.isinf(xi) else float(np.tanh(xi))
    amps = np.zeros(cutoff + 1)
    amps[0] = 1.0
    for m in range(2, cutoff + 1, 2):
        amps[m] = -t * amps[m - 2] * np.sqrt((m - 1) / m)
    return amps / np.linalg.norm(amps)


def squeezed_dark_state(params: ModelParams, xi: float = 1.5, cutoff: int = 20) -> Certificate:
    """All qubits down times a squeezed vacuum in every mode, E = -sum Delta.

    The infinitely squeezed limit is not normalisable; ``xi`` sets a finite
    squeezing surrogate.  The residual is evaluated with untruncated ladder
    operators (the state is embedded two photons higher per mode), so it
    contains both the finite-xi error and the truncation leakage and falls
    with the cutoff towards exp(-xi) * g-scale.  ``extra['truncated_residual']``
    is the residual inside the truncated space.
    """
    if cutoff % 2 or cutoff < 20:
        raise ConditionError("cutoff must be even and >= 20")
    _require(_close(params.omega, params.u.sum(axis=1)), "omega_i == sum_j U_ij")
    spec = SpaceSpec(params.n_qubits, params.n_modes, cutoff, "box")
    mode_vec = np.ones(1)
    amps = squeezed_amplitudes(cutoff, xi)
    for _ in range(params.n_modes):
        mode_vec = np.kron(mode_vec, amps)
    psi = np.zeros(spec.dim, dtype=complex)
    down = hilbert.build_space(spec).index([1] * params.n_qubits, (0,) * params.n_modes)
    psi[down:down + spec.mode_dim] = mode_vec
    energy = -float(np.sum(params.delta))
    cert = certify("squeezed_down", spec, params, psi, energy, xi=xi)
    big = spec.with_cutoff(cutoff + 2)
    psi_big = hilbert.embed(cert.state, spec, big)
    h_big = hamiltonian_sparse(big, params)
    cert.extra["truncated_residual"] = cert.residual
    cert.residual = float(np.linalg.norm(h_big @ psi_big - energy * psi_big))
    return cert


# -- nullspace route --------------------------------------------------------

def candidate_energies(params: ModelParams, extra=()) -> list:
    cands = []
    d = params.delta
    if params.n_qubits >= 2:
        cands += [d[0] + d[1], d[0] - d[1], d[1] - d[0]]
    else:
        cands += [d[0], -d[0]]
    cands += list(params.omega)
    cands += list(extra)
    out = []
    for e in cands:
        if all(abs(e - o) > 1e-12 for o in out):
            out.append(float(e))
    return out


def one_photon_nullspace(params: ModelParams, parity: int, energies=None, extra_energies=(),
                         cutoff: int = 2, tol: float = TOL) -> list:
    """All eigenstates with at most one photon in a parity sector.

    For each candidate energy the coefficient matrix of the <=1-photon ansatz
    (rows: every basis state with <=2 photons, columns: ansatz states) is
    assembled and its kernel returned as certified states.
    """
    work = SpaceSpec(params.n_qubits, params.n_modes, 2, "total")
    h = hamiltonian_sparse(work, params).toarray()
    table = hilbert.build_space(work)
    cols = np.nonzero((table.total_photons <= 1) & (hilbert.parity_diag(work) == parity))[0]
    rows = np.nonzero(hilbert.parity_diag(work) == parity)[0]
    scale = max(1.0, float(np.max(np.abs(h))))
    target = _default_spec(params, cutoff)
    if energies is None:
        energies = candidate_energies(params, extra_energies)
    out = []
    for e in energies:
        a = h[np.ix_(rows, cols)] - e * np.eye(work.dim)[np.ix_(rows, cols)]
        _, s, vh = np.linalg.svd(a)
        s_full = np.concatenate([s, np.zeros(len(cols) - len(s))])
        for k in np.nonzero(s_full < tol * scale)[0]:
            psi = np.zeros(work.dim, dtype=complex)
            psi[cols] = vh[k].conj()
            out.append(certify("nullspace", target, params, hilbert.embed(psi, work, target), e,
                               singular_value=float(s_full[k])))
    return out
