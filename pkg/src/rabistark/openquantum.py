"""Open-system propagation: Lindblad and dressed master equations, catch and release."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.linalg import eigh, expm

from . import hilbert
from .dynamics import IntegrationError, SolverConfig, initial_state, w_target
from .hilbert import SpaceSpec
from .models import ConditionError, ModelParams, hamiltonian_sparse
from .schedule import TWO_PI, Schedule, standard_trajectory

log = logging.getLogger(__name__)

POSITIVITY_FLAG = -1e-6
POSITIVITY_ABORT = -1e-3


class PositivityError(RuntimeError):
    pass


def _per_qubit(value, n: int) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=float), (n,)).copy()
    return arr


@dataclass(frozen=True)
class DissipationRates:
    """Decay rates in units of omega_ref.

    ``kappa_c`` is a piecewise-constant coupler schedule given as
    ``((t_on, value), ...)``: each value applies from its ``t_on`` onwards.
    The resonator decay rate is ``kappa_in + kappa_c(t)``.
    """

    kappa_in: float = 0.0
    kappa_c: tuple = ((0.0, 0.0),)
    gamma: object = 0.0
    gamma_phi: object = 0.0

    def __post_init__(self):
        steps = tuple((float(t), float(v)) for t, v in self.kappa_c)
        if not steps or steps[0][0] != 0.0:
            steps = ((0.0, 0.0),) + steps
        times = [t for t, _ in steps]
        if np.any(np.diff(times) <= 0):
            raise ValueError("kappa_c switching times must increase")
        object.__setattr__(self, "kappa_c", steps)
        vals = [self.kappa_in, *(v for _, v in steps), *np.ravel(self.gamma), *np.ravel(self.gamma_phi)]
        if any(not np.isfinite(v) or v < 0 for v in vals):
            raise ValueError("dissipation rates must be finite and non-negative")

    @classmethod
    def release(cls, kappa_in: float, kappa_c: float, t_release: float, gamma=0.0, gamma_phi=0.0):
        return cls(kappa_in, ((0.0, 0.0), (t_release, kappa_c)), gamma, gamma_phi)

    def kappa_c_at(self, t: float) -> float:
        val = 0.0
        for t_on, v in self.kappa_c:
            if t >= t_on:
                val = v
        return val

    def kappa_at(self, t: float) -> float:
        return self.kappa_in + self.kappa_c_at(t)

    @property
    def breakpoints(self) -> tuple:
        return tuple(t for t, _ in self.kappa_c if t > 0)

    def is_zero(self) -> bool:
        return self.kappa_in == 0 and all(v == 0 for _, v in self.kappa_c) and not np.any(
            np.asarray(self.gamma)) and not np.any(np.asarray(self.gamma_phi))


# -- Lindblad ---------------------------------------------------------------

def _jump_operators(spec: SpaceSpec, rates: DissipationRates, t: float) -> list:
    ops = []
    kappa = rates.kappa_at(t)
    if kappa > 0:
        ops += [np.sqrt(kappa) * hilbert.annihilator_sparse(spec, i) for i in range(1, spec.n_modes + 1)]
    for m, g in enumerate(_per_qubit(rates.gamma, spec.n_qubits), start=1):
        if g > 0:
            ops.append(np.sqrt(g) * hilbert.lowering_sparse(spec, m))
    for m, g in enumerate(_per_qubit(rates.gamma_phi, spec.n_qubits), start=1):
        if g > 0:
            ops.append(np.sqrt(g / 2) * hilbert.pauli_sparse(spec, m, "z"))
    return [op.astype(complex).tocsr() for op in ops]


def _effective(h, jumps):
    """H - (i/2) sum L^+ L."""
    k = sp.csr_matrix(h.shape, dtype=complex)
    for op in jumps:
        k = k + op.conj().T @ op
    return (sp.csr_matrix(h, dtype=complex) - 0.5j * k).tocsr()


def _lindblad_apply(rho, heff, jumps):
    out = -1j * (heff @ rho) + 1j * (heff @ rho.conj().T).conj().T
    for op in jumps:
        out = out + op @ (op @ rho.conj().T).conj().T
    return out


def lindblad_rhs(rho, h, rates: DissipationRates, spec: SpaceSpec, t: float = 0.0) -> np.ndarray:
    """-i[H, rho] + sum_L (L rho L^+ - {L^+ L, rho}/2) for cavity decay, qubit decay and dephasing."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (spec.dim, spec.dim) or h.shape != rho.shape:
        raise ValueError("density matrix, Hamiltonian and space dimensions differ")
    jumps = _jump_operators(spec, rates, t)
    return np.asarray(_lindblad_apply(rho, _effective(h, jumps), jumps))


# -- dressed ----------------------------------------------------------------

@dataclass
class DressedGenerator:
    """Zero-temperature dressed dissipator for a time-independent H.

    In the eigenbasis populations obey dp/dt = (G - diag(L)) p with
    G[j, k] the rate of |k> -> |j> (E_k > E_j) and L_k = sum_j G[j, k];
    coherences rho_ab decay at (L_a + L_b)/2 on top of their phase rotation.
    """

    energies: np.ndarray
    vectors: np.ndarray
    rates: np.ndarray  # G[j, k]
    loss: np.ndarray  # L_k

    @classmethod
    def build(cls, h, spec: SpaceSpec, rates: DissipationRates, params: ModelParams, t: float = 0.0):
        if np.any(_per_qubit(rates.gamma_phi, spec.n_qubits) > 0):
            raise ConditionError("the dressed engine has no pure-dephasing channel; set gamma_phi = 0")
        h = h.toarray() if sp.issparse(h) else np.asarray(h)
        energies, vectors = _ordered_eigensystem(h, spec)
        gap = energies[None, :] - energies[:, None]  # gap[j, k] = E_k - E_j
        down = gap > 1e-12
        g = np.zeros_like(gap)
        kappa = rates.kappa_at(t)
        omega = params.omega
        if kappa > 0:
            for i in range(spec.n_modes):
                x = hilbert.annihilator_sparse(spec, i + 1)
                x = x + x.T
                mel = vectors.conj().T @ (x @ vectors)
                g += kappa * gap / omega[i] * np.abs(mel) ** 2
        for m, gm in enumerate(_per_qubit(rates.gamma, spec.n_qubits)):
            if gm > 0:
                wq = 2 * params.delta[m]
                if wq <= 0:
                    raise ConditionError(f"qubit {m + 1} has non-positive frequency {wq}")
                sx = hilbert.pauli_sparse(spec, m + 1, "x")
                mel = vectors.conj().T @ (sx @ vectors)
                g += gm * gap / wq * np.abs(mel) ** 2
        g = np.where(down, g, 0.0)
        return cls(energies, vectors, g, g.sum(axis=0))

    def to_eigen(self, rho):
        return self.vectors.conj().T @ rho @ self.vectors

    def to_bare(self, rho_t):
        return self.vectors @ rho_t @ self.vectors.conj().T

    def rhs_eigen(self, rho_t):
        de = self.energies[:, None] - self.energies[None, :]
        damp = 0.5 * (self.loss[:, None] + self.loss[None, :])
        out = -(1j * de + damp) * rho_t
        out[np.diag_indices_from(out)] += self.rates @ np.real(np.diag(rho_t))
        return out

    def propagator(self, dt: float):
        """Exact one-step map for a step ``dt``: (coherence factors, population matrix)."""
        de = self.energies[:, None] - self.energies[None, :]
        damp = 0.5 * (self.loss[:, None] + self.loss[None, :])
        phase = np.exp(-(1j * de + damp) * dt)
        pop = expm((self.rates - np.diag(self.loss)) * dt)
        return phase, pop

    @staticmethod
    def step(rho_t, phase, pop):
        out = phase * rho_t
        np.fill_diagonal(out, pop @ np.real(np.diag(rho_t)))
        return out


def _ordered_eigensystem(h, spec: SpaceSpec):
    """Eigenpairs computed per parity block, sorted by energy, then parity, then index."""
    parts = []
    for parity in (1, -1):
        idx = hilbert.sector_indices(spec, parity)
        if len(idx) == 0:
            continue
        e, vb = eigh(h[np.ix_(idx, idx)])
        v = np.zeros((spec.dim, len(e)), dtype=complex)
        v[idx] = vb
        parts += [(ek, -parity, k, v[:, k]) for k, ek in enumerate(e)]
    parts.sort(key=lambda p: (round(p[0], 10), p[1], p[2]))
    return np.array([p[0] for p in parts]), np.array([p[3] for p in parts]).T


def dressed_rhs(rho, h, rates: DissipationRates, spec: SpaceSpec, params: ModelParams,
                t: float = 0.0) -> np.ndarray:
    """Dressed master-equation generator evaluated in the bare basis."""
    gen = DressedGenerator.build(h, spec, rates, params, t)
    return gen.to_bare(gen.rhs_eigen(gen.to_eigen(np.asarray(rho, dtype=complex))))


# -- propagation ------------------------------------------------------------

@dataclass
class OpenTrajectoryResult:
    times: np.ndarray
    populations: dict
    photon_numbers: np.ndarray  # (n_samples, M)
    emission_rates: np.ndarray  # (n_samples, M) = kappa_c(t) <n_i>
    trace_drift: float
    hermiticity_drift: float
    min_eigenvalue: float
    positivity_flag: bool
    final_rho: np.ndarray
    engines: list = field(default_factory=list)  # (t0, t1, engine)
    meta: dict = field(default_factory=dict)

    def emitted(self) -> np.ndarray:
        """Integrated emission per line.

        kappa_c only switches at sample times, so each interval uses its
        left-end coupler rate times the trapezoidal integral of <n_i>.
        """
        kappa = self.meta.get("kappa_c")
        if kappa is None:
            return np.trapezoid(self.emission_rates, self.times, axis=0)
        n = self.photon_numbers
        dt = np.diff(self.times)[:, None]
        return np.sum(kappa[:-1, None] * 0.5 * (n[:-1] + n[1:]) * dt, axis=0)


def density(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def _check_density(rho, dim):
    if rho.shape != (dim, dim):
        raise ValueError(f"density matrix has shape {rho.shape}, expected ({dim}, {dim})")
    if np.max(np.abs(rho - rho.conj().T)) > 1e-10:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1) > 1e-8:
        raise ValueError("density matrix trace differs from 1")
    if np.min(np.linalg.eigvalsh(rho)) < -1e-8:
        raise ValueError("density matrix is not positive")


def _is_constant(schedule: Schedule, t0: float) -> bool:
    slopes = schedule.slopes_at(t0)
    return all(not np.any(v) for v in slopes.values())


def propagate_master(rho0, schedule: Schedule, rates: DissipationRates, spec: SpaceSpec,
                     engine: str = "lindblad", config: SolverConfig = SolverConfig(),
                     observables: dict | None = None, n_samples: int = 201) -> OpenTrajectoryResult:
    """Evolve ``rho0`` over the whole schedule.

    ``engine="dressed"`` uses the dressed generator on segments where H is
    constant and the Lindblad generator on ramps.
    """
    if engine not in ("lindblad", "dressed"):
        raise ValueError(f"unknown engine {engine!r}")
    rho = np.array(rho0, dtype=complex)
    _check_density(rho, spec.dim)
    breaks = sorted(set(schedule.times) | {b for b in rates.breakpoints if b < schedule.duration})
    times = np.unique(np.concatenate([np.linspace(0, schedule.duration, max(n_samples, 2)), breaks]))
    observables = dict(observables or {})
    numbers = [hilbert.number_diag(spec, i) for i in range(1, spec.n_modes + 1)]

    samples = {0: rho}
    engines = []
    worst_herm = 0.0
    for t0, t1 in zip(breaks[:-1], breaks[1:]):
        params = schedule.params_at(t0)
        inside = times[(times > t0) & (times <= t1)]
        h0 = hamiltonian_sparse(spec, params).astype(complex)
        use_dressed = engine == "dressed" and _is_constant(schedule, t0)
        if use_dressed:
            gen = DressedGenerator.build(h0, spec, rates, params, t0)
            rt = gen.to_eigen(rho)
            last = t0
            cache = {}
            for t in inside:
                dt = round(t - last, 12)
                if dt not in cache:
                    cache[dt] = gen.propagator(t - last)
                rt = gen.step(rt, *cache[dt])
                last = t
                samples[t] = gen.to_bare(rt)
            rho = samples[inside[-1]]
        else:
            h1 = schedule.hdot_sparse(spec, t0).astype(complex)
            jumps = _jump_operators(spec, rates, t0)
            heff0 = _effective(h0, jumps)
            dim = spec.dim

            def rhs(t, y, heff0=heff0, h1=h1, jumps=jumps, t0=t0):
                r = y.reshape(dim, dim)
                heff = heff0 + (t - t0) * h1
                return _lindblad_apply(r, heff, jumps).ravel()

            sol = solve_ivp(rhs, (t0, t1), rho.ravel(), method=config.method, t_eval=inside,
                            rtol=config.rtol, atol=config.atol, max_step=config.max_step)
            if sol.status != 0:
                raise IntegrationError(f"master equation failed on [{t0}, {t1}]: {sol.message}")
            for t, y in zip(sol.t, sol.y.T):
                samples[t] = y.reshape(dim, dim)
            rho = sol.y[:, -1].reshape(dim, dim)
        engines.append((t0, t1, "dressed" if use_dressed else "lindblad"))
        min_eig = np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)))
        if min_eig < POSITIVITY_ABORT:
            raise PositivityError(f"density matrix lost positivity at t={t1}: min eigenvalue {min_eig:.3e}")

    order = sorted(samples)
    pops = {name: np.empty(len(order)) for name in observables}
    nbar = np.empty((len(order), spec.n_modes))
    emission = np.empty_like(nbar)
    traces = np.empty(len(order))
    mins = np.empty(len(order))
    for s, t in enumerate(order):
        r = samples[t]
        worst_herm = max(worst_herm, float(np.max(np.abs(r - r.conj().T))))
        traces[s] = np.trace(r).real
        mins[s] = np.min(np.linalg.eigvalsh(0.5 * (r + r.conj().T)))
        diag = np.real(np.diag(r))
        nbar[s] = [np.dot(n, diag) for n in numbers]
        emission[s] = rates.kappa_c_at(t) * nbar[s]
        for name, phi in observables.items():
            pops[name][s] = np.real(np.vdot(phi, r @ phi))
    min_eig = float(np.min(mins))
    flag = min_eig < POSITIVITY_FLAG
    if flag:
        log.warning("density matrix min eigenvalue %.2e below %.0e", min_eig, POSITIVITY_FLAG)
    return OpenTrajectoryResult(np.array(order), pops, nbar, emission,
                                float(np.max(np.abs(traces - 1))), worst_herm, min_eig, flag, rho,
                                engines, meta={"spec": spec, "engine": engine,
                                                    "kappa_c": np.array([rates.kappa_c_at(t) for t in order])})


# -- catch and release ------------------------------------------------------

@dataclass(frozen=True)
class CatchReleaseConfig:
    g_ratios: tuple = (1.0, 2.0, 3.0)
    g_sum_sq: float = 0.98
    u: tuple = (0.5, 0.5)
    generation_periods: float = 1.86
    release_periods: float = 3.0
    end_periods: float = 13.0
    kappa_in: float = 1e-4
    kappa_c: float = 0.1
    gamma: float = 1e-5
    gamma_phi: float = 2e-5
    cutoff: int = 4
    engine: str = "lindblad"
    n_samples: int = 401


@dataclass
class CatchReleaseReport:
    generation_fidelity: float
    hold_fidelity_loss: float
    emitted: np.ndarray
    emission_fractions: np.ndarray
    expected_fractions: np.ndarray
    result: OpenTrajectoryResult


def catch_and_release(cfg: CatchReleaseConfig = CatchReleaseConfig()) -> CatchReleaseReport:
    """Generate |W_M psi_B>, hold it, then open the couplers and let it leak out."""
    t_gen = cfg.generation_periods * TWO_PI
    t_rel = cfg.release_periods * TWO_PI
    t_end = cfg.end_periods * TWO_PI
    if not 0 < t_gen <= t_rel < t_end:
        raise ValueError("phase times must satisfy 0 < generation <= release < end")
    m = len(cfg.g_ratios)
    ramp = standard_trajectory("fig2_stark", periods=cfg.generation_periods, n_modes=m,
                               ratios=cfg.g_ratios, g_sum_sq=cfg.g_sum_sq, u=cfg.u)
    end = ramp.nodes[-1]
    times = [0.0, t_gen] + ([t_rel] if t_rel > t_gen else []) + [t_end]
    nodes = [ramp.nodes[0]] + [end] * (len(times) - 1)
    schedule = Schedule(tuple(times), tuple(nodes), {"name": "catch_and_release"})
    rates = DissipationRates.release(cfg.kappa_in, cfg.kappa_c, t_rel, cfg.gamma, cfg.gamma_phi)
    spec = SpaceSpec(2, m, cfg.cutoff, "total")
    target = w_target(end.g[:, 0], spec)
    res = propagate_master(density(initial_state(spec)), schedule, rates, spec, cfg.engine,
                           observables={"W_psiB": target, "0uu": initial_state(spec)},
                           n_samples=cfg.n_samples)
    fid = res.populations["W_psiB"]
    f_gen = float(np.interp(t_gen, res.times, fid))
    f_rel = float(np.interp(t_rel, res.times, fid))
    emitted = res.emitted()
    total = emitted.sum()
    fractions = emitted / total if total > 0 else np.zeros(m)
    g = end.g[:, 0]
    return CatchReleaseReport(f_gen, f_gen - f_rel, emitted, fractions, g**2 / np.sum(g**2), res)


# -- dressed vs Lindblad comparison -----------------------------------------

S3_CASES = {
    # constant two-qubit three-mode Rabi model, 2 Delta_1 = 2 Delta_2 = omega, gamma_phi = 0
    "a": dict(g=(0.1, 0.2, 0.3), kappa=1e-4, gamma=1e-5, initial="0uu"),
    "b": dict(g=(0.266, 0.532, 0.798), kappa=0.1001, gamma=1e-5, initial="W_psiB"),
}


@dataclass
class ComparisonReport:
    case: str
    max_discrepancy: float
    lindblad: OpenTrajectoryResult
    dressed: OpenTrajectoryResult


def compare_engines(case: str = "a", periods: float = 10.0, cutoff: int = 4,
                    n_samples: int = 201) -> ComparisonReport:
    """Population of the tracked state under both engines for a constant Hamiltonian."""
    if case not in S3_CASES:
        raise KeyError(f"unknown comparison case {case!r}")
    c = S3_CASES[case]
    g = np.asarray(c["g"], dtype=float)
    params = ModelParams.symmetric((0.5, 0.5), g, 1.0)
    spec = SpaceSpec(2, len(g), cutoff, "total")
    schedule = Schedule.constant(params, periods * TWO_PI, name=f"compare_{case}")
    rates = DissipationRates(c["kappa"], ((0.0, 0.0),), c["gamma"], 0.0)
    psi = initial_state(spec) if c["initial"] == "0uu" else w_target(g, spec)
    obs = {c["initial"]: psi}
    runs = [propagate_master(density(psi), schedule, rates, spec, eng, observables=obs, n_samples=n_samples)
            for eng in ("lindblad", "dressed")]
    diff = float(np.max(np.abs(runs[0].populations[c["initial"]] - runs[1].populations[c["initial"]])))
    return ComparisonReport(case, diff, *runs)
