"""Closed-system propagation along piecewise-linear schedules.

The Schroedinger equation is integrated segment by segment with an
adaptive eighth-order Runge-Kutta method (Dormand-Prince, ``DOP853``).
Within a segment H(t) = H(t_k) + (t - t_k) * dH/dt exactly, so the
Hamiltonian at every stage time is evaluated without interpolation error.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import hilbert
from .darkstates import SINGLET
from .hilbert import SpaceSpec
from .models import ConditionError, hamiltonian_sparse
from .schedule import Schedule, standard_trajectory

log = logging.getLogger(__name__)

DENSE_LIMIT = 3000


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    rtol: float = 1e-10
    atol: float = 1e-12
    method: str = "DOP853"
    max_step: float = np.inf
    n_samples: int = 101


@dataclass
class TrajectoryResult:
    times: np.ndarray
    states: np.ndarray  # (n_samples, dim)
    populations: dict = field(default_factory=dict)
    fidelity: np.ndarray | None = None
    norm_drift: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_fidelity(self) -> float:
        if self.fidelity is None:
            raise ValueError("no target state was given")
        return float(self.fidelity[-1])


def _operators(spec: SpaceSpec, schedule: Schedule, k: int):
    t0 = schedule.times[k]
    h0 = hamiltonian_sparse(spec, schedule.params_at(t0))
    h1 = schedule.hdot_sparse(spec, t0)
    if spec.dim <= DENSE_LIMIT:
        return h0.toarray().astype(complex), h1.toarray().astype(complex)
    return h0.astype(complex), h1.astype(complex)


def sample_times(schedule: Schedule, n_samples: int) -> np.ndarray:
    grid = np.linspace(0.0, schedule.duration, max(n_samples, 2))
    return np.unique(np.concatenate([grid, schedule.times]))


def propagate(schedule: Schedule, spec: SpaceSpec, psi0, config: SolverConfig = SolverConfig(),
              observables: dict | None = None, target=None, times=None) -> TrajectoryResult:
    """Integrate i d(psi)/dt = H(t) psi over the whole schedule.

    ``observables`` maps names to states whose populations |<phi|psi(t)>|^2
    are recorded; ``target`` adds a fidelity curve.
    """
    if (spec.n_qubits, spec.n_modes) != (schedule.n_qubits, schedule.n_modes):
        raise ValueError("schedule and space describe different models")
    psi = np.asarray(psi0, dtype=complex)
    if psi.shape != (spec.dim,):
        raise ValueError(f"initial state has shape {psi.shape}, expected ({spec.dim},)")
    if abs(np.linalg.norm(psi) - 1) > 1e-12:
        raise ValueError("initial state is not normalised")
    times = sample_times(schedule, config.n_samples) if times is None else np.asarray(times, float)
    states = np.empty((len(times), spec.dim), dtype=complex)
    states[0] = psi
    filled = 1
    for k in range(len(schedule.times) - 1):
        t0, t1 = schedule.times[k], schedule.times[k + 1]
        h0, h1 = _operators(spec, schedule, k)

        def rhs(t, y, h0=h0, h1=h1, t0=t0):
            return -1j * (h0 @ y + (t - t0) * (h1 @ y))

        inside = times[(times > t0) & (times <= t1 * (1 + 1e-14))]
        if len(inside) == 0 or inside[-1] < t1:
            inside = np.append(inside, t1)
        sol = solve_ivp(rhs, (t0, t1), psi, method=config.method, t_eval=inside,
                        rtol=config.rtol, atol=config.atol, max_step=config.max_step)
        if sol.status != 0:
            raise IntegrationError(f"integration failed on segment {k}: {sol.message}")
        keep = np.isin(sol.t, times)
        n = int(keep.sum())
        states[filled:filled + n] = sol.y[:, keep].T
        filled += n
        psi = sol.y[:, -1]
    if filled != len(times):
        raise IntegrationError("sample times were not all reached")
    norms = np.linalg.norm(states, axis=1)
    result = TrajectoryResult(times, states, norm_drift=float(np.max(np.abs(norms - 1.0))),
                              meta={"spec": spec, "config": config})
    for name, phi in (observables or {}).items():
        result.populations[name] = np.abs(states @ np.conj(phi)) ** 2
    if target is not None:
        result.fidelity = np.abs(states @ np.conj(target)) ** 2
    return result


# -- W states ---------------------------------------------------------------

def w_mode_vector(g_vector, cutoff: int = 1) -> np.ndarray:
    """Single-photon W state sum_i g_i |..1_i..> / N over the box-truncated modes."""
    g = np.atleast_1d(np.asarray(g_vector, dtype=float))
    if not np.any(g):
        raise ValueError("W state needs a nonzero coupling vector")
    m = len(g)
    out = np.zeros((cutoff + 1) ** m, dtype=complex)
    for i, gi in enumerate(g):
        out[(cutoff + 1) ** (m - 1 - i)] = gi
    return out / np.linalg.norm(g)


def w_target(g_vector, spec: SpaceSpec, qubit_state="singlet") -> np.ndarray:
    """|W_M> (x) qubit part in ``spec``; the default qubit part is (du - ud)/sqrt2."""
    g = np.atleast_1d(np.asarray(g_vector, dtype=float))
    if len(g) != spec.n_modes:
        raise ValueError(f"need {spec.n_modes} couplings, got {len(g)}")
    if not np.any(g):
        raise ValueError("W state needs a nonzero coupling vector")
    if isinstance(qubit_state, str):
        if qubit_state != "singlet" or spec.n_qubits != 2:
            raise ValueError("the singlet qubit part needs exactly two qubits")
        qubit_state = SINGLET
    q = np.asarray(qubit_state, dtype=complex)
    if q.shape != (spec.qubit_dim,):
        raise ValueError("qubit part has the wrong length")
    table = hilbert.build_space(spec)
    mode_part = np.zeros(spec.mode_dim, dtype=complex)
    for i, gi in enumerate(g):
        occ = tuple(1 if k == i else 0 for k in range(spec.n_modes))
        mode_part[table.index([0] * spec.n_qubits, occ)] = gi
    return hilbert.normalize(np.kron(q, mode_part))


def initial_state(spec: SpaceSpec) -> np.ndarray:
    """|0_M, all qubits up>."""
    return hilbert.basis_state(spec, [0] * spec.n_qubits, (0,) * spec.n_modes)


def _final_g(schedule: Schedule) -> np.ndarray:
    return schedule.nodes[-1].g[:, 0]


def run_w_generation(schedule: Schedule, cutoff: int = 6, truncation: str = "total",
                     config: SolverConfig = SolverConfig(), target_g=None, escalate: bool = True,
                     max_cutoff: int = 12, tol: float = 1e-3) -> TrajectoryResult:
    """Drive |0_M uu> along ``schedule`` and report the fidelity with |W_M psi_B>.

    The run is repeated at ``cutoff + 2``; if the final fidelities differ by
    ``tol`` or more the cutoff is escalated (up to ``max_cutoff``).  The
    outcome is recorded in ``meta['converged']``.
    """
    g = _final_g(schedule) if target_g is None else np.asarray(target_g, dtype=float)

    def run(c):
        spec = SpaceSpec(schedule.n_qubits, schedule.n_modes, c, truncation)
        psi0 = initial_state(spec)
        tgt = w_target(g, spec)
        return propagate(schedule, spec, psi0, config, observables={"0uu": psi0, "W_psiB": tgt},
                         target=tgt)

    result = run(cutoff)
    while True:
        check = run(cutoff + 2)
        diff = abs(check.final_fidelity - result.final_fidelity)
        converged = diff < tol
        if converged or not escalate or cutoff + 2 >= max_cutoff:
            break
        cutoff += 2
        result = check
    if not converged:
        log.warning("W generation not converged in cutoff: |dF| = %.2e at cutoff %d", diff, cutoff)
    result.meta.update(cutoff=cutoff, converged=converged, cutoff_delta=diff,
                       check_fidelity=check.final_fidelity, periods=schedule.periods,
                       schedule=schedule.meta)
    return result


# -- least-time search -------------------------------------------------------

@dataclass
class LeastTimeResult:
    u: float
    threshold: float
    t_min: float | None  # periods, None when not reachable
    g_max: float | None
    fidelity: float | None
    scanned: list = field(default_factory=list)  # (periods, best g_max, best fidelity)
    monotone: bool | None = None  # threshold still met one coarse step past t_min

    @property
    def found(self) -> bool:
        return self.t_min is not None


def _fidelity_for(periods: float, g_max: float, u: float, n_modes: int, cutoff: int,
                  config: SolverConfig) -> float:
    # g_max is the per-mode coupling of the two-mode passage, so sum_i g_i^2 = 2 g_max^2
    sched = standard_trajectory("fig2_stark", periods=periods, u=(u, u), n_modes=n_modes,
                                g_sum_sq=2 * g_max**2)
    spec = SpaceSpec(2, n_modes, cutoff, "total")
    psi0 = initial_state(spec)
    tgt = w_target(_final_g(sched), spec)
    times = np.array([0.0, sched.duration])
    return propagate(sched, spec, psi0, config, target=tgt, times=times).final_fidelity


def best_fidelity(periods: float, u: float, g_grid, n_modes: int = 1, cutoff: int = 6,
                  config: SolverConfig = SolverConfig(rtol=1e-8, atol=1e-10)) -> tuple:
    """(best fidelity, g_max achieving it) over a coupling grid at fixed duration."""
    fids = [_fidelity_for(periods, g, u, n_modes, cutoff, config) for g in g_grid]
    k = int(np.argmax(fids))
    return fids[k], float(g_grid[k])


def least_time_search(u: float, threshold: float = 0.99, g_range=(0.05, 1.2), g_step: float = 0.05,
                      t_range=(0.5, 6.0), t_step: float = 0.1, t_tol: float = 0.02,
                      n_modes: int = 1, cutoff: int = 6,
                      config: SolverConfig = SolverConfig(rtol=1e-8, atol=1e-10)) -> LeastTimeResult:
    """Shortest passage time (periods) reaching ``threshold`` for U1 = U2 = u.

    A coarse scan over T (step ``t_step``) and g_max (step ``g_step``, the
    per-mode coupling of the two-mode passage) is refined by bisection on T
    down to ``t_tol``.  By the bright-mode reduction the search runs on
    ``n_modes`` = 1 with the same sum_i g_i^2 unless told otherwise.
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    g_grid = np.arange(g_range[0], g_range[1] + 1e-9, g_step)
    result = LeastTimeResult(u, threshold, None, None, None)
    lo = None
    hi = None
    for periods in np.arange(t_range[0], t_range[1] + 1e-9, t_step):
        f, g = best_fidelity(periods, u, g_grid, n_modes, cutoff, config)
        result.scanned.append((float(periods), g, f))
        if f >= threshold:
            hi = (float(periods), g, f)
            break
        lo = float(periods)
    if hi is None:
        return result
    if lo is not None:
        a, b = lo, hi[0]
        while b - a > t_tol:
            mid = 0.5 * (a + b)
            f, g = best_fidelity(mid, u, g_grid, n_modes, cutoff, config)
            result.scanned.append((mid, g, f))
            if f >= threshold:
                b, hi = mid, (mid, g, f)
            else:
                a = mid
    result.t_min, result.g_max, result.fidelity = hi
    f_after, _ = best_fidelity(hi[0] + t_step, u, g_grid, n_modes, cutoff, config)
    result.monotone = bool(f_after >= threshold)
    if not result.monotone:
        log.warning("fidelity drops below threshold again after T_min = %.4f (U = %.3f)", hi[0], u)
    return result


# -- M independence ----------------------------------------------------------

@dataclass
class MIndependenceReport:
    fidelities: dict  # M -> final fidelity
    max_fidelity_spread: float
    max_reduced_distance: float


def bright_mode_amplitudes(result: TrajectoryResult, g_vector) -> np.ndarray:
    """Amplitudes on |n_b1; qubits> with all free Bogoliubov modes empty, per sample time.

    Computed by projecting onto (b_1^+)^n |0, q> / sqrt(n!).
    """
    from math import factorial

    from .models import b_operator_sparse, bogoliubov_frame

    spec = result.meta["spec"]
    frame = bogoliubov_frame(np.asarray(g_vector, dtype=float))
    b1dag = b_operator_sparse(spec, frame, 1).T
    table = hilbert.build_space(spec)
    vac = (0,) * spec.n_modes
    basis = []
    for q in range(spec.qubit_dim):
        bits = [(q >> (spec.n_qubits - 1 - b)) & 1 for b in range(spec.n_qubits)]
        vec = np.zeros(spec.dim)
        vec[table.index(bits, vac)] = 1.0
        for n in range(spec.cutoff + 1):
            basis.append(vec / np.sqrt(factorial(n)))
            vec = b1dag @ vec
    basis = np.array(basis)
    return result.states @ basis.T.conj()


def m_independence_check(base: str, m_list, cutoff: int = 6, config: SolverConfig = SolverConfig(),
                         ratios_for=None, **overrides) -> MIndependenceReport:
    """Run the same passage for several mode counts at fixed sum_i g_i^2."""
    fids, amps = {}, {}
    g_sum = None
    for m in m_list:
        ratios = None if ratios_for is None else ratios_for(m)
        sched = standard_trajectory(base, n_modes=m, ratios=ratios, **overrides)
        s = float(np.sum(sched.nodes[-1].g[:, 0] ** 2))
        if g_sum is None:
            g_sum = s
        elif abs(s - g_sum) > 1e-12:
            raise ConditionError("sum_i g_i^2 differs between mode counts")
        res = run_w_generation(sched, cutoff=cutoff, config=config, escalate=False)
        fids[m] = res.final_fidelity
        amps[m] = bright_mode_amplitudes(res, sched.nodes[-1].g[:, 0])
    vals = list(fids.values())
    ref = amps[m_list[0]]
    dist = max(float(np.max(np.abs(a - ref))) for a in amps.values())
    return MIndependenceReport(fids, float(max(vals) - min(vals)), dist)
