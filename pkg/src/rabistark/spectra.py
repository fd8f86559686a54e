"""Diagonalization, parity sectors, level tracking and adiabatic diagnostics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh, polar
from scipy.optimize import linear_sum_assignment

from . import hilbert
from .darkstates import psi_2splus
from .hilbert import SpaceSpec
from .models import (ConditionError, b_number_operator, b_operator_sparse, bogoliubov_frame,
                     coupling_column, hamiltonian_sparse)
from .schedule import Schedule

log = logging.getLogger(__name__)

DEGENERACY_TOL = 1e-8
AMBIGUITY_TOL = 1e-6


@dataclass
class EigenSystem:
    energies: np.ndarray
    states: np.ndarray  # columns, full-space vectors
    parity_labels: np.ndarray

    def __len__(self):
        return len(self.energies)

    def residual(self, h) -> float:
        """max_k |H psi_k - E_k psi_k| / max(1, |E_k|)."""
        r = h @ self.states - self.states * self.energies
        return float(np.max(np.linalg.norm(r, axis=0) / np.maximum(1.0, np.abs(self.energies))))

    def gram_residual(self) -> float:
        g = self.states.conj().T @ self.states
        return float(np.max(np.abs(g - np.eye(len(self)))))


def _dense(h):
    return h.toarray() if sp.issparse(h) else np.asarray(h)


def eigensystem(h, sector: int | None = None, spec: SpaceSpec | None = None) -> EigenSystem:
    """Full ascending spectrum, optionally restricted to one parity block."""
    h = _dense(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("Hamiltonian must be a square matrix")
    if not hilbert.is_hermitian(h, 1e-10 * max(1.0, np.max(np.abs(h), initial=0.0))):
        raise ValueError("Hamiltonian is not Hermitian")
    if sector is None:
        e, v = eigh(h)
        if spec is not None:
            par = hilbert.parity_diag(spec)
            labels = np.sign(np.real(np.einsum("ik,i,ik->k", v.conj(), par, v)))
        else:
            labels = np.zeros(len(e))
        return EigenSystem(e, v, labels)
    if spec is None:
        raise ValueError("a SpaceSpec is required to select a parity sector")
    idx = hilbert.sector_indices(spec, sector)
    block = h[np.ix_(idx, idx)]
    e, vb = eigh(block)
    v = np.zeros((h.shape[0], len(e)), dtype=np.result_type(vb, float))
    v[idx] = vb
    return EigenSystem(e, v, np.full(len(e), float(sector)))


def degenerate_clusters(energies, tol: float = DEGENERACY_TOL) -> list:
    """Index groups of (nearly) equal consecutive energies with more than one member."""
    out, cur = [], [0]
    for k in range(1, len(energies)):
        if energies[k] - energies[k - 1] < tol:
            cur.append(k)
        else:
            if len(cur) > 1:
                out.append(cur)
            cur = [k]
    if len(cur) > 1:
        out.append(cur)
    return out


def _diagonalize_labels(v, clusters, label_ops):
    """Rotate each degenerate cluster so that the label operators are diagonal."""
    if not label_ops:
        return v
    v = v.copy()
    weights = 1.0 + np.arange(len(label_ops)) * np.pi / 7
    for c in clusters:
        sub = v[:, c]
        mix = sum(w * (sub.conj().T @ (op @ sub)) for w, op in zip(weights, label_ops))
        _, rot = eigh(0.5 * (mix + mix.conj().T))
        v[:, c] = sub @ rot
    return v


def _align(v, clusters, ref, label_values=None):
    """Rotate degenerate clusters of ``v`` towards the states ``ref`` (polar factor).

    Clusters whose members carry distinct label values are left alone.
    """
    v = v.copy()
    for c in clusters:
        if label_values is not None and len(label_values) and np.max(np.ptp(label_values[:, c], axis=1)) > 0.5:
            continue
        sub = v[:, c]
        a = sub.conj().T @ ref
        best = np.argsort(-np.sum(np.abs(a) ** 2, axis=0))[: len(c)]
        u, _ = polar(a[:, np.sort(best)])
        v[:, c] = sub @ u
    return v


@dataclass
class SpectrumSweep:
    grid: np.ndarray
    energies: np.ndarray  # (n_points, n_tracks), column = track id
    sector: int | None
    nb_labels: dict = field(default_factory=dict)  # name -> (n_points, n_tracks)
    probes: dict = field(default_factory=dict)  # name -> complex (n_points, n_tracks) amplitudes
    overlaps: np.ndarray | None = None  # (n_points - 1, n_tracks) successive overlaps
    flags: list = field(default_factory=list)  # (point index, track, reason)
    states: list | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_tracks(self) -> int:
        return self.energies.shape[1]

    def flagged_tracks(self) -> set:
        return {t for _, t, _ in self.flags}


def sweep_spectrum(spec: SpaceSpec, params_of, grid, sector: int | None = 1, label_ops=None,
                   probes=None, keep_states: bool = False) -> SpectrumSweep:
    """Diagonalize H(params_of(x)) on ``grid`` and connect levels into tracks.

    ``label_ops`` maps names to operators (e.g. free Bogoliubov numbers) whose
    expectation values are recorded and which fix the basis inside
    degenerate clusters.  ``probes(x, params)`` returns named vectors whose
    overlaps <E_m|probe> are recorded per track.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2:
        raise ValueError("need at least two grid points")
    d = np.diff(grid)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError("grid must be strictly monotone")
    label_ops = dict(label_ops or {})
    ops = [op.toarray() if sp.issparse(op) else np.asarray(op) for op in label_ops.values()]

    def solve(x):
        es = eigensystem(hamiltonian_sparse(spec, params_of(x)), sector, spec)
        return es, degenerate_clusters(es.energies)

    def labels_of(v):
        return np.array([np.real(np.einsum("ik,ij,jk->k", v.conj(), op, v)) for op in ops])

    n = len(grid)
    first, cl0 = solve(grid[0])
    n_levels = len(first)
    energies = np.empty((n, n_levels))
    lab = np.empty((n, len(ops), n_levels))
    probe_vals: dict = {}
    overlaps = np.empty((n - 1, n_levels))
    flags = []
    kept = [] if keep_states else None

    nxt, cl1 = solve(grid[1])
    v0 = _diagonalize_labels(first.states, cl0, ops)
    v1 = _diagonalize_labels(nxt.states, cl1, ops)
    v0 = _align(v0, cl0, v1, labels_of(v0) if ops else None) if cl0 else v0

    prev_v = None
    for k in range(n):
        if k == 0:
            es, v, clusters = first, v0, cl0
        elif k == 1:
            es, v, clusters = nxt, v1, cl1
        else:
            es, clusters = solve(grid[k])
            v = _diagonalize_labels(es.states, clusters, ops)
        e = es.energies
        if prev_v is not None:
            if clusters:
                v = _align(v, clusters, prev_v, labels_of(v) if ops else None)
            ov = np.abs(prev_v.conj().T @ v) ** 2
            rows, cols = linear_sum_assignment(-ov)
            perm = np.empty(n_levels, dtype=int)
            perm[rows] = cols
            for t in range(n_levels):
                srt = np.sort(ov[t])[::-1]
                if len(srt) > 1 and srt[0] - srt[1] < AMBIGUITY_TOL and srt[0] > 0:
                    flags.append((k, t, "ambiguous"))
            v, e = v[:, perm], e[perm]
            overlaps[k - 1] = ov[np.arange(n_levels), perm]
            for t in np.nonzero(overlaps[k - 1] <= 0.5)[0]:
                flags.append((k, int(t), "low overlap"))
        energies[k] = e
        if ops:
            lab[k] = labels_of(v)
        if probes is not None:
            for name, vec in probes(grid[k], params_of(grid[k])).items():
                probe_vals.setdefault(name, np.empty((n, n_levels), dtype=complex))[k] = v.conj().T @ vec
        if keep_states:
            kept.append(v)
        prev_v = v
    nb = {name: lab[:, i, :] for i, name in enumerate(label_ops)}
    if flags:
        log.info("%d track flags in sweep", len(flags))
    return SpectrumSweep(grid, energies, sector, nb, probe_vals, overlaps, flags, kept,
                         meta={"spec": spec})


def bogoliubov_labels(spec: SpaceSpec, g_profile) -> dict:
    """Free Bogoliubov mode numbers n_b2..n_bM for a fixed coupling profile."""
    if spec.n_modes < 2:
        return {}
    frame = bogoliubov_frame(g_profile)
    return {f"n_b{j}": b_number_operator(spec, frame, j) for j in range(2, spec.n_modes + 1)}


def dark_state_probes(spec: SpaceSpec, schedule: Schedule):
    """Probe vectors for the psi_2s+ passage along ``schedule``.

    ``ref``: the dark state embedded in ``spec``; ``hdot_ref``: dH/dt |ref>;
    ``du``/``ud``: |1_b1> (x) |du>, |1_b1> (x) |ud> with all other b modes empty.
    """
    prof = coupling_column(schedule.nodes[-1])
    frame = bogoliubov_frame(prof)
    b1dag = b_operator_sparse(spec, frame, 1).T
    vac = (0,) * spec.n_modes
    du = b1dag @ hilbert.basis_state(spec, "du", vac)
    ud = b1dag @ hilbert.basis_state(spec, "ud", vac)

    def probes(t, params):
        cert = psi_2splus(params)
        ref = hilbert.embed(cert.state, cert.spec, spec)
        return {"ref": ref, "hdot_ref": schedule.hdot_sparse(spec, t) @ ref, "du": du, "ud": ud}

    return probes


def sweep_schedule(schedule: Schedule, spec: SpaceSpec, n_points: int = 201, sector: int | None = 1,
                   probes=None, label_ops=None, keep_states: bool = False) -> SpectrumSweep:
    """Instantaneous spectrum along a schedule; the grid is time (units 1/omega)."""
    grid = np.linspace(0.0, schedule.duration, n_points)
    if label_ops is None:
        try:
            label_ops = bogoliubov_labels(spec, coupling_column(schedule.nodes[-1]))
        except ConditionError:
            label_ops = {}
    out = sweep_spectrum(spec, schedule.params_at, grid, sector, label_ops, probes, keep_states)
    out.meta["schedule"] = schedule.meta
    return out


# -- adiabatic diagnostics ---------------------------------------------------

@dataclass
class AdiabaticRatio:
    ratio: np.ndarray  # nan where degenerate with the reference
    coupling: np.ndarray  # |<E_m|Hdot|psi_ref>|
    gap: np.ndarray  # E_m - E_ref
    degenerate: np.ndarray  # bool


def adiabatic_ratio(hdot, es: EigenSystem, psi_ref, e_ref: float,
                    tol: float = DEGENERACY_TOL) -> AdiabaticRatio:
    """R_m = |<E_m|Hdot|psi_ref>| / (E_m - E_ref)^2 for every level of ``es``.

    Levels within ``tol`` of ``e_ref`` are marked degenerate; their raw
    matrix element is kept in ``coupling`` and the ratio is nan.
    """
    coupling = np.abs(es.states.conj().T @ (hdot @ np.asarray(psi_ref)))
    gap = es.energies - e_ref
    degenerate = np.abs(gap) < tol
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(degenerate, np.nan, coupling / gap**2)
    return AdiabaticRatio(ratio, coupling, gap, degenerate)


def reference_track(sweep: SpectrumSweep, probe: str = "ref") -> int:
    """Track with the largest mean overlap with the reference probe."""
    weights = np.mean(np.abs(sweep.probes[probe]) ** 2, axis=0)
    return int(np.argmax(weights))


def sweep_ratios(sweep: SpectrumSweep, ref: int | None = None) -> np.ndarray:
    """R along the sweep, (n_points, n_tracks); reference and degenerate points are nan."""
    ref = reference_track(sweep) if ref is None else ref
    gap = sweep.energies - sweep.energies[:, [ref]]
    coup = np.abs(sweep.probes["hdot_ref"])
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(np.abs(gap) < DEGENERACY_TOL, np.nan, coup / gap**2)
    r[:, ref] = np.nan
    return r


@dataclass
class LawReport:
    max_relation_residual: float
    tracks: dict  # track -> dict(min_delta, coupling_at_min, coupling_max, passes)
    passes: bool


def matrix_element_law_check(sweep: SpectrumSweep, schedule: Schedule, ref: int | None = None,
                             window: float = 0.25) -> LawReport:
    """Check the two-amplitude relation and the vanishing coupling near E = E_ref.

    For every level E = E_ref + delta:
    (D2 + U2 - D1 - U1 - delta) <1_b1 du|E> = (D1 + U1 - D2 - U2 - delta) <1_b1 ud|E>.
    Tracks that come within ``window`` of the reference must have their
    coupling at the closest point below 10% of their maximum coupling.
    """
    for node in schedule.nodes:
        if node.n_qubits != 2:
            raise ConditionError("the amplitude relation is stated for two qubits")
        if np.any(np.ptp(node.u, axis=0) > 1e-12) or np.any(np.abs(node.g[:, 0] - node.g[:, 1]) > 1e-12):
            raise ConditionError("requires U_ij = U_j and g_i1 = g_i2")
    ref = reference_track(sweep) if ref is None else ref
    worst = 0.0
    for k, t in enumerate(sweep.grid):
        p = schedule.params_at(t)
        s = p.delta[0] + p.u[0, 0] - p.delta[1] - p.u[0, 1]
        delta = sweep.energies[k] - sweep.energies[k, ref]
        a_du, a_ud = sweep.probes["du"][k], sweep.probes["ud"][k]
        lhs = (-s - delta) * np.conj(a_du)
        rhs = (s - delta) * np.conj(a_ud)
        scale = np.maximum(1.0, np.abs(s) + np.abs(delta))
        res = np.abs(lhs - rhs) / scale
        res[ref] = 0.0
        worst = max(worst, float(np.max(res)))
    coup = np.abs(sweep.probes["hdot_ref"])
    tracks = {}
    for m in range(sweep.n_tracks):
        if m == ref:
            continue
        dist = np.abs(sweep.energies[:, m] - sweep.energies[:, ref])
        kmin = int(np.argmin(dist))
        if dist[kmin] > window:
            continue
        cmax = float(np.max(coup[:, m]))
        tracks[m] = dict(min_delta=float(dist[kmin]), coupling_at_min=float(coup[kmin, m]),
                         coupling_max=cmax, passes=bool(coup[kmin, m] <= 0.1 * cmax or cmax < 1e-12))
    ok = worst < 1e-8 and all(v["passes"] for v in tracks.values())
    return LawReport(worst, tracks, ok)


@dataclass
class GapResult:
    gap: float
    track: int
    index: int
    excluded: dict  # track -> reason
    candidates: list


def effective_min_gap(sweep: SpectrumSweep, ref: int | None = None, exclusion: str = "symmetry",
                      coupling_tol: float = 1e-10, r_tol: float = 0.05, nb_tol: float = 0.5) -> GapResult:
    """Minimum distance from the reference track to tracks that can drive transitions.

    ``exclusion``:
      ``"symmetry"``  drop tracks with <n_b(j>1)> > ``nb_tol`` or with
                      max_t |<E_m|Hdot|ref>| < ``coupling_tol``;
      ``"ratio"``     additionally drop tracks whose adiabatic ratio R stays
                      below ``r_tol`` over the whole sweep;
      ``"none"``      keep every other track.
    """
    if exclusion not in ("symmetry", "ratio", "none"):
        raise ValueError(f"unknown exclusion rule {exclusion!r}")
    ref = reference_track(sweep) if ref is None else ref
    excluded = {}
    if exclusion != "none":
        for name, lab in sweep.nb_labels.items():
            for m in np.nonzero(np.max(lab, axis=0) > nb_tol)[0]:
                excluded.setdefault(int(m), f"{name} > {nb_tol}")
        coup = np.max(np.abs(sweep.probes["hdot_ref"]), axis=0)
        for m in np.nonzero(coup < coupling_tol)[0]:
            excluded.setdefault(int(m), "no coupling")
    if exclusion == "ratio":
        r = sweep_ratios(sweep, ref)
        with np.errstate(invalid="ignore"):
            rmax = np.nanmax(np.where(np.isnan(r), 0.0, r), axis=0)
        for m in np.nonzero(rmax < r_tol)[0]:
            excluded.setdefault(int(m), f"R < {r_tol}")
    excluded.pop(ref, None)
    cands = [m for m in range(sweep.n_tracks) if m != ref and m not in excluded]
    if not cands:
        raise ValueError("no candidate tracks remain after exclusion")
    dist = np.abs(sweep.energies[:, cands] - sweep.energies[:, [ref]])
    k, c = np.unravel_index(np.argmin(dist), dist.shape)
    return GapResult(float(dist[k, c]), cands[c], int(k), excluded, cands)


# -- export -------------------------------------------------------------------

def export_sweep(sweep: SpectrumSweep, path=None, coordinate: str = "t") -> str:
    """Delimited text: metadata header rows then one energy column per track."""
    lines = [f"# sector={sweep.sector}", f"# tracks={sweep.n_tracks}"]
    for name, lab in sweep.nb_labels.items():
        lines.append(f"# {name}," + ",".join(f"{x:.6f}" for x in np.max(lab, axis=0)))
    lines.append(f"# flags={len(sweep.flags)}")
    lines.append(",".join([coordinate] + [f"E{m}" for m in range(sweep.n_tracks)]))
    for x, row in zip(sweep.grid, sweep.energies):
        lines.append(",".join([f"{x:.10f}"] + [f"{e:.12f}" for e in row]))
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text
