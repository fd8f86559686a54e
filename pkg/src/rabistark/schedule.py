"""Piecewise-linear parameter schedules and the named figure trajectories.

Times are in units of 1/omega_ref internally; ``periods`` converts to the
user-facing unit 2*pi/omega_ref.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np
import scipy.sparse as sp

from .hilbert import SpaceSpec
from .models import ConditionError, ModelParams, hamiltonian_terms, param_value

TWO_PI = 2.0 * np.pi
_FIELDS = ("delta", "omega", "g", "u")


@dataclass(frozen=True)
class Schedule:
    """Parameters interpolated linearly between ``nodes`` at ``times``."""

    times: tuple
    nodes: tuple
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if len(times) < 2 or len(times) != len(self.nodes):
            raise ValueError("need at least two nodes and one time per node")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ValueError("node times must start at 0 and increase strictly")
        shapes = {(n.n_qubits, n.n_modes) for n in self.nodes}
        if len(shapes) != 1:
            raise ValueError("all nodes must describe the same model shape")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "nodes", tuple(self.nodes))

    @classmethod
    def linear(cls, start: ModelParams, end: ModelParams, duration: float, **meta) -> "Schedule":
        return cls((0.0, float(duration)), (start, end), meta)

    @classmethod
    def constant(cls, params: ModelParams, duration: float, **meta) -> "Schedule":
        return cls.linear(params, params, duration, **meta)

    @property
    def duration(self) -> float:
        return self.times[-1]

    @property
    def periods(self) -> float:
        return self.duration / TWO_PI

    @property
    def n_qubits(self) -> int:
        return self.nodes[0].n_qubits

    @property
    def n_modes(self) -> int:
        return self.nodes[0].n_modes

    def segment(self, t: float) -> int:
        if t < 0 or t > self.duration * (1 + 1e-12):
            raise ValueError(f"time {t} outside [0, {self.duration}]")
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return min(max(k, 0), len(self.times) - 2)

    def params_at(self, t: float) -> ModelParams:
        k = self.segment(t)
        t0, t1 = self.times[k], self.times[k + 1]
        s = (t - t0) / (t1 - t0)
        a, b = self.nodes[k], self.nodes[k + 1]
        return ModelParams(**{f: (1 - s) * getattr(a, f) + s * getattr(b, f) for f in _FIELDS})

    def slopes_at(self, t: float) -> dict:
        """d(parameter)/dt on the segment containing ``t``, keyed by field name."""
        k = self.segment(t)
        dt = self.times[k + 1] - self.times[k]
        a, b = self.nodes[k], self.nodes[k + 1]
        return {f: (getattr(b, f) - getattr(a, f)) / dt for f in _FIELDS}

    def hdot_sparse(self, spec: SpaceSpec, t: float) -> sp.csr_matrix:
        """Time derivative of H built from the analytic schedule slopes."""
        slopes = SimpleNamespace(**self.slopes_at(t))
        out = sp.csr_matrix((spec.dim, spec.dim))
        for key, op in hamiltonian_terms(spec).items():
            c = param_value(slopes, key)
            if c != 0.0:
                out = out + c * op
        return out.tocsr()

    def hdot(self, spec: SpaceSpec, t: float) -> np.ndarray:
        return self.hdot_sparse(spec, t).toarray()

    def to_dict(self) -> dict:
        return {"times": list(self.times), "nodes": [n.to_dict() for n in self.nodes], "meta": self.meta}


# -- named figure trajectories ---------------------------------------------

STANDARD = {
    # name: periods, default M, g ratios, sum_i g_i^2 at the end, Stark (U1, U2)
    "fig1_rabi": dict(periods=11.0, n_modes=2, ratios=None, g_sum_sq=2 * 0.3**2, u=(0.0, 0.0)),
    "fig2_stark": dict(periods=1.86, n_modes=2, ratios=None, g_sum_sq=2 * 0.7**2, u=(0.5, 0.5)),
    "fig3_stark_asym": dict(periods=1.55, n_modes=2, ratios=None, g_sum_sq=2.0, u=(2 / 3, 1 / 3)),
    "figS2a": dict(periods=3.18, n_modes=2, ratios=None, g_sum_sq=0.65, u=(0.5, 0.5)),
    "figS2c": dict(periods=1.86, n_modes=2, ratios=None, g_sum_sq=2 * 0.7**2, u=(0.5, 0.5)),
    "figS2e": dict(periods=1.55, n_modes=3, ratios=None, g_sum_sq=2.0, u=(2 / 3, 1 / 3)),
    "figS2g": dict(periods=1.86, n_modes=2, ratios=(2.0, 1.0), g_sum_sq=2 * 0.7**2, u=(0.5, 0.5)),
}


def g_profile(n_modes: int, ratios=None, g_sum_sq: float = 1.0) -> np.ndarray:
    """Per-mode couplings with the given ratios and sum of squares."""
    r = np.ones(n_modes) if ratios is None else np.asarray(ratios, dtype=float)
    if r.shape != (n_modes,):
        raise ValueError(f"expected {n_modes} coupling ratios, got {len(r)}")
    if np.all(r == 0):
        raise ValueError("coupling ratios are all zero")
    return r * np.sqrt(g_sum_sq / np.sum(r**2))


def standard_trajectory(name: str, **overrides) -> Schedule:
    """Linear two-qubit W-state passage: Delta_1 omega -> (omega - U1 + U2)/2,
    Delta_2 0 -> (omega + U1 - U2)/2, g_i 0 -> g_i,max.

    Accepted overrides: ``periods``, ``n_modes``, ``ratios``, ``g_sum_sq``,
    ``u`` (U1, U2 applied to every mode), ``omega``, ``delta_start``,
    ``delta_end``.
    """
    if name not in STANDARD:
        raise KeyError(f"unknown trajectory {name!r}; choose from {sorted(STANDARD)}")
    unknown = set(overrides) - {"periods", "n_modes", "ratios", "g_sum_sq", "u", "omega",
                                "delta_start", "delta_end"}
    if unknown:
        raise ValueError(f"unknown overrides {sorted(unknown)}")
    cfg = dict(STANDARD[name])
    if "n_modes" in overrides and "ratios" not in overrides:
        cfg["ratios"] = None
    cfg.update(overrides)
    omega = float(cfg.get("omega", 1.0))
    d_start = np.asarray(cfg.get("delta_start", (omega, 0.0)), dtype=float)
    u = np.asarray(cfg["u"], dtype=float)
    # end where the singlet-W state is an exact dark state: Delta_1 - Delta_2 = U_2 - U_1
    du = u[0] - u[1]
    d_end = np.asarray(cfg.get("delta_end", ((omega - du) / 2, (omega + du) / 2)), dtype=float)
    for label, d in (("start", d_start), ("end", d_end)):
        if abs(d.sum() - omega) > 1e-12:
            raise ConditionError(f"Delta_1 + Delta_2 must equal omega at the {label} of the passage")
    m = int(cfg["n_modes"])
    if cfg["ratios"] is not None and len(cfg["ratios"]) != m:
        raise ValueError(f"expected {m} coupling ratios")
    g_end = g_profile(m, cfg["ratios"], cfg["g_sum_sq"])
    start = ModelParams.symmetric(d_start, np.zeros(m), omega, u)
    end = ModelParams.symmetric(d_end, g_end, omega, u)
    periods = float(cfg["periods"])
    return Schedule.linear(start, end, periods * TWO_PI / omega, name=name, periods=periods,
                           g_end=g_end.tolist(), u=u.tolist(), omega=omega)
