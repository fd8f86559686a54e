import numpy as np
import pytest
from hypothesis import given, strategies as st

from rabistark.hilbert import SpaceSpec
from rabistark.models import ModelParams, hamiltonian_rabi_stark
from rabistark.schedule import standard_trajectory
from rabistark.spectra import (adiabatic_ratio, bogoliubov_labels, dark_state_probes, degenerate_clusters,
                               effective_min_gap, eigensystem, export_sweep, matrix_element_law_check,
                               reference_track, sweep_ratios, sweep_schedule, sweep_spectrum)


@given(st.integers(0, 2**32 - 1), st.sampled_from([1, -1, None]))
def test_eigensystem_residuals(seed, sector):
    rng = np.random.default_rng(seed)
    p = ModelParams(rng.uniform(0, 1, 2), [1.0, 1.2], rng.uniform(-1, 1, (2, 2)), rng.uniform(-.4, .4, (2, 2)))
    spec = SpaceSpec(2, 2, 3, "total")
    h = hamiltonian_rabi_stark(spec, p)
    es = eigensystem(h, sector, spec)
    assert es.residual(h) < 1e-10 and es.gram_residual() < 1e-10
    assert np.all(np.diff(es.energies) >= 0)
    if sector is None:
        assert set(np.unique(es.parity_labels)) <= {-1.0, 1.0}
        assert len(es) == spec.dim


def test_rejects_non_hermitian():
    with pytest.raises(ValueError):
        eigensystem(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_degenerate_clusters():
    assert degenerate_clusters([0.0, 1e-10, 1.0, 2.0, 2.0, 2.0]) == [[0, 1], [3, 4, 5]]


def test_two_level_oracle():
    # one qubit, one mode, cutoff 1, even sector: {|u,0>, |d,1>}
    d, g = 0.3, 0.2
    p = ModelParams([d], [1.0], [[g]])
    es = eigensystem(hamiltonian_rabi_stark(SpaceSpec(1, 1, 1), p), 1, SpaceSpec(1, 1, 1))
    mean, half = (d + 1 - d) / 2, np.hypot((d - (1 - d)) / 2, g)
    assert np.allclose(es.energies, [mean - half, mean + half])


def test_tracks_cross_without_swapping():
    # two uncoupled parities do not interact; in the full space the levels
    # cross, and tracking must keep each state on its own line
    spec = SpaceSpec(1, 1, 2)
    grid = np.linspace(0.0, 1.0, 41)
    sw = sweep_spectrum(spec, lambda x: ModelParams([x], [0.5], [[0.0]]), grid, sector=None)
    slopes = np.diff(sw.energies, axis=0) / np.diff(grid)[:, None]
    assert np.allclose(slopes, slopes[0])


def test_flat_line_and_law_along_passage():
    s = standard_trajectory("fig2_stark")
    spec = SpaceSpec(2, 2, 6, "total")
    sw = sweep_schedule(s, spec, 61, probes=dark_state_probes(spec, s))
    ref = reference_track(sw)
    assert np.ptp(sw.energies[:, ref]) < 1e-8
    assert np.allclose(sw.energies[:, ref], 1.0)
    law = matrix_element_law_check(sw, s, ref)
    assert law.max_relation_residual < 1e-8
    assert law.passes
    assert np.max(np.abs(sw.nb_labels["n_b2"][:, ref])) < 1e-8
    text = export_sweep(sw)
    assert text.count("\n") == 61 + 5


def test_ratio_matches_direct_formula():
    s = standard_trajectory("fig3_stark_asym")
    spec = SpaceSpec(2, 2, 4, "total")
    t = 0.4 * s.duration
    p = s.params_at(t)
    h = hamiltonian_rabi_stark(spec, p)
    es = eigensystem(h, 1, spec)
    probe = dark_state_probes(spec, s)(t, p)
    r = adiabatic_ratio(s.hdot(spec, t), es, probe["ref"], 1.0)
    m = int(np.nanargmax(r.ratio))
    direct = abs(es.states[:, m].conj() @ s.hdot(spec, t) @ probe["ref"]) / (es.energies[m] - 1.0) ** 2
    assert np.isclose(r.ratio[m], direct)
    assert np.sum(r.degenerate) == 1


def test_gap_exclusion_rules():
    s = standard_trajectory("fig3_stark_asym")
    spec = SpaceSpec(2, 2, 6, "total")
    sw = sweep_schedule(s, spec, 101, probes=dark_state_probes(spec, s))
    ref = reference_track(sw)
    literal = effective_min_gap(sw, ref, "symmetry")
    ratio = effective_min_gap(sw, ref, "ratio")
    assert literal.gap < 1e-6  # the level degenerate at g = 0 survives the literal rule
    assert 0.6 < ratio.gap < 0.66
    r = sweep_ratios(sw, ref)
    assert np.all(np.isnan(r[:, ref]))
    with pytest.raises(ValueError):
        effective_min_gap(sw, ref, "other")


def test_free_mode_labels_are_integers():
    s = standard_trajectory("fig1_rabi")
    spec = SpaceSpec(2, 2, 4, "total")
    sw = sweep_schedule(s, spec, 21, label_ops=bogoliubov_labels(spec, s.nodes[-1].g[:, 0]))
    lab = sw.nb_labels["n_b2"][1:]
    assert np.max(np.abs(lab - np.rint(lab))) < 1e-8
